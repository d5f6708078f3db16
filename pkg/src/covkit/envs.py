"""Instance generators.

All generators return a validated ``TabularMdp`` with initial state 0 and are
deterministic functions of their arguments.
"""
from __future__ import annotations

import math

import numpy as np

from .mdp import TabularMdp


def _normalize(rows: np.ndarray) -> np.ndarray:
    rows = np.maximum(rows, 0.0)
    rows = rows / rows.sum(axis=-1, keepdims=True)
    # put the rounding residue on the largest entry so rows sum to 1 exactly
    j = rows.argmax(axis=-1)
    resid = 1.0 - rows.sum(axis=-1)
    np.put_along_axis(rows, j[..., None],
                      np.take_along_axis(rows, j[..., None], -1) + resid[..., None], -1)
    return rows


def gen_random_mdp(seed: int, S: int, A: int, H: int, alpha: float = 1.0) -> TabularMdp:
    """Dirichlet(alpha) transition rows and uniform reward means."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.full(S, float(alpha)), size=(max(H - 1, 0), S, A))
    p = _normalize(p.reshape(max(H - 1, 0), S, A, S))
    r = rng.uniform(size=(H, S, A))
    return TabularMdp(p, r, 0)


def gen_contextual_bandit(seed: int, S: int, A: int, H: int) -> TabularMdp:
    """Transitions depend on the state only: p_h(.|s, a) = p_h(.|s)."""
    rng = np.random.default_rng(seed)
    rows = _normalize(rng.dirichlet(np.ones(S), size=(max(H - 1, 0), S)).reshape(-1, S, S))
    p = np.repeat(rows[:, :, None, :], A, axis=2)
    r = rng.uniform(size=(H, S, A))
    return TabularMdp(p, r, 0)


def _ergodic_row(rng, S: int, lo: float, hi: float) -> np.ndarray:
    x = lo + (1.0 - S * lo) * rng.dirichlet(np.ones(S))
    # cap and hand the excess to the entries with slack
    for _ in range(4 * S):
        over = x > hi
        if not over.any():
            break
        excess = float((x[over] - hi).sum())
        x[over] = hi
        room = np.where(x < hi, hi - x, 0.0)
        x += excess * room / room.sum()
    return x


def gen_ergodic(seed: int, S: int, A: int, H: int, alpha_exp: float,
                beta_exp: float) -> TabularMdp:
    """Rows with max entry <= S^(alpha-1) and min entry >= (1 - S^(beta-1))/(S-1)."""
    if not 0 < beta_exp < alpha_exp < 1:
        raise ValueError("need 0 < beta < alpha < 1")
    if S < 2:
        raise ValueError("ergodic family needs S >= 2")
    hi = S ** (alpha_exp - 1.0)
    lo = (1.0 - S ** (beta_exp - 1.0)) / (S - 1)
    if S * lo > 1.0 + 1e-12 or S * hi < 1.0 - 1e-12 or lo > hi:
        raise ValueError(f"infeasible row constraints for S={S}, alpha={alpha_exp}, beta={beta_exp}")
    rng = np.random.default_rng(seed)
    p = np.empty((max(H - 1, 0), S, A, S))
    for idx in np.ndindex(p.shape[:-1]):
        p[idx] = _ergodic_row(rng, S, lo, hi)
    r = rng.uniform(size=(H, S, A))
    return TabularMdp(p, r, 0)


def gen_tree_mdp(seed: int, branching: int, H: int) -> TabularMdp:
    """Deterministic tree: node s at stage h moves to child s*b + a.

    The state space holds the widest layer, b^(H-1) states; the unused states
    of shallower layers are unreachable.
    """
    b = int(branching)
    S = b ** max(H - 1, 0)
    p = np.zeros((max(H - 1, 0), S, b, S))
    for h in range(H - 1):
        for s in range(S):
            for a in range(b):
                p[h, s, a, (s * b + a) % S] = 1.0
    rng = np.random.default_rng(seed)
    r = rng.uniform(size=(H, S, b))
    return TabularMdp(p, r, 0)


def gen_chain(S: int, A: int, H: int) -> TabularMdp:
    """Deterministic chain: action 0 advances, other actions reset to state 0."""
    p = np.zeros((max(H - 1, 0), S, A, S))
    for s in range(S):
        p[:, s, 0, min(s + 1, S - 1)] = 1.0
        p[:, s, 1:, 0] = 1.0
    r = np.zeros((H, S, A))
    r[:, S - 1, 0] = 1.0
    return TabularMdp(p, r, 0)


def gen_bandit(means) -> TabularMdp:
    """Single-state, single-stage bandit with Bernoulli arms."""
    means = np.asarray(means, dtype=float)
    return TabularMdp(np.zeros((0, 1, means.size, 1)), means.reshape(1, 1, -1), 0)


def two_block_sizes(S: int, A: int) -> tuple[int, int, int]:
    """Sizes (S1, S2, A1) of the informative and the dummy block."""
    S1 = max(1, int(round(math.log2(S))))
    S1 = min(S1, S - 2)
    S2 = S - 1 - S1
    A1 = max(1, min(A, int(round(math.log2(A))) if A > 1 else 1))
    return S1, S2, A1


def gen_two_block(Delta: float, S: int, A: int, H: int) -> TabularMdp:
    """Initial state followed by two sub-MDPs.

    Action 0 at the initial state pays ``Delta`` and enters a small block of
    about log2(S) states in which only about log2(A) actions are distinct;
    every other initial action pays nothing and enters a deterministic block
    with zero reward.
    """
    if not 0 < Delta <= 1:
        raise ValueError("Delta must lie in (0, 1]")
    if S < 3 or A < 2 or H < 2:
        raise ValueError("two-block instance needs S >= 3, A >= 2, H >= 2")
    S1, S2, A1 = two_block_sizes(S, A)
    b1 = np.arange(1, 1 + S1)
    b2 = np.arange(1 + S1, S)
    p = np.zeros((H - 1, S, A, S))
    r = np.zeros((H, S, A))
    r[0, 0, 0] = Delta
    for h in range(H - 1):
        p[h, 0, 0, b1] = 1.0 / S1
        p[h, 0, 1:, b2[0]] = 1.0
        p[h][np.ix_(b1, np.arange(A), b1)] = 1.0 / S1
        for i, s in enumerate(b2):
            for a in range(A):
                p[h, s, a, b2[(i * A + a + 1) % S2]] = 1.0
    if H > 1:
        p[:, 0, 0, :] = 0.0
        p[:, 0, 0, b1] = 1.0 / S1
    for h in range(H):
        for i, s in enumerate(b1):
            for a in range(A):
                r[h, s, a] = (1 + (i + a % A1) % 3) / 4.0
    # the initial state is only occupied at stage 1
    r[1:, 0, :] = 0.0
    return TabularMdp(_normalize(p), r, 0)


GENERATORS = {
    "random": gen_random_mdp,
    "contextual": gen_contextual_bandit,
    "ergodic": gen_ergodic,
    "tree": gen_tree_mdp,
    "chain": gen_chain,
    "two-block": gen_two_block,
    "bandit": gen_bandit,
}


def make_env(spec: dict) -> TabularMdp:
    """Build an MDP from ``{"generator": name, **params}`` or ``{"file": path}``."""
    spec = dict(spec)
    if "file" in spec:
        return TabularMdp.load(spec["file"])
    name = spec.pop("generator")
    if name not in GENERATORS:
        raise ValueError(f"unknown generator {name!r}")
    return GENERATORS[name](**spec)
