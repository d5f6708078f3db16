"""Best-policy identification by proportional coverage with implicit
elimination.

Each phase targets, for every triplet, the largest mass any still-active
occupancy puts on it (plus a confidence bonus), gathers those counts with a
coverage game, and shrinks the active set with a value lower bound. Policies
are never enumerated: the active set is a polytope described by linear
constraints on the empirical model.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .covgame import run_covgame
from .flow_lp import EMPTY, CappedPolytope, TargetFunction
from .mdp import EpisodeDataset, Policy, TabularMdp, empirical_kernel, extract_policy, \
    max_reach_table

PRINCIPLE_MAX_ROUNDS = 10 ** 8


class PrincipleAbort(RuntimeError):
    """The active set became empty or an LP failed."""

    def __init__(self, msg: str, diagnostics: dict):
        super().__init__(msg)
        self.diagnostics = diagnostics


def beta_bpi(t, delta: float, S: int, A: int, H: int, scale: float = 1.0) -> float:
    """Threshold 16H^2 log(2/delta) + 96 SAH^3 log(1+t)."""
    return scale * (16 * H ** 2 * math.log(2 / delta) + 96 * S * A * H ** 3 * math.log(1.0 + t))


def deduction(t: int, k: int, delta: float, S: int, A: int, H: int, scale: float = 1.0) -> float:
    """Width sqrt(2^(2-k) H beta_bpi(t, delta/2)) used for the lower bound and stopping."""
    return math.sqrt(2.0 ** (2 - k) * H * beta_bpi(t, delta / 2, S, A, H, scale))


def prune_dataset(dataset: EpisodeDataset, c) -> EpisodeDataset:
    """Keep, in order, the episodes that visit a still-uncovered triplet."""
    c = np.asarray(getattr(c, "c", c), dtype=float)
    keep, n = _kernels.prune_pass(dataset.states, dataset.actions, c)
    if not np.all(n >= c):
        raise ValueError("dataset does not cover the target")
    return dataset.subset(keep)


@dataclass
class ActiveSet:
    """Constraints describing the active occupancies after a phase."""

    p_hat: np.ndarray
    r_hat: np.ndarray
    counts: np.ndarray
    k: int
    v_lower: float | None
    s1: int = 0

    def polytope(self) -> CappedPolytope:
        # phase 0 has neither caps nor a value constraint
        cap_k = self.k if self.k > 0 else None
        return CappedPolytope(self.p_hat, self.r_hat, self.counts, cap_k, self.v_lower, self.s1)

    def contains(self, rho: np.ndarray, tol: float = 1e-9) -> bool:
        if self.k > 0 and np.any(rho > self.counts * 2.0 ** (-self.k) + tol):
            return False
        if self.v_lower is not None and float(np.sum(rho * self.r_hat)) < self.v_lower - tol:
            return False
        return True


def lower_bound_value(p_hat, r_hat, counts, k: int, t_k: int, delta: float,
                      beta_scale: float = 1.0, s1: int = 0):
    """Value lower bound and the constrained argmax behind it.

    Returns ``(v_lower, solution)``; an empty polytope yields ``-inf`` and an
    ``empty`` status.
    """
    counts = np.asarray(getattr(counts, "n", counts))
    H, S, A = counts.shape
    sol = CappedPolytope(p_hat, r_hat, counts, k, None, s1).maximize(r_hat)
    if not sol.ok:
        return -math.inf, sol
    return sol.value - deduction(t_k, k, delta, S, A, H, beta_scale), sol


def principle_targets(prev: ActiveSet, k: int, t_prev: int, delta: float,
                      reachable: np.ndarray, beta_scale: float = 1.0) -> TargetFunction:
    """``c^k = 2^k min(sup_{rho in prev} rho + bonus, 1)`` on reachable triplets."""
    H, S, A = prev.counts.shape
    bonus = 2.0 * math.sqrt(H * beta_bpi(t_prev + S * A * H * 2 ** k, delta / 2, S, A, H,
                                         beta_scale) * 2.0 ** (1 - k))
    poly = prev.polytope()
    sup = np.zeros((H, S, A))
    for idx in zip(*np.nonzero(reachable & poly.free)):
        obj = np.zeros((H, S, A))
        obj[idx] = 1.0
        sol = poly.maximize(obj)
        if not sol.ok:
            raise PrincipleAbort(f"active set empty at phase {prev.k} ({sol.status})",
                                 {"phase": prev.k, "target": tuple(map(int, idx)),
                                  "status": sol.status})
        sup[idx] = sol.value
    c = 2.0 ** k * np.minimum(sup + bonus, 1.0) * reachable
    return TargetFunction(c)


@dataclass
class PrincipleResult:
    policy: Policy
    effective_episodes: int
    raw_episodes: int
    phases: int
    phase_log: list = field(default_factory=list)
    burn_in_episodes: int = 0

    @property
    def tau(self) -> int:
        return self.raw_episodes

    def lower_bounds(self) -> list[float]:
        return [e["v_lower"] for e in self.phase_log]

    def to_dict(self) -> dict:
        return {"policy": self.policy.probs.tolist(), "effective_episodes": self.effective_episodes,
                "raw_episodes": self.raw_episodes, "kappa": self.phases,
                "burn_in_episodes": self.burn_in_episodes,
                "phase_log": [{"k": e["k"], "T": e["T"], "d": e["d"], "t": e["t"],
                               "v_lower": e["v_lower"], "pruned": e["pruned"],
                               "lp_status": e["lp_status"], "target": e["target"].tolist()}
                              for e in self.phase_log]}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def run_principle(env: TabularMdp, eps: float, delta: float, rng: np.random.Generator,
                  beta_scale: float = 1.0, max_phases: int = 64,
                  max_rounds: int = PRINCIPLE_MAX_ROUNDS,
                  reachable: np.ndarray | None = None) -> PrincipleResult:
    """Return a policy that is ``eps``-optimal for the environment's reward.

    ``reachable`` (per triplet) defaults to the triplets whose state the true
    kernel can reach; requirements are placed only there.
    """
    if not 0 < eps:
        raise ValueError("eps must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    H, S, A = env.shape
    if reachable is None:
        reachable = np.broadcast_to(max_reach_table(env)[:, :, None] > 0, env.shape)
    reachable = np.asarray(reachable, dtype=bool)

    burn = run_covgame(env, reachable.astype(float), delta / 4, rng, beta_scale, max_rounds)
    n = burn.counts.n.copy()
    m = burn.transition_counts.copy()
    rsum = burn.reward_sums.copy()
    t = burn.tau
    raw = burn.tau
    active = ActiveSet(empirical_kernel(m, n), rsum / np.maximum(n, 1), n.copy(), 0, None,
                       env.s1)
    log = []
    k = 0
    while True:
        k += 1
        if k > max_phases:
            raise RuntimeError(f"PRINCIPLE exceeded {max_phases} phases")
        c = principle_targets(active, k, t, delta, reachable, beta_scale).c
        run = run_covgame(env, c, delta / (4 * (k + 1) ** 2), rng, beta_scale, max_rounds)
        T_k = run.tau
        raw += T_k
        pruned = T_k > S * A * H * 2 ** k
        if pruned:
            keep, _ = _kernels.prune_pass(run.dataset.states, run.dataset.actions, c)
            dn, dm, dr = _kernels.dataset_statistics(run.dataset.states, run.dataset.actions,
                                                     run.dataset.rewards, keep, S, A)
            d_k = int(keep.sum())
        else:
            dn, dm, dr = run.counts.n, run.transition_counts, run.reward_sums
            d_k = T_k
        del run
        n += dn
        m += dm
        rsum += dr
        t += d_k
        p_hat = empirical_kernel(m, n)
        r_hat = rsum / np.maximum(n, 1)
        v_lower, sol = lower_bound_value(p_hat, r_hat, n, k, t, delta, beta_scale, env.s1)
        entry = {"k": k, "target": c, "T": T_k, "d": d_k, "t": t, "v_lower": v_lower,
                 "pruned": pruned, "lp_status": sol.status, "p_hat": p_hat, "r_hat": r_hat,
                 "counts": n.copy(), "effective_counts": dn}
        log.append(entry)
        if sol.status == EMPTY or not sol.ok:
            raise PrincipleAbort(f"constrained value LP {sol.status} at phase {k}",
                                 {"phase": k, "status": sol.status, "log": log})
        active = ActiveSet(p_hat, r_hat, n.copy(), k, v_lower, env.s1)
        if deduction(t, k, delta, S, A, H, beta_scale) <= eps:
            # the value constraint never binds at the unconstrained argmax
            policy = extract_policy(sol.primal)
            return PrincipleResult(policy, t, raw, k, log, burn.tau)
