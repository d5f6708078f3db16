"""The coverage game: an adversary over requirement triplets against an
optimistic policy player, run until every requirement ``c`` is met.

Requirements are grouped by magnitude into nested sets
``X_k = {c > c_min 2^k}``; once everything outside ``X_k`` is covered the
adversary restarts on ``X_k`` only. Planner statistics persist across
restarts.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .flow_lp import TargetFunction
from .mdp import EpisodeDataset, TabularMdp, VisitCounts, max_reach_table

DEFAULT_MAX_ROUNDS = 10_000_000


class CapExceededError(RuntimeError):
    """The round cap was hit before coverage; ``run`` holds the partial run."""

    def __init__(self, msg: str, run: "CovGameRun"):
        super().__init__(msg)
        self.run = run


@dataclass
class CovGameRun:
    dataset: EpisodeDataset
    stop_round: int
    phase_trace: list
    counts: VisitCounts
    covered: bool
    reward_sums: np.ndarray = field(repr=False, default=None)
    transition_counts: np.ndarray = field(repr=False, default=None)
    loss_range: tuple = (math.nan, math.nan)

    @property
    def tau(self) -> int:
        return self.stop_round

    @property
    def phase_changes(self) -> int:
        return len(self.phase_trace)

    def records(self) -> list[dict]:
        out = [{"event": "restart", "round": int(t), "k": int(k)} for t, k in self.phase_trace]
        out.append({"event": "final", "tau": int(self.stop_round), "covered": self.covered,
                    "counts": self.counts.n.tolist()})
        return out

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")


def _target_array(c) -> np.ndarray:
    return TargetFunction(getattr(c, "c", c)).c


def c_min_of(c: np.ndarray) -> float:
    sup = c[c > 0]
    return max(float(sup.min()), 1.0) if sup.size else 1.0


def active_set(c, k: int) -> set:
    """``X_0`` is the support; ``X_k = {c > c_min 2^k}`` for k >= 1."""
    c = _target_array(c)
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        mask = c > 0
    else:
        mask = c > c_min_of(c) * 2.0 ** k
    return {tuple(int(i) for i in x) for x in np.argwhere(mask)}


def levels(c: np.ndarray) -> np.ndarray:
    """Smallest j >= 1 with c <= c_min 2^j on the support, 0 elsewhere."""
    cm = c_min_of(c)
    lev = np.zeros(c.shape, dtype=np.int64)
    sup = c > 0
    j = np.maximum(np.ceil(np.log2(c[sup] / cm) - 1e-12), 1).astype(np.int64)
    # guard the float log against off-by-one at exact powers of two
    j = np.where(c[sup] > cm * 2.0 ** j, j + 1, j)
    j = np.where((j > 1) & (c[sup] <= cm * 2.0 ** (j - 1)), j - 1, j)
    lev[sup] = j
    return lev


def max_phase_changes(c) -> int:
    c = _target_array(c)
    if not np.any(c > 0):
        return 0
    ratio = float(c.max()) / c_min_of(c)
    return max(math.ceil(math.log2(ratio)) if ratio > 1 else 0, 1)


def run_covgame(env: TabularMdp, c, delta: float, rng: np.random.Generator,
                beta_scale: float = 1.0, max_rounds: int = DEFAULT_MAX_ROUNDS,
                oracle: bool = False) -> CovGameRun:
    """Sample episodes until ``n >= c`` holds on every triplet.

    The planner runs at confidence ``delta / 2``. With ``oracle=True`` the
    planner is replaced by exact best responses on the true kernel (a test
    mode for the known-transition case).
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    c = _target_array(c)
    if c.shape != env.shape:
        raise ValueError("target shape does not match the MDP")
    W = max_reach_table(env)
    if np.any((c > 0) & (W[:, :, None] <= 0)):
        raise ValueError("target support contains unreachable triplets")
    H, S, A = env.shape
    log_term = math.log(2 * S * A * H / (delta / 2))
    status, t, ds_s, ds_a, ds_r, trace, n, m, rsum, lo, hi = _kernels.covgame_loop(
        env.p_cum, env.r, env.s1, env.p, c, levels(c), c_min_of(c), oracle,
        log_term, float(beta_scale), int(max_rounds), rng)
    run = CovGameRun(EpisodeDataset(ds_s.copy(), ds_a.copy(), ds_r.copy()), int(t),
                     [(int(a), int(b)) for a, b in trace], VisitCounts(n, int(t)),
                     bool(np.all(n >= c)), rsum, m,
                     (float(lo), float(hi)) if hi >= lo else (math.nan, math.nan))
    if status == _kernels.CAP_EXCEEDED:
        raise CapExceededError(f"coverage not reached within {max_rounds} rounds", run)
    return run
