"""Confidence intervals on maximal visitation probabilities.

For a stage-state pair the optimistic planner is run on the indicator reward
of that pair; the visit count after ``T`` episodes brackets
``W_h(s) = max_pi P^pi(s_h = s)`` by

    lower = (n / (2T) - eps0 / 16) v 0,    upper = (2n / T + eps0 / 4) ^ 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .learners import regret_pi
from .mdp import TabularMdp

T_CAP = 10 ** 12


@dataclass(frozen=True)
class ReachInterval:
    lower: float
    upper: float
    episodes: int
    visits: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.upper <= 1.0:
            raise ValueError(f"invalid interval [{self.lower}, {self.upper}]")

    def contains(self, w: float, tol: float = 1e-12) -> bool:
        return self.lower - tol <= w <= self.upper + tol

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "episodes": self.episodes,
                "visits": self.visits}


def horizon_T(eps0: float, delta: float, regret_fn: Callable[[float], float],
              cap: int = T_CAP) -> int:
    """Smallest T with ``4 R(T) + 6 log(4/delta) <= eps0 T / 4``.

    Raises ``OverflowError`` when the answer exceeds ``cap``.
    """
    if not 0 < eps0 <= 1:
        raise ValueError("eps0 must lie in (0, 1]")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    const = 6.0 * math.log(4.0 / delta)

    def ok(T: int) -> bool:
        return 4.0 * regret_fn(T) + const <= eps0 * T / 4.0

    hi = 1
    while not ok(hi):
        hi *= 2
        if hi > 2 * cap:
            raise OverflowError(f"horizon exceeds {cap:.0e} episodes")
    lo = hi // 2  # ok(lo) is false unless lo == 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    if hi > cap:
        raise OverflowError(f"horizon exceeds {cap:.0e} episodes")
    return hi


def regret_bound(S: int, A: int, H: int, delta: float, scale: float = 1.0):
    """The planner's anytime regret bound at confidence ``delta``, as a function of T."""
    return lambda T: regret_pi(T, delta, S, A, H, scale)


def reach_interval(visits: int, T: int, eps0: float) -> ReachInterval:
    lower = max(visits / (2.0 * T) - eps0 / 16.0, 0.0)
    upper = min(2.0 * visits / T + eps0 / 4.0, 1.0)
    return ReachInterval(lower, upper, int(T), int(visits))


def estimate_reachability(env: TabularMdp, target, eps0: float, delta: float,
                          rng: np.random.Generator, beta_scale: float = 1.0,
                          regret_scale: float | None = None) -> ReachInterval:
    """Interval around ``W_h(s)`` for ``target = (h, s)``.

    ``regret_scale`` multiplies the regret bound that sets the number of
    episodes; it defaults to ``beta_scale``.
    """
    h, s = int(target[0]), int(target[1])
    H, S, A = env.shape
    if regret_scale is None:
        regret_scale = beta_scale
    T = horizon_T(eps0, delta, regret_bound(S, A, H, delta / 2, regret_scale))
    reward = np.zeros(env.shape)
    reward[h, s, :] = 1.0
    log_term = math.log(2 * S * A * H / (delta / 2))
    n = _kernels.ucbvi_fixed_loop(env.p_cum, env.r, env.s1, reward, T, log_term,
                                  float(beta_scale), rng)
    return reach_interval(int(n[h, s].sum()), T, eps0)


def estimate_all(env: TabularMdp, eps0: float, delta: float, rng: np.random.Generator,
                 beta_scale: float = 1.0, regret_scale: float | None = None) -> dict:
    """Intervals for every (h, s), sharing one generator sequentially."""
    return {(h, s): estimate_reachability(env, (h, s), eps0, delta, rng, beta_scale,
                                          regret_scale)
            for h in range(env.H) for s in range(env.S)}


def build_x_hat(intervals: dict, threshold: float, A: int) -> set:
    """All (h, s, a) whose state has a lower reach bound at least ``threshold``."""
    return {(h, s, a) for (h, s), iv in intervals.items() if iv.lower >= threshold
            for a in range(A)}
