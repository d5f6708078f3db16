"""Proportional coverage exploration for reward-free learning.

After estimating which states are worth visiting, successive coverage games
collect ``2^k`` times each state's (upper) reachability until the empirical
model is accurate enough to plan for any reward.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .covgame import DEFAULT_MAX_ROUNDS, run_covgame
from .mdp import Policy, TabularMdp, empirical_kernel
from .reachability import build_x_hat, estimate_all

PCE_MAX_ROUNDS = 10 ** 8


def beta_rf(t, delta: float, S: int, A: int, H: int, scale: float = 1.0) -> float:
    """Reward-free threshold 4H^2 log(1/delta) + 24 S H^3 log(A(1+t))."""
    return scale * (4 * H ** 2 * math.log(1 / delta) + 24 * S * H ** 3 * math.log(A * (1.0 + t)))


def stop_width(t: int, k: int, delta: float, S: int, A: int, H: int, scale: float) -> float:
    return math.sqrt(H * beta_rf(t, delta / 3, S, A, H, scale) * 2.0 ** (4 - k))


def delta_budget(delta: float, S: int, H: int, phases: int) -> float:
    """Confidence spent by the reachability runs, burn-in, phases and the model."""
    return (S * H * delta / (3 * S * H) + delta / 6
            + sum(delta / (6 * (k + 1) ** 2) for k in range(1, phases + 1)) + delta / 3)


@dataclass
class PceResult:
    p_hat: np.ndarray
    total_episodes: int
    phases: int
    x_hat: set
    phase_log: list = field(default_factory=list)
    reach_episodes: int = 0
    burn_in_episodes: int = 0
    counts: np.ndarray = field(default=None, repr=False)
    intervals: dict = field(default_factory=dict, repr=False)
    empty_x_hat: bool = False

    @property
    def tau(self) -> int:
        return self.total_episodes

    def to_dict(self) -> dict:
        return {"p_hat": self.p_hat.tolist(), "tau": self.total_episodes,
                "kappa": self.phases, "x_hat": sorted(list(map(list, self.x_hat))),
                "reach_episodes": self.reach_episodes,
                "burn_in_episodes": self.burn_in_episodes,
                "empty_x_hat": self.empty_x_hat,
                "phase_log": [{"k": e["k"], "episodes": e["episodes"], "t": e["t"],
                               "target": e["target"].tolist()} for e in self.phase_log]}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def run_pce(env: TabularMdp, eps: float, delta: float, rng: np.random.Generator,
            beta_scale: float = 1.0, regret_scale: float | None = None,
            max_phases: int = 64, max_rounds: int = PCE_MAX_ROUNDS) -> PceResult:
    """Reward-free exploration; returns the empirical kernel and bookkeeping.

    ``regret_scale`` scales the regret bound that sizes the reachability
    runs (defaults to ``beta_scale``).
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    H, S, A = env.shape
    eps0 = eps / (4 * S * H ** 2)
    intervals = estimate_all(env, eps0, delta / (3 * S * H), rng, beta_scale, regret_scale)
    reach_eps = sum(iv.episodes for iv in intervals.values())
    x_hat = build_x_hat(intervals, eps / (32 * S * H ** 2), A)
    mask = np.zeros(env.shape, dtype=bool)
    for x in x_hat:
        mask[x] = True
    if not x_hat:
        uniform = np.full((max(H - 1, 0), S, A, S), 1.0 / S)
        return PceResult(uniform, reach_eps, 0, x_hat, [], reach_eps, 0,
                         np.zeros(env.shape, np.int64), intervals, True)
    upper = np.zeros(env.shape)
    for (h, s), iv in intervals.items():
        upper[h, s, :] = iv.upper

    burn = run_covgame(env, mask.astype(float), delta / 6, rng, beta_scale, max_rounds)
    n = burn.counts.n.copy()
    m = burn.transition_counts.copy()
    t = burn.tau
    log = []
    k = 0
    while True:
        k += 1
        if k > max_phases:
            raise RuntimeError(f"PCE exceeded {max_phases} phases")
        c = 2.0 ** k * upper * mask
        run = run_covgame(env, c, delta / (6 * (k + 1) ** 2), rng, beta_scale, max_rounds)
        n += run.counts.n
        m += run.transition_counts
        t += run.tau
        log.append({"k": k, "target": c, "episodes": run.tau, "t": t, "counts": n.copy()})
        if stop_width(t, k, delta, S, A, H, beta_scale) <= eps:
            break
    return PceResult(empirical_kernel(m, n), reach_eps + t, k, x_hat, log, reach_eps,
                     burn.tau, n, intervals, False)


def rfe_plan(p_hat: np.ndarray, reward, s1: int = 0) -> Policy:
    """Greedy optimal policy of the empirical model for ``reward``."""
    reward = np.asarray(reward, dtype=float)
    _, _, act = _kernels.backward_induction(np.asarray(p_hat, dtype=float), reward)
    return Policy.from_actions(act, reward.shape[2])


def value_width(rho: np.ndarray, counts: np.ndarray, beta: float, support=None) -> float:
    """Closed-form sup of ``rho @ x`` over ``sum n x^2 <= beta``: sqrt(beta sum rho^2 / n)."""
    rho = np.asarray(rho, dtype=float)
    mask = rho > 0 if support is None else (np.asarray(support, bool) & (rho > 0))
    n = np.asarray(counts, dtype=float)[mask]
    if np.any(n <= 0):
        return math.inf
    return math.sqrt(beta * float(np.sum(rho[mask] ** 2 / n)))


__all__ = ["beta_rf", "run_pce", "rfe_plan", "PceResult", "delta_budget", "stop_width",
           "value_width", "DEFAULT_MAX_ROUNDS"]
