"""No-regret learners composed by the coverage game.

``WmfState`` is an exponentially weighted forecaster over a finite support
with the adaptive small-loss rate ``xi = min(1/2, sqrt(ln K / (1 + L*)))``.
``UcbviStats`` holds the sufficient statistics of the optimistic planner
used with rewards that change from one episode to the next.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .mdp import Episode, Policy


# ---------------------------------------------------------------- WMF

@dataclass
class WmfState:
    support: list
    cumulative_loss: np.ndarray
    cumulative_alg_loss: float = 0.0
    learning_rate: float = 0.0
    weights: np.ndarray = field(default=None)
    rounds: int = 0

    def to_dict(self) -> dict:
        return {"support": [list(map(int, x)) if isinstance(x, tuple) else x
                            for x in self.support],
                "cumulative_loss": self.cumulative_loss.tolist(),
                "cumulative_alg_loss": self.cumulative_alg_loss,
                "learning_rate": self.learning_rate,
                "weights": self.weights.tolist(), "rounds": self.rounds}

    @classmethod
    def from_dict(cls, d: dict) -> "WmfState":
        return cls([tuple(x) if isinstance(x, list) else x for x in d["support"]], np.asarray(d["cumulative_loss"], float),
                   d["cumulative_alg_loss"], d["learning_rate"],
                   np.asarray(d["weights"], float), d["rounds"])


def wmf_rate(cumulative_loss: np.ndarray) -> float:
    K = cumulative_loss.size
    if K <= 1:
        return 0.0
    return min(0.5, math.sqrt(math.log(K) / (1.0 + float(cumulative_loss.min()))))


def wmf_init(support) -> WmfState:
    support = [tuple(int(i) for i in x) if isinstance(x, (tuple, list, np.ndarray)) else x
               for x in support]
    if not support:
        raise ValueError("WMF support must be nonempty")
    K = len(support)
    loss = np.zeros(K)
    return WmfState(support, loss, 0.0, wmf_rate(loss), np.full(K, 1.0 / K))


def wmf_update(state: WmfState, loss) -> WmfState:
    """Feed one loss vector.

    ``loss`` is either a dense array over the support or a mapping from
    support elements to values; missing entries count as zero.
    """
    K = len(state.support)
    if isinstance(loss, dict):
        pos = {x: i for i, x in enumerate(state.support)}
        vec = np.zeros(K)
        for key, v in loss.items():
            vec[pos[key]] = v
    else:
        vec = np.asarray(loss, dtype=float)
        if vec.shape != (K,):
            raise ValueError("loss vector does not match the support")
    if np.any(vec < 0) or np.any(vec > 1) or not np.all(np.isfinite(vec)):
        raise ValueError("losses must lie in [0, 1]")
    alg = float(state.weights @ vec)
    cum = state.cumulative_loss + vec
    w = np.empty(K)
    xi = _kernels.wmf_weights(cum, w)
    return WmfState(state.support, cum, state.cumulative_alg_loss + alg, xi, w,
                    state.rounds + 1)


def wmf_regret(state: WmfState) -> float:
    """Realised regret against the best fixed support element."""
    return state.cumulative_alg_loss - float(state.cumulative_loss.min())


# ---------------------------------------------------------------- UCBVI

def beta(n, delta: float, S: int, A: int, H: int, scale: float = 1.0):
    """Confidence threshold log(2SAH/delta) + S log(8e(n+1))."""
    n = np.asarray(n, dtype=float)
    val = scale * (math.log(2 * S * A * H / delta) + S * np.log(8 * math.e * (n + 1.0)))
    return float(val) if val.ndim == 0 else val


def regret_pi(T, delta: float, S: int, A: int, H: int, scale: float = 1.0) -> float:
    """Anytime regret bound of the optimistic planner at horizon T."""
    return scale * 65536.0 * S * A * H ** 2 * (math.log(2 * S * A * H / delta) + 6 * S) \
        * math.log(T + 1.0) ** 2


@dataclass
class UcbviStats:
    n: np.ndarray
    m: np.ndarray
    reward_sums: np.ndarray

    @classmethod
    def zeros(cls, H: int, S: int, A: int) -> "UcbviStats":
        return cls(np.zeros((H, S, A), dtype=np.int64),
                   np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64),
                   np.zeros((H, S, A)))

    @property
    def shape(self):
        return self.n.shape

    @property
    def p_hat(self) -> np.ndarray:
        n = self.n[: self.m.shape[0], :, :, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, self.m / np.maximum(n, 1), 0.0)

    @property
    def r_hat(self) -> np.ndarray:
        return self.reward_sums / np.maximum(self.n, 1)

    def to_dict(self) -> dict:
        return {"n": self.n.tolist(), "m": self.m.tolist(),
                "reward_sums": self.reward_sums.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "UcbviStats":
        return cls(np.asarray(d["n"], np.int64), np.asarray(d["m"], np.int64),
                   np.asarray(d["reward_sums"], float))


def ucbvi_update(stats: UcbviStats, episode: Episode) -> UcbviStats:
    n, m, rs = stats.n.copy(), stats.m.copy(), stats.reward_sums.copy()
    H = n.shape[0]
    for h in range(H):
        s, a = episode.states[h], episode.actions[h]
        n[h, s, a] += 1
        rs[h, s, a] += episode.rewards[h]
        if h < H - 1:
            m[h, s, a, episode.states[h + 1]] += 1
    return UcbviStats(n, m, rs)


def check_admissible(reward: np.ndarray, tol: float = 1e-9) -> None:
    """Rewards must lie in [0, 1] with at most unit best-case return.

    A probability vector over triplets satisfies this, and so do the
    indicator rewards of a single stage-state pair.
    """
    if np.any(reward < -tol) or np.any(reward > 1 + tol):
        raise ValueError("rewards must lie in [0, 1]")
    if float(reward.max(axis=(1, 2)).sum()) > 1 + tol:
        raise ValueError("reward admits returns above 1")


def ucbvi_plan(stats: UcbviStats, reward, delta: float, scale: float = 1.0):
    """Optimistic Q-values and the greedy deterministic policy."""
    reward = np.asarray(reward, dtype=float)
    H, S, A = stats.shape
    if reward.shape != (H, S, A):
        raise ValueError("reward shape does not match the statistics")
    check_admissible(reward)
    log_term = math.log(2 * S * A * H / delta)
    beta_tab = scale * (log_term + S * np.log(8 * math.e * (stats.n + 1.0)))
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    act = np.zeros((H, S), dtype=np.int64)
    p_hat = stats.p_hat if H > 1 else np.zeros((0, S, A, S))
    _kernels.ucbvi_backward(np.ascontiguousarray(p_hat), stats.n, beta_tab,
                            reward, Q, V, act)
    return Q, Policy.from_actions(act, A)
