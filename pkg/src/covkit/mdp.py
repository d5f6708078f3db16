"""Tabular episodic MDPs: representation, exact dynamic programming, simulation.

Stages, states and actions are 0-based throughout. Transition kernels have
shape ``(H - 1, S, A, S)`` since the stage-H transition is never used.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import _kernels as K

ROW_TOL = 1e-9


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TabularMdp:
    p: np.ndarray
    r: np.ndarray
    s1: int = 0

    def __post_init__(self):
        p = np.ascontiguousarray(self.p, dtype=float)
        r = np.ascontiguousarray(self.r, dtype=float)
        if r.ndim != 3:
            raise DimensionError("reward means must have shape (H, S, A)")
        H, S, A = r.shape
        if H < 1 or S < 1 or A < 1:
            raise DimensionError("S, A and H must be positive")
        if p.size == 0:
            p = np.zeros((H - 1, S, A, S))
        if p.shape != (H - 1, S, A, S):
            raise DimensionError(f"transitions have shape {p.shape}, expected {(H - 1, S, A, S)}")
        if np.any(p < 0) or np.any(np.abs(p.sum(-1) - 1.0) > ROW_TOL):
            raise ValueError("every transition row must be a probability vector")
        if np.any(r < 0) or np.any(r > 1) or not np.all(np.isfinite(r)):
            raise ValueError("reward means must lie in [0, 1]")
        if not 0 <= self.s1 < S:
            raise DimensionError("initial state out of range")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s1", int(self.s1))
        cum = np.cumsum(p, axis=-1)
        if cum.size:
            cum[..., -1] = 1.0
        object.__setattr__(self, "_p_cum", cum)

    @property
    def H(self) -> int:
        return self.r.shape[0]

    @property
    def S(self) -> int:
        return self.r.shape[1]

    @property
    def A(self) -> int:
        return self.r.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.r.shape

    @property
    def p_cum(self) -> np.ndarray:
        return self._p_cum

    def with_transitions(self, p: np.ndarray) -> "TabularMdp":
        return TabularMdp(p, self.r, self.s1)

    def to_dict(self) -> dict:
        return {"S": self.S, "A": self.A, "H": self.H, "s1": self.s1,
                "p": self.p.tolist(), "r": self.r.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMdp":
        S, A, H = int(d["S"]), int(d["A"]), int(d["H"])
        p = np.asarray(d["p"], dtype=float) if H > 1 else np.zeros((0, S, A, S))
        r = np.asarray(d["r"], dtype=float)
        if r.shape != (H, S, A):
            raise DimensionError("reward array does not match S, A, H")
        return cls(p.reshape(H - 1, S, A, S), r, int(d.get("s1", 0)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TabularMdp":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __eq__(self, other):
        if not isinstance(other, TabularMdp):
            return NotImplemented
        return (self.s1 == other.s1 and np.array_equal(self.p, other.p)
                and np.array_equal(self.r, other.r))

    def tobytes(self) -> bytes:
        return np.int64(self.s1).tobytes() + self.p.tobytes() + self.r.tobytes()


@dataclass(eq=False)
class Policy:
    """Per-stage action distributions ``probs[h, s, a]``."""

    probs: np.ndarray
    deterministic: bool = False

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.ndim != 3:
            raise DimensionError("policy must have shape (H, S, A)")
        if np.any(self.probs < 0) or np.any(np.abs(self.probs.sum(-1) - 1.0) > 1e-12):
            raise ValueError("policy rows must be probability vectors")

    @classmethod
    def from_actions(cls, actions, A: int) -> "Policy":
        actions = np.asarray(actions, dtype=np.int64)
        H, S = actions.shape
        probs = np.zeros((H, S, A))
        probs[np.arange(H)[:, None], np.arange(S)[None, :], actions] = 1.0
        return cls(probs, deterministic=True)

    @classmethod
    def uniform(cls, H: int, S: int, A: int) -> "Policy":
        return cls(np.full((H, S, A), 1.0 / A))

    @property
    def actions(self) -> np.ndarray:
        """Greedy action per (h, s); exact for deterministic policies."""
        return self.probs.argmax(-1)

    @property
    def shape(self):
        return self.probs.shape


@dataclass(eq=False)
class Occupancy:
    rho: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)

    @property
    def mass(self) -> float:
        return float(self.rho[0].sum())

    def check(self, mdp: TabularMdp, tol: float = 1e-8) -> None:
        """Raise ``ValueError`` if the navigation constraints fail."""
        rho = self.rho
        if rho.shape != mdp.shape:
            raise DimensionError("occupancy shape does not match the MDP")
        if np.any(rho < -tol):
            raise ValueError("negative occupancy mass")
        off = np.delete(rho[0], mdp.s1, axis=0)
        if np.any(np.abs(off) > tol):
            raise ValueError("stage-1 mass outside the initial state")
        for h in range(1, mdp.H):
            inflow = np.einsum("sa,sat->t", rho[h - 1], mdp.p[h - 1])
            if np.any(np.abs(rho[h].sum(-1) - inflow) > tol):
                raise ValueError(f"navigation constraint violated at stage {h}")
        if self.normalized and np.any(np.abs(rho.sum(axis=(1, 2)) - 1.0) > 1e-9):
            raise ValueError("stage masses do not sum to one")


@dataclass
class Episode:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __len__(self):
        return len(self.states)


@dataclass
class VisitCounts:
    n: np.ndarray
    episodes: int = 0

    @classmethod
    def zeros(cls, H: int, S: int, A: int) -> "VisitCounts":
        return cls(np.zeros((H, S, A), dtype=np.int64), 0)

    def add(self, ep: Episode) -> None:
        H = len(ep.states)
        self.n[np.arange(H), ep.states, ep.actions] += 1
        self.episodes += 1

    def covers(self, c: np.ndarray) -> bool:
        return bool(np.all(self.n >= c))


@dataclass
class EpisodeDataset:
    """Trajectories stored column-wise: ``states[t, h]`` etc."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    @classmethod
    def empty(cls, H: int) -> "EpisodeDataset":
        return cls(np.zeros((0, H), np.int16), np.zeros((0, H), np.int16), np.zeros((0, H), np.int8))

    @classmethod
    def from_episodes(cls, episodes: Sequence[Episode], H: int) -> "EpisodeDataset":
        if not episodes:
            return cls.empty(H)
        return cls(np.array([e.states for e in episodes], np.int16),
                   np.array([e.actions for e in episodes], np.int16),
                   np.array([e.rewards for e in episodes], np.int8))

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, i) -> Episode:
        return Episode(self.states[i].astype(np.int64), self.actions[i].astype(np.int64),
                       self.rewards[i].astype(np.int64))

    def __iter__(self) -> Iterator[Episode]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, idx) -> "EpisodeDataset":
        return EpisodeDataset(self.states[idx], self.actions[idx], self.rewards[idx])

    def counts(self, S: int, A: int) -> VisitCounts:
        T, H = self.states.shape
        n = np.zeros((H, S, A), dtype=np.int64)
        for h in range(H):
            np.add.at(n[h], (self.states[:, h], self.actions[:, h]), 1)
        return VisitCounts(n, T)

    def statistics(self, S: int, A: int):
        """Visit counts, next-state counts and reward sums."""
        T, H = self.states.shape
        n = self.counts(S, A).n
        m = np.zeros((max(H - 1, 0), S, A, S), dtype=np.int64)
        rsum = np.zeros((H, S, A))
        for h in range(H):
            np.add.at(rsum[h], (self.states[:, h], self.actions[:, h]), self.rewards[:, h])
            if h < H - 1:
                np.add.at(m[h], (self.states[:, h], self.actions[:, h], self.states[:, h + 1]), 1)
        return n, m, rsum

    @staticmethod
    def concat(parts: Sequence["EpisodeDataset"]) -> "EpisodeDataset":
        return EpisodeDataset(np.concatenate([d.states for d in parts]),
                              np.concatenate([d.actions for d in parts]),
                              np.concatenate([d.rewards for d in parts]))


def _check_policy(mdp: TabularMdp, policy: Policy) -> None:
    if policy.probs.shape != mdp.shape:
        raise DimensionError(f"policy shape {policy.probs.shape} does not match MDP {mdp.shape}")


def visitation_distribution(mdp: TabularMdp, policy: Policy) -> Occupancy:
    _check_policy(mdp, policy)
    return Occupancy(K.forward_occupancy(mdp.p, policy.probs, mdp.s1), normalized=True)


def max_reach_table(mdp: TabularMdp) -> np.ndarray:
    """``W[h, s] = max_pi P^pi(s_h = s)`` for every stage and state."""
    H, S, A = mdp.shape
    W = np.zeros((H, S))
    for h in range(H):
        V = np.eye(S)  # V[target, s]: 1 if s is the target at stage h
        for hp in range(h - 1, -1, -1):
            # Q[target, s, a] = sum_s' p(s'|s,a) V[target, s']
            Q = np.einsum("sat,kt->ksa", mdp.p[hp], V)
            V = Q.max(-1)
        W[h] = V[:, mdp.s1]
    return W


def max_reach(mdp: TabularMdp, target) -> float:
    """Largest probability any policy assigns to the target (h, s) or (h, s, a)."""
    h, s = int(target[0]), int(target[1])
    if not (0 <= h < mdp.H and 0 <= s < mdp.S):
        raise DimensionError("target out of range")
    indicator = np.zeros(mdp.shape)
    if len(target) == 3:
        indicator[h, s, int(target[2])] = 1.0
    else:
        indicator[h, s, :] = 1.0
    _, V, _ = K.backward_induction(mdp.p, indicator)
    return float(min(V[0, mdp.s1], 1.0))


def _check_reward(mdp: TabularMdp, reward) -> np.ndarray:
    reward = np.asarray(reward, dtype=float)
    if reward.shape != mdp.shape:
        raise DimensionError("reward shape does not match the MDP")
    if not np.all(np.isfinite(reward)):
        raise ValueError("reward entries must be finite")
    return reward


def policy_value(mdp: TabularMdp, policy: Policy, reward) -> float:
    reward = _check_reward(mdp, reward)
    return float(np.sum(visitation_distribution(mdp, policy).rho * reward))


def optimal_value(mdp: TabularMdp, reward) -> tuple[float, Policy]:
    reward = _check_reward(mdp, reward)
    _, V, act = K.backward_induction(mdp.p, reward)
    return float(V[0, mdp.s1]), Policy.from_actions(act, mdp.A)


def policy_gap(mdp: TabularMdp, policy: Policy, reward) -> float:
    return optimal_value(mdp, reward)[0] - policy_value(mdp, policy, reward)


def _policy_table(policy: Policy):
    if policy.deterministic:
        return policy.actions[:, :, None].astype(float), False
    cum = np.cumsum(policy.probs, axis=-1)
    cum[..., -1] = 1.0
    return cum, True


def sample_episode(mdp: TabularMdp, policy: Policy, rng: np.random.Generator) -> Episode:
    _check_policy(mdp, policy)
    table, stochastic = _policy_table(policy)
    H = mdp.H
    s = np.zeros(H, np.int64)
    a = np.zeros(H, np.int64)
    r = np.zeros(H, np.int64)
    K.sample_episode_into(mdp.p_cum, mdp.r, mdp.s1, table, stochastic, rng, s, a, r)
    return Episode(s, a, r)


def sample_episodes(mdp: TabularMdp, policy: Policy, rng: np.random.Generator,
                    n_episodes: int) -> EpisodeDataset:
    """Draw many episodes at once; same stream as repeated ``sample_episode``."""
    _check_policy(mdp, policy)
    table, stochastic = _policy_table(policy)
    H = mdp.H
    s = np.zeros((n_episodes, H), np.int64)
    a = np.zeros((n_episodes, H), np.int64)
    r = np.zeros((n_episodes, H), np.int64)
    K.sample_many(mdp.p_cum, mdp.r, mdp.s1, table, stochastic, rng, n_episodes, s, a, r)
    return EpisodeDataset(s.astype(np.int16), a.astype(np.int16), r.astype(np.int8))


def extract_policy(occ: Occupancy | np.ndarray) -> Policy:
    """Stochastic policy realising an occupancy; uniform where a state has no mass."""
    rho = occ.rho if isinstance(occ, Occupancy) else np.asarray(occ, dtype=float)
    if np.any(rho < 0):
        raise ValueError("occupancy has negative entries")
    H, S, A = rho.shape
    tot = rho.sum(-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = np.where(tot > 0, rho / np.where(tot > 0, tot, 1.0), 1.0 / A)
    probs /= probs.sum(-1, keepdims=True)
    return Policy(probs)


def empirical_kernel(m: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Maximum-likelihood transitions; unvisited rows default to uniform."""
    Hm1 = m.shape[0]
    S = m.shape[-1]
    cnt = n[:Hm1, :, :, None].astype(float)
    return np.where(cnt > 0, m / np.where(cnt > 0, cnt, 1.0), 1.0 / S)
