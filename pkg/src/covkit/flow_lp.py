"""Occupancy-measure linear programs.

The coverage complexity of a target ``c`` is the value of the stochastic
minimum-flow problem

    minimize    sum_a eta_1(s1, a)
    subject to  sum_a eta_h(s, a) = sum_{s', a'} p_{h-1}(s | s', a') eta_{h-1}(s', a')
                eta_1(s, a) = 0 for s != s1,   eta >= c,

and ``rho* = eta* / value`` is an optimal coverage distribution. The same
navigation constraints, normalised to unit mass and intersected with count
caps, define the restricted polytopes searched during policy elimination.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp import Occupancy, TabularMdp, VisitCounts, max_reach_table
from .simplex import INFEASIBLE, OPTIMAL, LpResult, linprog

EMPTY = "empty"


@dataclass
class LpSolution:
    value: float
    primal: Occupancy | None
    status: str

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    @property
    def rho(self) -> np.ndarray | None:
        """Normalised occupancy ``eta / value`` for flows; ``None`` if undefined."""
        if self.primal is None:
            return None
        if self.primal.normalized:
            return self.primal.rho
        if self.value <= 0:
            return None
        return self.primal.rho / self.value

    def to_dict(self) -> dict:
        return {"value": None if not math.isfinite(self.value) else self.value,
                "status": self.status,
                "primal": None if self.primal is None else self.primal.rho.ravel().tolist()}


def _as_array(c, shape=None) -> np.ndarray:
    c = np.asarray(getattr(c, "c", c), dtype=float)
    if shape is not None and c.shape != tuple(shape):
        raise ValueError(f"target shape {c.shape} does not match {tuple(shape)}")
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise ValueError("target entries must be finite and nonnegative")
    return c


@dataclass
class TargetFunction:
    c: np.ndarray

    def __post_init__(self):
        self.c = _as_array(self.c)

    @property
    def support(self) -> np.ndarray:
        return self.c > 0

    @property
    def c_min(self) -> float:
        sup = self.c[self.c > 0]
        return max(float(sup.min()), 1.0) if sup.size else 1.0

    @property
    def c_max(self) -> float:
        return float(self.c.max()) if self.c.size else 0.0

    def to_dict(self) -> dict:
        return {"c": self.c.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TargetFunction":
        return cls(np.asarray(d["c"], dtype=float))


def _navigation_rows(p: np.ndarray, s1: int, free: np.ndarray):
    """Equality rows ``A @ x = 0`` over the free variables for stages h >= 2.

    Returns the matrix and the flat index map ``idx[h, s, a]`` (-1 when fixed
    to zero).
    """
    H, S, A = free.shape
    idx = np.full(free.shape, -1, dtype=np.int64)
    idx[free] = np.arange(int(free.sum()))
    nv = int(free.sum())
    rows = []
    for h in range(1, H):
        prev = np.nonzero(free[h - 1])
        prev_cols = idx[h - 1][prev]
        inflow = p[h - 1][prev]  # (n_prev, S)
        for s in range(S):
            row = np.zeros(nv)
            cols = idx[h, s][free[h, s]]
            row[cols] = 1.0
            row[prev_cols] -= inflow[:, s]
            if np.any(row != 0.0):
                rows.append(row)
    A_eq = np.array(rows).reshape(-1, nv)
    return A_eq, idx


def phi_star(mdp: TabularMdp, c) -> LpSolution:
    """Coverage complexity and an optimal flow for target ``c``."""
    c = _as_array(c, mdp.shape)
    if not np.any(c > 0):
        return LpSolution(0.0, Occupancy(np.zeros(mdp.shape), normalized=False), OPTIMAL)
    W = max_reach_table(mdp)
    reach = np.broadcast_to(W[:, :, None] > 0, mdp.shape)
    if np.any((c > 0) & ~reach):
        return LpSolution(math.inf, None, INFEASIBLE)
    free = reach.copy()
    A_eq, idx = _navigation_rows(mdp.p, mdp.s1, free)
    cv = c[free]
    nv = cv.size
    obj = np.zeros(nv)
    obj[idx[0, mdp.s1]] = 1.0
    # eta = c + y with y >= 0
    res = linprog(obj, A_eq=A_eq, b_eq=-(A_eq @ cv))
    if res.status != OPTIMAL:
        return LpSolution(math.inf, None, res.status)
    eta = np.zeros(mdp.shape)
    eta[free] = cv + res.x
    value = float(eta[0, mdp.s1].sum())
    return LpSolution(value, Occupancy(eta, normalized=False), OPTIMAL)


def coverage_bounds(mdp: TabularMdp, c) -> tuple[float, float, float]:
    """The three nested bounds around the coverage complexity."""
    c = _as_array(c, mdp.shape)
    b1 = float(c.sum(axis=(1, 2)).max())
    b2 = 0.0
    for h in range(mdp.H):
        if not np.any(c[h] > 0):
            continue
        ch = np.zeros_like(c)
        ch[h] = c[h]
        b2 += phi_star(mdp, ch).value
    W = max_reach_table(mdp)
    Wsa = np.broadcast_to(W[:, :, None], mdp.shape)
    sup = c > 0
    if np.any(sup & (Wsa <= 0)):
        return b1, math.inf, math.inf
    b3 = float(np.sum(c[sup] / Wsa[sup]))
    return b1, b2, b3


def concentrability(mdp: TabularMdp, rho) -> float:
    rho = np.asarray(getattr(rho, "rho", rho), dtype=float)
    W = np.broadcast_to(max_reach_table(mdp)[:, :, None], mdp.shape)
    mask = W > 0
    if np.any(rho[mask] <= 0):
        return math.inf
    return float(np.max(W[mask] / rho[mask]))


class CappedPolytope:
    """Occupancies of the empirical MDP with ``rho <= 2^-k n``.

    Optionally intersected with ``rho @ r_hat >= v_lower``. Built once and
    maximised against several objectives. Triplets without visits carry no
    mass.
    """

    def __init__(self, p_hat, r_hat, counts, k: int | None, v_lower: float | None = None,
                 s1: int = 0):
        n = np.asarray(getattr(counts, "n", counts), dtype=float)
        r_hat = np.asarray(r_hat, dtype=float)
        H, S, A = n.shape
        self.shape = (H, S, A)
        self.s1 = s1
        self.r_hat = r_hat
        # k=None: no caps, only triplets with data are usable
        cap = n * 2.0 ** (-k) if k is not None else np.where(n > 0, np.inf, 0.0)
        free = cap > 0
        free[0] = False
        free[0, s1] = cap[0, s1] > 0
        self.free = free
        A_eq, idx = _navigation_rows(np.asarray(p_hat, dtype=float), s1, free)
        nv = int(free.sum())
        self.idx = idx
        norm = np.zeros(nv)
        norm[idx[0, s1][free[0, s1]]] = 1.0
        self.A_eq = np.vstack([A_eq, norm[None, :]]) if nv else np.zeros((0, 0))
        self.b_eq = np.zeros(self.A_eq.shape[0])
        if self.A_eq.shape[0]:
            self.b_eq[-1] = 1.0
        capv = cap[free]
        binding = capv < 1.0
        ub_rows = np.eye(nv)[binding]
        ub_rhs = capv[binding]
        if v_lower is not None and math.isfinite(v_lower):
            ub_rows = np.vstack([ub_rows, -r_hat[free][None, :]])
            ub_rhs = np.append(ub_rhs, -v_lower)
        self.A_ub, self.b_ub = ub_rows, ub_rhs
        self.nv = nv

    def maximize(self, objective) -> LpSolution:
        if self.nv == 0:
            return LpSolution(-math.inf, None, EMPTY)
        obj = np.asarray(objective, dtype=float)[self.free]
        res: LpResult = linprog(obj, self.A_ub, self.b_ub, self.A_eq, self.b_eq, maximize=True)
        if res.status == INFEASIBLE:
            return LpSolution(-math.inf, None, EMPTY)
        if res.status != OPTIMAL:
            return LpSolution(math.inf, None, res.status)
        rho = np.zeros(self.shape)
        rho[self.free] = res.x
        return LpSolution(res.value, Occupancy(rho, normalized=True), OPTIMAL)


def constrained_best_value(p_hat, r_hat, counts, k: int, s1: int = 0) -> LpSolution:
    """Best estimated return among occupancies well covered by the counts."""
    poly = CappedPolytope(p_hat, r_hat, counts, k, None, s1)
    return poly.maximize(poly.r_hat)


def constrained_max_occupancy(p_hat, r_hat, counts, k: int, v_lower: float | None,
                              target, s1: int = 0) -> LpSolution:
    """Largest mass on ``target`` = (h, s, a) over the active occupancy set."""
    poly = CappedPolytope(p_hat, r_hat, counts, k, v_lower, s1)
    obj = np.zeros(poly.shape)
    obj[tuple(int(i) for i in target)] = 1.0
    return poly.maximize(obj)


def empirical_occupancy_ok(rho: np.ndarray, counts, k: int, r_hat, v_lower: float,
                           tol: float = 1e-9) -> bool:
    """Whether ``rho`` meets the cap and value constraints of the active set."""
    n = np.asarray(getattr(counts, "n", counts), dtype=float)
    if np.any(rho > n * 2.0 ** (-k) + tol):
        return False
    return float(np.sum(rho * r_hat)) >= v_lower - tol


__all__ = [
    "LpSolution", "TargetFunction", "phi_star", "coverage_bounds", "concentrability",
    "CappedPolytope", "constrained_best_value", "constrained_max_occupancy",
    "empirical_occupancy_ok", "VisitCounts",
]
