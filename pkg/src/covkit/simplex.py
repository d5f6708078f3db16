"""Dense-tableau primal simplex with Bland's anti-cycling rule.

Solves ``min/max c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq``
and ``x >= 0`` with a two-phase method. The problems handled by this package
have at most a few hundred variables, so a dense tableau is adequate and the
deterministic pivoting rule makes results reproducible bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

TOL = 1e-9


class LpError(RuntimeError):
    """Raised when the simplex iteration limit is exhausted."""


@dataclass
class LpResult:
    status: str
    value: float
    x: np.ndarray | None
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    colvals = T[:, col].copy()
    colvals[row] = 0.0
    nz = np.nonzero(colvals)[0]
    if nz.size:
        T[nz] -= np.outer(colvals[nz], T[row])


def _run_phase(T: np.ndarray, basis: np.ndarray, ncols: int, tol: float,
               max_iter: int) -> tuple[str, int]:
    """Iterate on tableau ``T`` whose last row holds reduced costs.

    Only the first ``ncols`` columns may enter the basis.
    """
    m = T.shape[0] - 1
    it = 0
    while True:
        cost = T[m, :ncols]
        candidates = np.nonzero(cost < -tol)[0]
        if candidates.size == 0:
            return OPTIMAL, it
        col = int(candidates[0])
        column = T[:m, col]
        pos = np.nonzero(column > tol)[0]
        if pos.size == 0:
            return UNBOUNDED, it
        ratios = T[pos, -1] / column[pos]
        best = ratios.min()
        tied = pos[ratios <= best + tol * max(1.0, abs(best))]
        row = int(tied[np.argmin(basis[tied])])
        _pivot(T, row, col)
        basis[row] = col
        it += 1
        if it > max_iter:
            raise LpError(f"simplex exceeded {max_iter} pivots")


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, *,
            maximize: bool = False, tol: float = TOL,
            max_iter: int = 100_000) -> LpResult:
    """Solve a linear program over the nonnegative orthant."""
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    if A_ub.shape[0] != b_ub.size or A_eq.shape[0] != b_eq.size:
        raise ValueError("constraint matrix and right-hand side sizes differ")
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A_ub)) and np.all(np.isfinite(A_eq))
            and np.all(np.isfinite(b_ub)) and np.all(np.isfinite(b_eq))):
        raise ValueError("LP data must be finite")

    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    obj = -c if maximize else c
    if m == 0:
        if np.any(obj < -tol):
            return LpResult(UNBOUNDED, np.inf if maximize else -np.inf, None)
        return LpResult(OPTIMAL, 0.0, np.zeros(n))

    # columns: original | slacks | artificials
    A = np.zeros((m, n + m_ub))
    A[:m_ub, :n] = A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    A[m_ub:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1.0
    b = np.where(neg, -b, b)

    need_art = np.ones(m, dtype=bool)
    basis = np.full(m, -1, dtype=np.int64)
    for i in range(m_ub):
        if not neg[i]:
            basis[i] = n + i
            need_art[i] = False
    art_rows = np.nonzero(need_art)[0]
    n_art = art_rows.size
    ncols = n + m_ub + n_art

    T = np.zeros((m + 1, ncols + 1))
    T[:m, :n + m_ub] = A
    T[:m, -1] = b
    for j, i in enumerate(art_rows):
        T[i, n + m_ub + j] = 1.0
        basis[i] = n + m_ub + j

    iterations = 0
    if n_art:
        # phase 1: minimise the sum of artificials
        T[m, :] = 0.0
        T[m, n + m_ub:ncols] = 1.0
        for i in art_rows:
            T[m] -= T[i]
        status, it = _run_phase(T, basis, ncols, tol, max_iter)
        iterations += it
        scale = max(1.0, float(np.abs(b).max()))
        if -T[m, -1] > 1e-7 * scale:
            return LpResult(INFEASIBLE, np.nan, None, iterations)
        # drive artificials out of the basis; drop redundant rows
        keep = np.ones(m + 1, dtype=bool)
        for i in range(m):
            if basis[i] >= n + m_ub:
                row = T[i, :n + m_ub]
                cand = np.nonzero(np.abs(row) > tol)[0]
                if cand.size:
                    _pivot(T, i, int(cand[0]))
                    basis[i] = int(cand[0])
                else:
                    keep[i] = False
        T = T[keep]
        basis = basis[keep[:m]]
        m = basis.size
        T = np.delete(T, np.s_[n + m_ub:ncols], axis=1)
        ncols = n + m_ub

    # phase 2
    T[m, :] = 0.0
    T[m, :n] = obj
    for i in range(m):
        cb = T[m, basis[i]]
        if cb != 0.0:
            T[m] -= cb * T[i]
    status, it = _run_phase(T, basis, ncols, tol, max_iter)
    iterations += it
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED, np.inf if maximize else -np.inf, None, iterations)
    x = np.zeros(ncols)
    x[basis] = T[:m, -1]
    x = np.maximum(x[:n], 0.0)
    value = float(c @ x)
    return LpResult(OPTIMAL, value, x, iterations)
