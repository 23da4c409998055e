"""Dense two-phase primal simplex for ``min c @ z  s.t.  A @ z <= b, z >= 0``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


@dataclass(frozen=True)
class StandardFormLP:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape != (b.size, c.size):
            raise ValueError(f"A has shape {A.shape}, expected {(b.size, c.size)}")
        if not all(np.all(np.isfinite(v)) for v in (c, A, b)):
            raise ValueError("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size


@dataclass(frozen=True)
class LpSolution:
    z: np.ndarray
    status: str
    iterations: int
    objective: float
    basis: tuple[int, ...] = ()


def _pivot(tab: np.ndarray, basis: list[int], row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    factor = tab[:, col].copy()
    factor[row] = 0.0
    tab -= np.outer(factor, tab[row])
    basis[row] = col


def _run(tab: np.ndarray, basis: list[int], n_cols: int, budget: int) -> tuple[str, int]:
    """Bland-rule iterations on a tableau whose last row is the reduced cost.

    Only the first ``n_cols`` columns may enter.  Returns (status, iterations).
    """
    m = len(basis)
    it = 0
    while True:
        reduced = tab[m, :n_cols]
        entering = np.flatnonzero(reduced < -PIVOT_TOL)
        if entering.size == 0:
            return OPTIMAL, it
        if it >= budget:
            return ITERATION_LIMIT, it
        col = int(entering[0])
        column = tab[:m, col]
        candidates = np.flatnonzero(column > PIVOT_TOL)
        if candidates.size == 0:
            return UNBOUNDED, it
        ratios = tab[candidates, -1] / column[candidates]
        best = ratios.min()
        ties = candidates[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        # Bland: among tied rows leave the lowest-indexed basic variable
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(tab, basis, row, col)
        it += 1


def simplex_solve(lp: StandardFormLP, max_iter: int = 500) -> LpSolution:
    """Solve with slack variables and Bland's anti-cycling rule.

    Rows with negative right-hand side get an artificial variable and a first
    phase drives those to zero.  ``iterations`` counts pivots of both phases.
    """
    m, n = lp.A.shape
    neg = np.flatnonzero(lp.b < 0)
    n_art = neg.size
    width = n + m + n_art
    # columns: [z (n) | slacks (m) | artificials (n_art) | rhs]
    tab = np.zeros((m + 1, width + 1))
    tab[:m, :n] = lp.A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = lp.b
    tab[neg, :] *= -1.0
    basis = list(range(n, n + m))
    for j, r in enumerate(neg):
        tab[r, n + m + j] = 1.0
        basis[r] = n + m + j

    iterations = 0
    if n_art:
        tab[m, :] = 0.0
        tab[m, n + m:width] = 1.0
        for r in neg:
            tab[m] -= tab[r]
        status, it = _run(tab, basis, width, max_iter)
        iterations += it
        if status == ITERATION_LIMIT:
            return LpSolution(np.zeros(n), ITERATION_LIMIT, iterations, float("nan"))
        if -tab[m, -1] > FEAS_TOL:
            return LpSolution(np.zeros(n), INFEASIBLE, iterations, float("nan"))
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = []
        for r in range(m):
            if basis[r] >= n + m:
                cols = np.flatnonzero(np.abs(tab[r, :n + m]) > PIVOT_TOL)
                if cols.size:
                    _pivot(tab, basis, r, int(cols[0]))
                    iterations += 1
                    keep.append(r)
            else:
                keep.append(r)
        tab = np.vstack([tab[keep], tab[m:m + 1]])
        basis = [basis[r] for r in keep]
        tab = np.delete(tab, np.s_[n + m:width], axis=1)
        m = len(basis)

    tab[m, :] = 0.0
    tab[m, :n] = lp.c
    for r, j in enumerate(basis):
        if j < n and lp.c[j] != 0.0:
            tab[m] -= lp.c[j] * tab[r]
    status, it = _run(tab, basis, n + lp.n_rows, max_iter - iterations)
    iterations += it

    z = np.zeros(n)
    for r, j in enumerate(basis):
        if j < n:
            z[j] = tab[r, -1]
    if status != OPTIMAL:
        return LpSolution(z, status, iterations, float("nan"), tuple(basis))
    np.maximum(z, 0.0, out=z)
    return LpSolution(z, OPTIMAL, iterations, float(lp.c @ z), tuple(basis))
