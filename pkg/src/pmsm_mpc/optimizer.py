"""Suboptimal constrained trajectory solver.

Pipeline: unconstrained optimum from the first-order conditions, affine change
to a least-distance problem ``||beta||**2``, replacement of the distance by the
sum ``sum |beta_i|``, and a simplex solve over the positive/negative split of
``beta``.  The L1 surrogate keeps the worst-case cost within
``J0 + 2n * (J_qp - J0)`` for ``2n`` free coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from .constraints import LinearConstraintSet
from .cost import QuadraticCost, evaluate_cost
from .simplex import FEAS_TOL, OPTIMAL, StandardFormLP, simplex_solve

DEFAULT_MAX_ITER = 200


class NotPositiveDefinite(ValueError):
    """The cost Hessian is not positive definite."""


class SolverFault(RuntimeError):
    def __init__(self, status: str, iterations: int):
        super().__init__(f"LP solve failed: {status} after {iterations} iterations")
        self.status = status
        self.iterations = iterations


@dataclass(frozen=True)
class LeastDistanceProblem:
    """Constraints ``A @ beta <= b`` with ``beta = M @ (x - x_star)``."""

    M: np.ndarray
    x_star: np.ndarray
    A: np.ndarray
    b: np.ndarray
    labels: tuple[str, ...]
    J0: float

    def to_x(self, beta) -> np.ndarray:
        return self.x_star + solve_triangular(self.M, beta, lower=False)

    def to_beta(self, x) -> np.ndarray:
        return self.M @ (np.asarray(x, dtype=float) - self.x_star)


@dataclass
class Diagnostics:
    J0: float
    J_lin: float
    iterations: int = 0
    status: str = OPTIMAL
    active: list[str] = field(default_factory=list)
    used_lp: bool = False
    n_rows: int = 0


def _cholesky_upper(H: np.ndarray) -> np.ndarray:
    try:
        U, _ = cho_factor(H, lower=False)
    except LinAlgError as exc:
        raise NotPositiveDefinite("cost Hessian is not positive definite") from exc
    return np.triu(U)


def solve_unconstrained(q: QuadraticCost) -> np.ndarray:
    """Stationary point of the cost: solves ``2 H x = -g``."""
    try:
        factor = cho_factor(q.H, lower=False)
    except LinAlgError as exc:
        raise NotPositiveDefinite("cost Hessian is not positive definite") from exc
    return cho_solve(factor, -0.5 * q.g)


def to_least_distance(q: QuadraticCost, x_star, cons: LinearConstraintSet) -> LeastDistanceProblem:
    x_star = np.asarray(x_star, dtype=float)
    M = _cholesky_upper(q.H)
    # a @ x <= b  with  x = x_star + M^-1 beta
    A = solve_triangular(M, cons.A.T, lower=False, trans="T").T
    b = cons.b - cons.A @ x_star
    return LeastDistanceProblem(M, x_star, A, b, cons.labels, evaluate_cost(q, x_star))


def linearize_and_standardize(ldp: LeastDistanceProblem) -> StandardFormLP:
    """``min sum(z+ + z-)`` with ``beta = z+ - z-``, ``z >= 0``."""
    n = ldp.M.shape[0]
    return StandardFormLP(np.ones(2 * n), np.hstack([ldp.A, -ldp.A]), ldp.b)


def split_to_beta(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    n = z.size // 2
    return z[:n] - z[n:]


def _polish(ldp: LeastDistanceProblem, cons: LinearConstraintSet, beta: np.ndarray, basis) -> np.ndarray:
    """Re-solve the LP vertex in the original coordinates.

    The vertex is pinned by the zero components of ``beta`` and the rows whose
    slack is nonbasic.  Solving that square system directly in ``x`` avoids
    the rounding picked up by mapping through ``M^-1``.
    """
    n = beta.size
    basic = set(basis)
    zero_beta = [i for i in range(n) if i not in basic and i + n not in basic]
    tight_rows = [r for r in range(len(cons)) if 2 * n + r not in basic]
    if len(zero_beta) + len(tight_rows) != n:
        return ldp.to_x(beta)
    rows = [ldp.M[i] for i in zero_beta] + [cons.A[r] for r in tight_rows]
    rhs = [ldp.M[i] @ ldp.x_star for i in zero_beta] + [cons.b[r] for r in tight_rows]
    try:
        return np.linalg.solve(np.array(rows), np.array(rhs))
    except np.linalg.LinAlgError:
        return ldp.to_x(beta)


def solve_trajectory(
    q: QuadraticCost,
    cons: LinearConstraintSet,
    max_iter: int = DEFAULT_MAX_ITER,
    feas_tol: float = FEAS_TOL,
) -> tuple[np.ndarray, Diagnostics]:
    """Free coefficients of the suboptimal constrained trajectory.

    Returns the unconstrained optimum untouched when it already satisfies
    every row.  Raises :class:`SolverFault` if the LP is infeasible or runs
    out of iterations.
    """
    x_star = solve_unconstrained(q)
    J0 = evaluate_cost(q, x_star)
    if cons.satisfied(x_star, feas_tol):
        return x_star, Diagnostics(J0, J0, n_rows=len(cons))

    ldp = to_least_distance(q, x_star, cons)
    sol = simplex_solve(linearize_and_standardize(ldp), max_iter)
    if sol.status != OPTIMAL:
        raise SolverFault(sol.status, sol.iterations)
    beta = split_to_beta(sol.z)
    x = ldp.to_x(beta)
    if not cons.satisfied(x, feas_tol):
        polished = _polish(ldp, cons, beta, sol.basis)
        if np.max(-cons.slack(polished)) < np.max(-cons.slack(x)):
            x = polished
    diag = Diagnostics(
        J0=J0,
        J_lin=evaluate_cost(q, x),
        iterations=sol.iterations,
        status=sol.status,
        active=cons.active(x),
        used_lp=True,
        n_rows=len(cons),
    )
    return x, diag
