"""Exact constrained optimum of the quadratic cost by active-set enumeration.

Used as a reference for the LP-based solver.  For every candidate set ``S``
of at most ``dim`` active rows the equality-constrained minimizer is

    x_S = x* - 1/2 H^-1 A_S^T lam,   (A_S H^-1 A_S^T) lam = 2 (A_S x* - b_S)

and the optimum is the cheapest primal-feasible ``x_S``.  Everything is
expressed through ``Gamma = A H^-1 A^T`` so each candidate costs one small
solve.  Works in the original coordinates, independent of the
least-distance transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .constraints import LinearConstraintSet
from .cost import QuadraticCost, evaluate_cost

_CHUNK = 20000


@dataclass(frozen=True)
class QpResult:
    x: np.ndarray
    cost: float
    active: tuple[int, ...]
    candidates_checked: int


def candidate_rows(q: QuadraticCost, cons: LinearConstraintSet, x_feasible) -> np.ndarray:
    """Rows that could be active at the optimum.

    The optimum lies in the sublevel ellipsoid through any feasible point.
    A row whose half-space contains that whole ellipsoid with margin cannot
    be active there.
    """
    factor = cho_factor(q.H)
    x_star = cho_solve(factor, -0.5 * q.g)
    x_feasible = np.asarray(x_feasible, dtype=float)
    if not cons.satisfied(x_feasible, 1e-9):
        raise ValueError("pruning point is not feasible")
    d = x_feasible - x_star
    r2 = float(d @ q.H @ d)
    reach = np.sqrt(r2 * np.einsum("ij,ji->i", cons.A, cho_solve(factor, cons.A.T)))
    margin = cons.b - cons.A @ x_star - reach
    return np.flatnonzero(margin <= 1e-9 * (1.0 + np.abs(cons.b)))


def enumerate_qp(
    q: QuadraticCost,
    cons: LinearConstraintSet,
    rows=None,
    feas_tol: float = 1e-9,
    certify: bool = True,
    hint=None,
) -> QpResult:
    """Minimize the cost subject to ``cons`` by trying every small active set.

    ``rows`` restricts which rows may be active (default: all); feasibility
    is always checked against every row.  With ``certify`` the search stops
    at the first feasible set with nonnegative multipliers, which satisfies
    the KKT conditions and is therefore the global optimum.  Without it every
    set is tried and the cheapest feasible one wins.

    ``hint`` lists rows whose subsets are tried first.  It only changes the
    search order: a hinted set is accepted solely on its KKT certificate.
    """
    factor = cho_factor(q.H)
    x_star = cho_solve(factor, -0.5 * q.g)
    dim = x_star.size
    A, b = cons.A, cons.b
    HinvAt = cho_solve(factor, A.T)
    Gamma = A @ HinvAt
    resid = A @ x_star - b
    rows = np.arange(len(cons)) if rows is None else np.asarray(rows, dtype=int)
    scale = 1.0 + np.abs(b)

    best_cost = np.inf
    best = (x_star, ())
    checked = 1
    if np.all(resid <= feas_tol * scale):
        return QpResult(x_star, evaluate_cost(q, x_star), (), checked)

    J0 = evaluate_cost(q, x_star)
    passes = []
    if certify and hint is not None and len(hint):
        hint = sorted(set(int(r) for r in hint))
        passes += [combinations(hint, k) for k in range(1, min(dim, len(hint)) + 1)]
    passes += [combinations(rows.tolist(), k) for k in range(1, min(dim, rows.size) + 1)]
    for subsets_iter in passes:
        while True:
            chunk = [s for _, s in zip(range(_CHUNK), subsets_iter)]
            if not chunk:
                break
            S = np.array(chunk, dtype=int)
            checked += len(S)
            G = Gamma[S[:, :, None], S[:, None, :]]
            rhs = 2.0 * resid[S]
            # skip rank-deficient sets
            diag = np.sqrt(np.einsum("nii->ni", G))
            Gn = G / (diag[:, :, None] * diag[:, None, :])
            ok = np.abs(np.linalg.det(Gn)) > 1e-10
            if not ok.any():
                continue
            S, G, rhs = S[ok], G[ok], rhs[ok]
            lam = np.linalg.solve(G, rhs[..., None])[..., 0]
            # A x_S - b for every row
            GS = Gamma[:, S]  # (m, K, k)
            values = resid[None, :] - 0.5 * np.einsum("mks,ks->km", GS, lam)
            feasible = np.all(values <= feas_tol * scale[None, :], axis=1)
            if not feasible.any():
                continue
            extra = 0.25 * np.einsum("ks,kst,kt->k", lam, G, lam)
            extra[~feasible] = np.inf
            if certify:
                kkt = feasible & np.all(lam >= -1e-12 * (1.0 + np.abs(lam).max(axis=1, keepdims=True)), axis=1)
                if kkt.any():
                    i = int(np.flatnonzero(kkt)[np.argmin(extra[kkt])])
                    x = x_star - 0.5 * HinvAt[:, S[i]] @ lam[i]
                    return QpResult(x, evaluate_cost(q, x), tuple(int(r) for r in S[i]), checked)
            i = int(np.argmin(extra))
            if J0 + extra[i] < best_cost:
                best_cost = J0 + extra[i]
                x = x_star - 0.5 * HinvAt[:, S[i]] @ lam[i]
                best = (x, tuple(int(r) for r in S[i]))
    if not np.isfinite(best_cost):
        raise ValueError("no feasible active set found; constraint set may be empty")
    x, active = best
    return QpResult(x, evaluate_cost(q, x), active, checked)
