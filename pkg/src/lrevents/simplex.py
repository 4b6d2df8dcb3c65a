"""Dense two-phase simplex for small standard-form linear programs.

Solves min c'x subject to Ax = b, x >= 0. The bases stay tiny for the
Chebyshev distance queries this package issues (the dual of the minimax
fit has r + 1 rows however many coordinates are sampled), so the basis
system is refactorized from scratch at every pivot instead of updated
incrementally; this trades a little speed for numerical freshness.

Anti-cycling: Dantzig pricing by default, switching permanently to
Bland's rule for the rest of the solve once a run of degenerate pivots
exceeds a stall threshold. Bland's rule guarantees termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_RC_TOL = 1e-9  # reduced-cost negativity threshold
_PIV_TOL = 1e-10  # smallest acceptable pivot magnitude
_FEAS_TOL = 1e-7  # phase-1 residual below which the program counts as feasible


class SimplexNumericalError(RuntimeError):
    """Basis factorization failed or the pivot cap was exhausted."""


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray | None  # primal solution, length n
    objective: float
    duals: np.ndarray | None  # simplex multipliers y with y'A <= c' at optimality
    iterations: int


def _pivot_loop(A, b, c, basis, *, max_iter):
    """Run primal simplex pivots until optimality or unboundedness.

    `basis` is modified in place. Returns (status, x_basic, duals, iters).
    """
    m, _ = A.shape
    bland = False
    stall_limit = 3 * m + 10
    stall = 0
    last_obj = np.inf

    for it in range(max_iter):
        B = A[:, basis]
        try:
            x_b = np.linalg.solve(B, b)
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError as exc:
            cond = np.linalg.cond(B)
            raise SimplexNumericalError(
                f"singular basis at pivot {it} (cond={cond:.3e})"
            ) from exc

        rc = c - A.T @ y
        rc[basis] = 0.0

        candidates = np.flatnonzero(rc < -_RC_TOL)
        if candidates.size == 0:
            return OPTIMAL, x_b, y, it

        if bland:
            enter = candidates[0]
        else:
            enter = candidates[np.argmin(rc[candidates])]

        d = np.linalg.solve(B, A[:, enter])
        pos = np.flatnonzero(d > _PIV_TOL)
        if pos.size == 0:
            return UNBOUNDED, x_b, y, it

        ratios = x_b[pos] / d[pos]
        theta = ratios.min()
        ties = pos[ratios <= theta + _PIV_TOL * (1.0 + abs(theta))]
        # leaving tie-break on the smallest variable index (Bland-compatible)
        leave = ties[np.argmin(basis[ties])]

        obj = float(c[basis] @ x_b)
        if obj < last_obj - _RC_TOL * (1.0 + abs(last_obj)):
            stall = 0
        else:
            stall += 1
            if stall > stall_limit:
                bland = True
        last_obj = obj

        basis[leave] = enter

    raise SimplexNumericalError(f"pivot cap {max_iter} exhausted")


def solve_standard_form(A, b, c, *, max_iter=None):
    """Solve min c'x s.t. Ax = b, x >= 0 by two-phase simplex.

    A is (m, n) dense with m expected small. Redundant rows discovered
    during phase 1 are dropped; their dual components are reported as 0.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).copy()
    c = np.asarray(c, dtype=np.float64)
    m, n = A.shape
    if max_iter is None:
        max_iter = 100 + 10 * (m + n)

    # orient rows so the all-artificial start is feasible
    flip = b < 0.0
    if flip.any():
        A = A.copy()
        A[flip] *= -1.0
        b[flip] *= -1.0

    # phase 1: minimize the sum of artificials
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = np.arange(n, n + m)
    status, x_b, _, it1 = _pivot_loop(A1, b, c1, basis, max_iter=max_iter)
    if status != OPTIMAL:
        raise SimplexNumericalError(f"phase 1 ended {status}")
    if float(c1[basis] @ x_b) > _FEAS_TOL * (1.0 + float(np.abs(b).sum())):
        return SimplexResult(INFEASIBLE, None, np.nan, None, it1)

    # pivot leftover artificials out of the basis; rows whose artificial
    # cannot be pivoted out are redundant and get dropped
    keep_rows = np.ones(m, dtype=bool)
    for pos in range(m):
        if basis[pos] < n:
            continue
        B = A1[:, basis]
        row = np.linalg.solve(B, A)[pos]
        pivotable = np.flatnonzero(np.abs(row) > _PIV_TOL)
        pivotable = pivotable[~np.isin(pivotable, basis)]
        if pivotable.size:
            basis[pos] = pivotable[0]
        else:
            keep_rows[pos] = False

    if not keep_rows.all():
        A = A[keep_rows]
        b = b[keep_rows]
        basis = basis[keep_rows]

    status, x_b, y, it2 = _pivot_loop(A, b, c, basis, max_iter=max_iter)
    if status == UNBOUNDED:
        return SimplexResult(UNBOUNDED, None, -np.inf, None, it1 + it2)

    x = np.zeros(n)
    x[basis] = x_b
    duals = np.zeros(len(keep_rows))
    duals[keep_rows] = y
    if flip.any():
        duals[flip] *= -1.0
    return SimplexResult(OPTIMAL, x, float(c @ x), duals, it1 + it2)
