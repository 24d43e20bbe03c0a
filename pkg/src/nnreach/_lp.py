"""Dense two-phase simplex for the small support/feasibility LPs used here.

Problems are max c'x subject to A x <= b with x free. Free variables are
split into positive parts, slacks make the constraints equalities, and rows
with negative right-hand sides get phase-1 artificials. Pivoting uses largest
reduced profit and falls back to Bland's rule after a run of degenerate
pivots, which guarantees termination.
"""

from __future__ import annotations

import numpy as np

_TOL = 1e-9
_PIVOT_TOL = 1e-10
_STALL_LIMIT = 50
_MAX_PIVOTS = 20000


class LpError(RuntimeError):
    """Raised when the simplex exceeds its pivot budget."""


def _pivot(tableau: np.ndarray, rhs: np.ndarray, basis: list[int], row: int, col: int):
    piv = tableau[row, col]
    tableau[row] /= piv
    rhs[row] /= piv
    for r in range(tableau.shape[0]):
        if r != row and abs(tableau[r, col]) > 0.0:
            factor = tableau[r, col]
            tableau[r] -= factor * tableau[row]
            rhs[r] -= factor * rhs[row]
    basis[row] = col


def _run_simplex(tableau, rhs, basis, cost):
    """Maximize cost'z on the canonical tableau in place.

    Returns "optimal" or "unbounded"; the tableau/basis are left at the last
    basic feasible point.
    """
    stalled = 0
    bland = False
    for _ in range(_MAX_PIVOTS):
        profits = cost - cost[basis] @ tableau
        profits[basis] = 0.0
        if bland:
            candidates = np.flatnonzero(profits > _TOL)
            if candidates.size == 0:
                return "optimal"
            col = int(candidates[0])
        else:
            col = int(np.argmax(profits))
            if profits[col] <= _TOL:
                return "optimal"
        column = tableau[:, col]
        eligible = np.flatnonzero(column > _PIVOT_TOL)
        if eligible.size == 0:
            return "unbounded"
        ratios = rhs[eligible] / column[eligible]
        best = ratios.min()
        ties = eligible[ratios <= best + _PIVOT_TOL]
        row = int(min(ties, key=lambda r: basis[r]))
        if best <= _PIVOT_TOL:
            stalled += 1
            if stalled >= _STALL_LIMIT:
                bland = True
        else:
            stalled = 0
        _pivot(tableau, rhs, basis, row, col)
    raise LpError("simplex exceeded its pivot budget")


def solve_lp_max(c, A, b):
    """Maximize c'x subject to A x <= b with x free.

    Returns (status, x, value) where status is "optimal", "unbounded" or
    "infeasible"; x and value are None unless status is "optimal".
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")

    # Columns: x+ (n), x- (n), slack (m), then any artificials.
    tableau = np.hstack([A, -A, np.eye(m)])
    rhs = b.astype(float).copy()
    flipped = rhs < 0
    tableau[flipped] *= -1.0
    rhs[flipped] *= -1.0

    n_cols = 2 * n + m
    basis: list[int] = []
    art_cols: list[int] = []
    art_rows = np.flatnonzero(flipped)
    if art_rows.size:
        art = np.zeros((m, art_rows.size))
        for j, r in enumerate(art_rows):
            art[r, j] = 1.0
        tableau = np.hstack([tableau, art])
    next_art = n_cols
    for r in range(m):
        if flipped[r]:
            basis.append(next_art)
            art_cols.append(next_art)
            next_art += 1
        else:
            basis.append(2 * n + r)

    if art_cols:
        cost1 = np.zeros(tableau.shape[1])
        cost1[art_cols] = -1.0
        status = _run_simplex(tableau, rhs, basis, cost1)
        if status != "optimal" or cost1[basis] @ rhs < -1e-7:
            return "infeasible", None, None
        # Drive leftover artificials out of the basis, dropping redundant rows.
        art_set = set(art_cols)
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] in art_set:
                options = np.flatnonzero(np.abs(tableau[r, :n_cols]) > _TOL)
                if options.size:
                    _pivot(tableau, rhs, basis, r, int(options[0]))
                else:
                    keep[r] = False
        if not np.all(keep):
            tableau = tableau[keep]
            rhs = rhs[keep]
            basis = [bv for bv, k in zip(basis, keep) if k]
        tableau = tableau[:, :n_cols]

    cost2 = np.concatenate([c, -c, np.zeros(tableau.shape[1] - 2 * n)])
    status = _run_simplex(tableau, rhs, basis, cost2)
    if status == "unbounded":
        return "unbounded", None, None
    z = np.zeros(tableau.shape[1])
    z[basis] = rhs
    x = z[:n] - z[n : 2 * n]
    return "optimal", x, float(c @ x)


def lp_feasible(A, b) -> bool:
    """Whether {x : A x <= b} is nonempty (phase-1 only)."""
    status, _, _ = solve_lp_max(np.zeros(A.shape[1]), A, b)
    return status != "infeasible"
