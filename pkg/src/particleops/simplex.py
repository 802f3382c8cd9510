"""Dense two-phase revised simplex with Bland's rule.

Solves  min c.x  subject to  A x = b, x >= 0.  Bland's smallest-index pivot
rule is used for both the entering and the leaving variable, which prevents
cycling on the degenerate transport polytopes this package feeds it.  Sized
for small dense instances (a few hundred rows); basis systems are re-solved
each iteration rather than updated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    value: float | None
    iterations: int


class SimplexError(RuntimeError):
    pass


def _simplex_core(a, b, c, basis, blocked, tol, max_iter):
    """Run simplex iterations in place on ``basis``; returns iteration count.

    ``blocked`` marks columns that may never enter (phase-2 artificials).
    """
    m, n = a.shape
    in_basis = np.zeros(n, dtype=bool)
    in_basis[basis] = True
    for it in range(max_iter):
        bmat = a[:, basis]
        try:
            xb = np.linalg.solve(bmat, b)
            y = np.linalg.solve(bmat.T, c[basis])
        except np.linalg.LinAlgError as exc:
            raise SimplexError("singular basis matrix") from exc
        reduced = c - y @ a
        candidates = np.nonzero((reduced < -tol) & ~blocked & ~in_basis)[0]
        if candidates.size == 0:
            return it
        entering = int(candidates[0])  # Bland: smallest eligible index
        d = np.linalg.solve(bmat, a[:, entering])
        pos = np.nonzero(d > tol)[0]
        if pos.size == 0:
            raise SimplexError("objective unbounded below")
        ratios = np.maximum(xb[pos], 0.0) / d[pos]
        best = float(ratios.min())
        tied = pos[ratios <= best + tol]
        basis_arr = np.asarray(basis)
        leaving = int(tied[np.argmin(basis_arr[tied])])  # Bland on ties
        in_basis[basis[leaving]] = False
        in_basis[entering] = True
        basis[leaving] = entering
    raise SimplexError(f"no convergence within {max_iter} iterations")


def solve_lp(c, a_eq, b_eq, tol: float = 1e-9,
             max_iter: int | None = None) -> LpResult:
    """Minimize c.x over A x = b, x >= 0."""
    a = np.array(a_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = a.shape
    if b.shape != (m,) or c.shape != (n,):
        raise ValueError("inconsistent LP dimensions")
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0
    if max_iter is None:
        max_iter = 200 * (m + n)

    # Phase 1: minimize the sum of one artificial per row.
    a1 = np.hstack([a, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    blocked = np.zeros(n + m, dtype=bool)
    iters = _simplex_core(a1, b, c1, basis, blocked, tol, max_iter)
    xb = np.linalg.solve(a1[:, basis], b)
    phase1 = float(c1[basis] @ xb)
    if phase1 > tol * max(1.0, float(np.abs(b).sum())):
        return LpResult(status="infeasible", x=None, value=None, iterations=iters)

    # Phase 2: original costs; artificials may linger basic at zero (redundant
    # rows) but are barred from re-entering.
    c2 = np.concatenate([c, np.zeros(m)])
    blocked[n:] = True
    try:
        iters += _simplex_core(a1, b, c2, basis, blocked, tol, max_iter)
    except SimplexError as exc:
        if "unbounded" in str(exc):
            return LpResult(status="unbounded", x=None, value=None, iterations=iters)
        raise
    xb = np.linalg.solve(a1[:, basis], b)
    x = np.zeros(n + m)
    x[basis] = xb
    x = np.maximum(x[:n], 0.0)
    return LpResult(status="optimal", x=x, value=float(c @ x), iterations=iters)
