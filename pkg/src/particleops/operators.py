"""Interpolant, approximate gradient, and approximate Laplacian.

All three operators are weighted sums over particles within the influence
radius h of the evaluation point:

    interp(x) = sum_i V_i f(x_i) w_h(|x_i - x|)                       (|.| < h)
    grad(x)   = d * sum_i V_i (f(x_i) - f(x)) (x_i - x) w_h / |x_i - x|^2
    lap(x)    = 2d * sum_i V_i (f(x_i) - f(x)) w_h / |x_i - x|^2

where the gradient/Laplacian sums exclude a particle coinciding with x and
w_h(r) = h^(-d) w(r/h).  No kernel-sum renormalization is applied.

Per evaluation point the neighbor sum is accumulated in a fixed bucket-grid
(cell-major) order, so batch results are bitwise reproducible, independent of
chunking and of the number of threads; parallelism is across points only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .geometry import ParticleSystem
from .weights import RadialWeight

OPERATOR_NAMES = ("interp", "grad", "lap")
_OP_CODES = {
    "interp": _kernels.OP_INTERP,
    "grad": _kernels.OP_GRAD,
    "lap": _kernels.OP_LAP,
}


@dataclass(frozen=True, eq=False)
class FieldSamples:
    """Field values at the particles, plus optional analytic callbacks.

    ``fn``/``grad_fn``/``lap_fn`` take an (q, d) array of points and return
    (q,), (q, d), (q,) arrays; they supply field values at non-particle
    evaluation points and exact derivatives for error studies.
    """

    values: np.ndarray
    fn: Callable[[np.ndarray], np.ndarray] | None = None
    grad_fn: Callable[[np.ndarray], np.ndarray] | None = None
    lap_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError("field samples must be a 1-d value array")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, ps: ParticleSystem, fn, grad_fn=None, lap_fn=None
                      ) -> "FieldSamples":
        return cls(values=np.asarray(fn(ps.points), dtype=float),
                   fn=fn, grad_fn=grad_fn, lap_fn=lap_fn)


def _check_field(ps: ParticleSystem, f: FieldSamples) -> None:
    if f.values.shape[0] != ps.n:
        raise ValueError(
            f"field has {f.values.shape[0]} samples for {ps.n} particles")


def _check_weight(ps: ParticleSystem, w: RadialWeight) -> None:
    if w.dim != ps.dim:
        raise ValueError(
            f"weight {w.name} is normalized for d={w.dim}, system is d={ps.dim}")


def _values_at(ps: ParticleSystem, f: FieldSamples, queries: np.ndarray) -> np.ndarray:
    """Field values at arbitrary points: analytic callback or exact particle hit."""
    if f.fn is not None:
        vals = np.asarray(f.fn(queries), dtype=float)
        if vals.shape != (queries.shape[0],):
            raise ValueError("analytic callback returned a wrong-shaped array")
        return vals
    out = np.empty(queries.shape[0])
    for k, row in enumerate(queries):
        i = ps.index_of_point(row)
        if i is None:
            raise ValueError(
                "field value needed at a non-particle point; provide an "
                "analytic callback on FieldSamples")
        out[k] = f.values[i]
    return out


def evaluate_field(ps: ParticleSystem, w: RadialWeight, f: FieldSamples,
                   points, which: str) -> np.ndarray:
    """Apply one operator at many points.

    Returns a (q,) array for ``interp``/``lap`` and a (q, d) array for
    ``grad``.  Results equal a loop of single-point calls bitwise.
    """
    if which not in _OP_CODES:
        raise ValueError(f"unknown operator {which!r}; expected one of {OPERATOR_NAMES}")
    _check_field(ps, f)
    _check_weight(ps, w)
    queries = np.ascontiguousarray(points, dtype=float)
    if queries.ndim == 1:
        queries = queries.reshape(-1, ps.dim)
    if queries.shape[0] == 0:
        return (np.empty((0, ps.dim)) if which == "grad" else np.empty(0))
    if queries.shape[1] != ps.dim:
        raise ValueError(f"points are {queries.shape[1]}-dimensional, system is {ps.dim}")
    if which == "interp":
        fq = np.zeros(queries.shape[0])
    else:
        fq = _values_at(ps, f, queries)
    grid = ps.grid
    brk, coefs, mexp = w._tables
    vols = grid.sorted_view(ps.volumes)
    vals = grid.sorted_view(f.values)
    out = np.empty((queries.shape[0], max(ps.dim, 1)))
    code = _OP_CODES[which]
    if ps.dim == 2:
        _kernels.op_batch_2d(
            queries, fq, grid.points_sorted, vols, vals, grid.cell_start,
            int(grid.ncells[0]), int(grid.ncells[1]),
            grid.lower[0], grid.lower[1],
            grid.cell_sizes[0], grid.cell_sizes[1],
            ps.h, brk, coefs, mexp, code, out)
    else:
        _kernels.op_batch_1d(
            queries, fq, grid.points_sorted, vols, vals, grid.cell_start,
            int(grid.ncells[0]), grid.lower[0], grid.cell_sizes[0],
            ps.h, brk, coefs, mexp, code, out)
    if which == "grad":
        return out[:, : ps.dim].copy()
    return out[:, 0].copy()


def evaluate_at_particles(ps: ParticleSystem, w: RadialWeight, f: FieldSamples,
                          which: str, indices=None) -> np.ndarray:
    """Apply one operator at particle positions (field values taken from samples)."""
    if which not in _OP_CODES:
        raise ValueError(f"unknown operator {which!r}; expected one of {OPERATOR_NAMES}")
    _check_field(ps, f)
    _check_weight(ps, w)
    if indices is None:
        queries = ps.points
        fq = f.values
    else:
        idx = np.asarray(indices, dtype=np.int64)
        queries = np.ascontiguousarray(ps.points[idx])
        fq = np.ascontiguousarray(f.values[idx])
    if which == "interp":
        fq = np.zeros(queries.shape[0])
    grid = ps.grid
    brk, coefs, mexp = w._tables
    vols = grid.sorted_view(ps.volumes)
    vals = grid.sorted_view(f.values)
    out = np.empty((queries.shape[0], max(ps.dim, 1)))
    code = _OP_CODES[which]
    if ps.dim == 2:
        _kernels.op_batch_2d(
            np.ascontiguousarray(queries), np.ascontiguousarray(fq, dtype=float),
            grid.points_sorted, vols, vals, grid.cell_start,
            int(grid.ncells[0]), int(grid.ncells[1]),
            grid.lower[0], grid.lower[1],
            grid.cell_sizes[0], grid.cell_sizes[1],
            ps.h, brk, coefs, mexp, code, out)
    else:
        _kernels.op_batch_1d(
            np.ascontiguousarray(queries), np.ascontiguousarray(fq, dtype=float),
            grid.points_sorted, vols, vals, grid.cell_start,
            int(grid.ncells[0]), grid.lower[0], grid.cell_sizes[0],
            ps.h, brk, coefs, mexp, code, out)
    if which == "grad":
        return out[:, : ps.dim].copy()
    return out[:, 0].copy()


def interpolate(ps: ParticleSystem, w: RadialWeight, f: FieldSamples, x) -> float:
    """Interpolant value at a single point (0 if no particle is within h)."""
    return float(evaluate_field(ps, w, f, np.asarray(x, dtype=float), "interp")[0])


def gradient(ps: ParticleSystem, w: RadialWeight, f: FieldSamples, x) -> np.ndarray:
    """Approximate gradient at a single point.

    Requires the field value at x: either x coincides with a particle
    (exact comparison) or an analytic callback is present.
    """
    return evaluate_field(ps, w, f, np.asarray(x, dtype=float), "grad")[0]


def laplacian(ps: ParticleSystem, w: RadialWeight, f: FieldSamples, x) -> float:
    """Approximate Laplacian at a single point (same field-value rule as gradient)."""
    return float(evaluate_field(ps, w, f, np.asarray(x, dtype=float), "lap")[0])
