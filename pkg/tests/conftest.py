"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the production code paths: neighbor
queries by full scan, Voronoi volumes by rasterization, radial integrals by
exact rational antiderivatives, moments by 2-d tensor quadrature, operators
by direct summation, and LPs by scipy's solver.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from particleops import (FieldSamples, ParticleSystem, RectDomain,
                         extend_domain, uniform_volumes)


@pytest.fixture(scope="session", autouse=True)
def warm_compiled_kernels():
    """Force one-time JIT compilation so timed tests measure steady state."""
    from particleops import (get_weight, voronoi_decompose, evaluate_field)
    domain = RectDomain(lower=(0.0, 0.0), upper=(1.0, 1.0), extension=0.2)
    box = extend_domain(domain)
    pts = np.array([[0.2, 0.2], [0.8, 0.7], [0.5, 0.4]])
    ps = ParticleSystem(domain=domain, points=pts,
                        volumes=uniform_volumes(3, domain), h=0.15)
    voronoi_decompose(ps)
    f = FieldSamples.from_function(ps, lambda p: p[:, 0])
    for which in ("interp", "grad", "lap"):
        evaluate_field(ps, get_weight("G1"), f, np.array([[0.5, 0.45]]), which)
    dom1 = RectDomain(lower=(0.0,), upper=(1.0,), extension=0.2)
    box1 = extend_domain(dom1)
    ps1 = ParticleSystem(domain=dom1, points=np.array([[0.2], [0.7]]),
                         volumes=uniform_volumes(2, dom1), h=0.1)
    from particleops import construct_polynomial_weight
    w1 = construct_polynomial_weight(1, 1, 2)
    f1 = FieldSamples.from_function(ps1, lambda p: p[:, 0])
    for which in ("interp", "grad", "lap"):
        evaluate_field(ps1, w1, f1, np.array([[0.5]]), which)


@pytest.fixture(scope="session")
def unit_domain() -> RectDomain:
    return RectDomain(lower=(0.0, 0.0), upper=(1.0, 1.0), extension=0.1)


@pytest.fixture(scope="session")
def two_cell_instance():
    """Two unit-square cells: extended box [0,2]x[0,1], volumes (1.1, 0.9)."""
    domain = RectDomain(lower=(0.25, 0.25), upper=(1.75, 0.75), extension=0.25)
    ps = ParticleSystem(domain=domain,
                        points=np.array([[0.5, 0.5], [1.5, 0.5]]),
                        volumes=np.array([1.1, 0.9]), h=0.2)
    return ps


def random_particle_system(rng, n: int, domain: RectDomain | None = None,
                           h: float | None = None,
                           min_gap: float = 0.0) -> ParticleSystem:
    """Uniform random particles with volumes scaled to fill the extended box."""
    domain = domain or RectDomain(lower=(0.0, 0.0), upper=(1.0, 1.0),
                                  extension=0.3)
    box = extend_domain(domain)
    lo, hi = box.lower_array(), box.upper_array()
    if min_gap > 0:
        pts = np.empty((n, domain.dim))
        have = 0
        while have < n:
            cand = rng.uniform(lo, hi)
            if have == 0 or np.min(
                    np.sum((pts[:have] - cand) ** 2, axis=1)) >= min_gap**2:
                pts[have] = cand
                have += 1
    else:
        pts = rng.uniform(lo, hi, size=(n, domain.dim))
    raw = rng.uniform(0.5, 1.5, size=n)
    vols = raw * (box.volume / raw.sum())
    if h is None:
        h = 0.6 * domain.extension
    return ParticleSystem(domain=domain, points=pts, volumes=vols, h=h)


# ---------------------------------------------------------------------------
# Geometry oracles
# ---------------------------------------------------------------------------

def neighbors_by_scan(ps: ParticleSystem, x, r: float,
                      exclude_center: bool = False) -> np.ndarray:
    """O(N) reference for the bucket-grid neighbor query."""
    x = np.asarray(x, dtype=float)
    d2 = np.sum((ps.points - x) ** 2, axis=1)
    mask = d2 < r * r
    if exclude_center:
        mask &= d2 > 0
    return np.nonzero(mask)[0]


def rasterized_cell_volumes(ps: ParticleSystem, resolution: int = 600
                            ) -> np.ndarray:
    """Voronoi cell volumes by nearest-site rasterization of the box."""
    box = extend_domain(ps.domain)
    lo, hi = box.lower_array(), box.upper_array()
    axes = [np.linspace(lo[k], hi[k], resolution, endpoint=False)
            + (hi[k] - lo[k]) / (2 * resolution)
            for k in range(ps.dim)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = grid.reshape(-1, ps.dim)
    # chunked nearest-site labels
    labels = np.empty(pts.shape[0], dtype=np.int64)
    step = 65536
    for s in range(0, pts.shape[0], step):
        block = pts[s:s + step]
        d2 = np.sum((block[:, None, :] - ps.points[None, :, :]) ** 2, axis=2)
        labels[s:s + step] = np.argmin(d2, axis=1)
    pixel = box.volume / pts.shape[0]
    return np.bincount(labels, minlength=ps.n) * pixel


# ---------------------------------------------------------------------------
# Weight-function oracles
# ---------------------------------------------------------------------------

def exact_radial_moment(w, power: int) -> float:
    """Radial integral of r^power * w(r) by exact rational antiderivatives."""
    total = Fraction(0)
    for k in range(len(w.coeffs)):
        a, b = w.breaks[k], w.breaks[k + 1]
        for e, c in enumerate(w.coeffs[k]):
            if c == 0:
                continue
            q = w.min_exps[k] + e + power
            if q == -1:
                raise ValueError("logarithmic antiderivative; not rational")
            total += c * (b ** (q + 1) - a ** (q + 1)) / (q + 1)
    return w.scale * float(total)


def tensor_moment_2d(w, alpha, nodes: int = 200) -> float:
    """Moment int x^alpha w(|x|) dx over [-1,1]^2 by a Gauss product rule."""
    x, wx = np.polynomial.legendre.leggauss(nodes)
    X, Y = np.meshgrid(x, x, indexing="ij")
    R = np.hypot(X, Y)
    vals = w.evaluate(R.ravel()).reshape(R.shape)
    integ = vals * X ** alpha[0] * Y ** alpha[1]
    return float(wx @ integ @ wx)


# ---------------------------------------------------------------------------
# Operator oracle
# ---------------------------------------------------------------------------

def operator_by_scan(ps: ParticleSystem, w, f: FieldSamples, x,
                     which: str, fx: float | None = None):
    """Direct summation over all particles in ascending index order."""
    x = np.asarray(x, dtype=float)
    d = ps.dim
    diffs = ps.points - x
    r = np.linalg.norm(diffs, axis=1)
    if which == "interp":
        mask = r < ps.h
        wh = w.evaluate_scaled(ps.h, r[mask])
        return float(np.sum(ps.volumes[mask] * f.values[mask] * wh))
    if fx is None:
        i = ps.index_of_point(x)
        fx = f.values[i] if i is not None else float(f.fn(x.reshape(1, -1))[0])
    mask = (r > 0) & (r < ps.h)
    wh = w.evaluate_scaled(ps.h, r[mask])
    dfv = f.values[mask] - fx
    if which == "grad":
        coef = d * ps.volumes[mask] * dfv * wh / r[mask] ** 2
        return (coef[:, None] * diffs[mask]).sum(axis=0)
    coef = 2 * d * ps.volumes[mask] * dfv * wh / r[mask] ** 2
    return float(np.sum(coef))


def scipy_deviation(ps: ParticleSystem, cell_volumes: np.ndarray) -> float:
    """Voronoi deviation via scipy's LP solver (independent of the simplex)."""
    from scipy.optimize import linprog

    n = ps.n
    pts = ps.points
    dist = np.sqrt(np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2))
    nvar = n * n + n + 1
    a_eq = np.zeros((3 * n, nvar))
    b_eq = np.zeros(3 * n)
    for i in range(n):
        a_eq[i, i * n:(i + 1) * n] = 1.0
        b_eq[i] = cell_volumes[i]
    for j in range(n):
        a_eq[n + j, j:n * n:n] = 1.0
        b_eq[n + j] = ps.volumes[j]
    for i in range(n):
        row = 2 * n + i
        for j in range(n):
            a_eq[row, i * n + j] += dist[i, j] / cell_volumes[i]
            a_eq[row, j * n + i] += dist[i, j] / cell_volumes[i]
        a_eq[row, n * n + i] = 1.0
        a_eq[row, n * n + n] = -1.0
    cost = np.zeros(nvar)
    cost[-1] = 1.0
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None),
                  method="highs")
    assert res.status == 0, res.message
    return float(res.fun)
