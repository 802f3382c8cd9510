"""Truncation-error convergence studies over refined perturbed lattices.

A study fixes a regular order m, a weight, and an operator, then sweeps a
decreasing sequence of lattice spacings: each level builds a jittered lattice
with uniform volumes, couples the influence radius to the spacing through
h = 2.6 * 2^(5/m - 5) * dx^(1/m), evaluates the operator's relative error in
the discrete max norm, and records the regularity indicators.  Rates are
reported with respect to h between adjacent levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .geometry import (ParticleSystem, RectDomain, covering_radius,
                       perturbed_lattice, uniform_volumes, voronoi_decompose)
from .indicators import (DeviationResult, voronoi_deviation_bound,
                         voronoi_deviation_exact)
from .operators import OPERATOR_NAMES, FieldSamples, evaluate_at_particles
from .weights import RadialWeight, get_weight

DEFAULT_DOMAIN = RectDomain(lower=(0.0, 0.0), upper=(1.0, 1.0), extension=0.1)

STUDY_CSV_COLUMNS = ("dx", "h", "N", "r_N", "dN_kind", "dN", "rel_error",
                     "rate_observed", "rate_theoretical")


# ---------------------------------------------------------------------------
# Test fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestField:
    """Analytic field with exact gradient and Laplacian, vectorized."""

    name: str
    fn: object
    grad_fn: object
    lap_fn: object


def _sin_sum(points):
    return np.sin(2.0 * math.pi * np.sum(points, axis=1))


def _sin_sum_grad(points):
    c = 2.0 * math.pi * np.cos(2.0 * math.pi * np.sum(points, axis=1))
    return np.repeat(c[:, None], points.shape[1], axis=1)


def _sin_sum_lap(points):
    d = points.shape[1]
    return -(2.0 * math.pi) ** 2 * d * np.sin(2.0 * math.pi * np.sum(points, axis=1))


def _quad(points):
    return np.sum(points**2, axis=1) + np.prod(points, axis=1)


def _quad_grad(points):
    g = 2.0 * points
    if points.shape[1] == 2:
        g = g + points[:, ::-1]
    return g


def _quad_lap(points):
    return np.full(points.shape[0], 2.0 * points.shape[1])


TEST_FUNCTIONS = {
    "sin2pi-sum": TestField("sin2pi-sum", _sin_sum, _sin_sum_grad, _sin_sum_lap),
    "quadratic": TestField("quadratic", _quad, _quad_grad, _quad_lap),
}


# ---------------------------------------------------------------------------
# Scalar pieces
# ---------------------------------------------------------------------------

def influence_radius(dx: float, m: float, extension: float | None = None) -> float:
    """Spacing-coupled influence radius h = 2.6 * 2^(5/m-5) * dx^(1/m).

    At dx = 2^-5 this gives h = 2.6 * 2^-5 for every m.
    """
    if dx <= 0 or m <= 0:
        raise ValueError("dx and m must be positive")
    h = 2.6 * 2.0 ** (5.0 / m - 5.0) * dx ** (1.0 / m)
    if extension is not None and h >= extension:
        raise ValueError(
            f"influence radius {h} exceeds the extension width {extension}")
    return h


def observed_rate(e1: float, h1: float, e2: float, h2: float) -> float:
    """Convergence rate ln(e1/e2) / ln(h1/h2) between two levels."""
    if min(e1, h1, e2, h2) <= 0:
        raise ValueError("errors and radii must be positive")
    if h1 == h2:
        raise ValueError("need distinct influence radii")
    return math.log(e1 / e2) / math.log(h1 / h2)


def theoretical_rate(operator: str, m: float, n: int) -> float | None:
    """Guaranteed h-power for the truncation error, or None if not covered.

    Interpolant and gradient converge like h^min(m-1, n+1), the Laplacian
    like h^min(m-2, n+1); a nonpositive exponent means no guarantee.
    """
    if operator not in OPERATOR_NAMES:
        raise ValueError(f"unknown operator {operator!r}")
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 and n >= 1")
    value = min(m - 2.0 if operator == "lap" else m - 1.0, n + 1.0)
    return value if value > 0 else None


@lru_cache(maxsize=128)
def _denominator(field_name: str, operator: str, domain: RectDomain,
                 samples: int = 512) -> float:
    """Sup norm of the exact operator target over the core box, sampled."""
    tf = TEST_FUNCTIONS[field_name]
    axes = [np.linspace(domain.lower[k], domain.upper[k], samples)
            for k in range(domain.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = pts.reshape(-1, domain.dim)
    if operator == "interp":
        val = float(np.max(np.abs(tf.fn(pts))))
    elif operator == "grad":
        val = float(np.max(np.linalg.norm(tf.grad_fn(pts), axis=1)))
    else:
        val = float(np.max(np.abs(tf.lap_fn(pts))))
    return val


def relative_error(ps: ParticleSystem, w: RadialWeight, f: FieldSamples,
                   operator: str, field_name: str | None = None) -> float:
    """Relative truncation error in the discrete max norm.

    Numerator: max over particles inside the open core box of the pointwise
    operator error (Euclidean norm across gradient components).  Denominator:
    sup of the exact target over the closed core box, approximated on a
    512-per-axis sample grid (the test fields' extrema are resolved far below
    the study tolerances at that sampling).
    """
    if operator not in OPERATOR_NAMES:
        raise ValueError(f"unknown operator {operator!r}")
    lo = np.asarray(ps.domain.lower)
    hi = np.asarray(ps.domain.upper)
    inside = np.nonzero(np.all((ps.points > lo) & (ps.points < hi), axis=1))[0]
    if inside.size == 0:
        raise ValueError("no particles inside the core box")
    queries = ps.points[inside]
    approx = evaluate_at_particles(ps, w, f, operator, indices=inside)
    if operator == "interp":
        exact = f.values[inside]
        num = float(np.max(np.abs(approx - exact)))
    elif operator == "grad":
        if f.grad_fn is None:
            raise ValueError("gradient study needs an analytic gradient callback")
        exact = np.asarray(f.grad_fn(queries), dtype=float)
        num = float(np.max(np.linalg.norm(approx - exact, axis=1)))
    else:
        if f.lap_fn is None:
            raise ValueError("Laplacian study needs an analytic Laplacian callback")
        exact = np.asarray(f.lap_fn(queries), dtype=float)
        num = float(np.max(np.abs(approx - exact)))

    if field_name is not None:
        den = _denominator(field_name, operator, ps.domain)
    else:
        den = _sampled_denominator(f, operator, ps.domain)
    if den == 0:
        raise ValueError("exact target vanishes identically; relative error undefined")
    return num / den


def _sampled_denominator(f: FieldSamples, operator: str, domain: RectDomain,
                         samples: int = 512) -> float:
    if f.fn is None:
        raise ValueError("relative error needs analytic callbacks")
    axes = [np.linspace(domain.lower[k], domain.upper[k], samples)
            for k in range(domain.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    if operator == "interp":
        return float(np.max(np.abs(f.fn(pts))))
    if operator == "grad":
        return float(np.max(np.linalg.norm(f.grad_fn(pts), axis=1)))
    return float(np.max(np.abs(f.lap_fn(pts))))


# ---------------------------------------------------------------------------
# Study configuration and execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    dx_levels: tuple[float, ...]
    m: float
    weight_name: str
    operator: str
    seed: int = 0
    noise_bound: float = 0.25
    test_function: str = "sin2pi-sum"
    domain: RectDomain = DEFAULT_DOMAIN

    def __post_init__(self):
        levels = tuple(float(v) for v in self.dx_levels)
        object.__setattr__(self, "dx_levels", levels)
        if not levels:
            raise ValueError("need at least one spacing level")
        if any(b >= a for a, b in zip(levels, levels[1:])):
            raise ValueError("spacing levels must be strictly decreasing")
        if self.operator not in OPERATOR_NAMES:
            raise ValueError(f"unknown operator {self.operator!r}")
        if self.test_function not in TEST_FUNCTIONS:
            raise ValueError(f"unknown test function {self.test_function!r}")
        get_weight(self.weight_name)  # raises on unknown names
        for dx in levels:
            influence_radius(dx, self.m, self.domain.extension)


@dataclass(frozen=True)
class LevelRecord:
    dx: float
    h: float
    n: int
    covering_radius: float
    deviation_kind: str
    deviation: float
    rel_error: float
    note: str = ""


@dataclass(frozen=True)
class StudyResult:
    config: StudyConfig
    levels: tuple[LevelRecord, ...]
    rates: tuple[float | None, ...]
    theoretical: float | None

    def finest_rate(self) -> float | None:
        for rate in reversed(self.rates):
            if rate is not None:
                return rate
        return None

    def csv_text(self) -> str:
        lines = [",".join(STUDY_CSV_COLUMNS)]
        theo = "N/A" if self.theoretical is None else repr(self.theoretical)
        for k, rec in enumerate(self.levels):
            rate = ""
            if k > 0 and self.rates[k - 1] is not None:
                rate = repr(self.rates[k - 1])
            lines.append(",".join([
                repr(rec.dx), repr(rec.h), str(rec.n),
                repr(rec.covering_radius), rec.deviation_kind,
                repr(rec.deviation),
                repr(rec.rel_error) if math.isfinite(rec.rel_error) else "nan",
                rate, theo,
            ]))
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        Path(path).write_text(self.csv_text())

    def plot_text(self) -> str:
        """Two-column h / relative-error block for log-log plotting."""
        lines = ["# h rel_error"]
        for rec in self.levels:
            if math.isfinite(rec.rel_error):
                lines.append(f"{rec.h!r} {rec.rel_error!r}")
        return "\n".join(lines) + "\n"

    def to_plot_file(self, path) -> None:
        Path(path).write_text(self.plot_text())


class LevelCache:
    """Memoizes lattices and (h-independent) indicator values per level.

    Studies with the same domain, spacing, seed and noise bound share their
    particle distribution, Voronoi decomposition, covering radius and greedy
    deviation bound; only the influence radius changes with m.
    """

    def __init__(self):
        self._points: dict = {}
        self._indicators: dict = {}

    def points(self, domain: RectDomain, dx: float, seed: int,
               noise_bound: float):
        key = (domain, dx, seed, noise_bound)
        if key not in self._points:
            pts = perturbed_lattice(dx, noise_bound, seed, domain)
            vols = uniform_volumes(pts.shape[0], domain)
            self._points[key] = (pts, vols)
        return self._points[key]

    def indicators(self, domain: RectDomain, dx: float, seed: int,
                   noise_bound: float) -> tuple[float, DeviationResult]:
        key = (domain, dx, seed, noise_bound)
        if key not in self._indicators:
            pts, vols = self.points(domain, dx, seed, noise_bound)
            probe = ParticleSystem(domain=domain, points=pts, volumes=vols,
                                   h=0.5 * domain.extension)
            diagram = voronoi_decompose(probe)
            r_n = covering_radius(diagram, probe)
            bound = voronoi_deviation_bound(probe, diagram)
            self._indicators[key] = (r_n, bound)
        return self._indicators[key]


def run_study(cfg: StudyConfig, cache: LevelCache | None = None) -> StudyResult:
    """Execute one convergence study; failed levels are recorded, not fatal."""
    cache = cache if cache is not None else LevelCache()
    w = get_weight(cfg.weight_name)
    tf = TEST_FUNCTIONS[cfg.test_function]
    records: list[LevelRecord] = []
    for dx in cfg.dx_levels:
        h = influence_radius(dx, cfg.m, cfg.domain.extension)
        try:
            pts, vols = cache.points(cfg.domain, dx, cfg.seed, cfg.noise_bound)
            r_n, bound = cache.indicators(cfg.domain, dx, cfg.seed,
                                          cfg.noise_bound)
            ps = ParticleSystem(domain=cfg.domain, points=pts, volumes=vols, h=h)
            f = FieldSamples.from_function(ps, tf.fn, tf.grad_fn, tf.lap_fn)
            rel = relative_error(ps, w, f, cfg.operator,
                                 field_name=cfg.test_function)
            records.append(LevelRecord(
                dx=dx, h=h, n=pts.shape[0], covering_radius=r_n,
                deviation_kind=bound.kind, deviation=bound.value,
                rel_error=rel))
        except Exception as exc:  # record the failure, keep refining
            records.append(LevelRecord(
                dx=dx, h=h, n=0, covering_radius=math.nan,
                deviation_kind="failed", deviation=math.nan,
                rel_error=math.nan, note=str(exc)))

    rates: list[float | None] = []
    for prev, cur in zip(records, records[1:]):
        if (math.isfinite(prev.rel_error) and math.isfinite(cur.rel_error)
                and prev.rel_error > 0 and cur.rel_error > 0):
            rates.append(observed_rate(prev.rel_error, prev.h,
                                       cur.rel_error, cur.h))
        else:
            rates.append(None)

    theo = theoretical_rate(cfg.operator, cfg.m, w.moment_order)
    if cfg.operator == "grad" and (w.smooth_order is None or w.smooth_order < 0):
        theo = None
    if cfg.operator == "lap" and (w.smooth_order is None or w.smooth_order < 1):
        theo = None
    return StudyResult(config=cfg, levels=tuple(records), rates=tuple(rates),
                       theoretical=theo)


# ---------------------------------------------------------------------------
# Decimated exact-deviation spot check
# ---------------------------------------------------------------------------

def deviation_spot_check(points: np.ndarray, center, spacing: float,
                         max_n: int = 40) -> dict:
    """Exact-vs-greedy deviation on a small window cut out of a distribution.

    Particles inside a square window around ``center`` become a standalone
    uniform-volume instance on that window; the window shrinks until at most
    ``max_n`` particles remain, keeping the exact LP tractable.
    """
    center = np.asarray(center, dtype=float)
    d = points.shape[1]
    half = 0.5 * spacing * max_n ** (1.0 / d)
    for _ in range(40):
        mask = np.all(np.abs(points - center) < half, axis=1)
        if int(mask.sum()) <= max_n:
            break
        half *= 0.9
    sel = points[mask]
    n = sel.shape[0]
    if n < 2:
        raise ValueError("window too small: fewer than two particles selected")
    pad = half / 2.0
    domain = RectDomain(lower=tuple(center - half + pad),
                        upper=tuple(center + half - pad), extension=pad)
    vols = uniform_volumes(n, domain)
    ps = ParticleSystem(domain=domain, points=sel, volumes=vols,
                        h=0.5 * pad)
    diagram = voronoi_decompose(ps)
    exact = voronoi_deviation_exact(ps, diagram, cap=max(max_n, n))
    bound = voronoi_deviation_bound(ps, diagram)
    return {"n": n, "exact": exact, "bound": bound, "window_halfwidth": half}
