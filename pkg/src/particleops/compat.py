"""Kernel-gradient (SPH-style) and number-density (MPS-style) operators.

These are the conventional parameterizations of the particle operators.  The
kernel gradient is evaluated radially with direction from the evaluation
point toward the particle, i.e. grad W(|x - x_i|) = W'(r) (x_i - x)/r, which
makes both difference forms below coincide with the generalized operators
under the weight reparameterizations:

    interpolant:  V_i = m_i / rho_i,  w = w_sph
    gradient:     V_i = m_i / rho_i,  w(r) = -(r/d) w_sph'(r)
    Laplacian:    same transform as the gradient
    MPS gradient: V_i = 1/n_hat,      w = w_mps
    MPS Laplacian:V_i = 1/n_hat,      w(r) = r^2 w_mps(r) / lambda_hat

lambda_hat is the second moment of the *reference* profile; the scaled
kernel's second moment is lambda_hat * h^2, which is why h^2 appears in the
MPS Laplacian prefactor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import ParticleSystem, neighbors
from .operators import FieldSamples, _values_at
from .weights import RadialWeight, check_smoothness_order, mps_lambda

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SphParams:
    """Per-particle masses and densities; m_i/rho_i must fill the extended box."""

    masses: np.ndarray
    densities: np.ndarray
    box_volume: float

    def __post_init__(self):
        m = np.ascontiguousarray(self.masses, dtype=float)
        rho = np.ascontiguousarray(self.densities, dtype=float)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "densities", rho)
        if m.shape != rho.shape or m.ndim != 1:
            raise ValueError("masses and densities must be equal-length 1-d arrays")
        if not (np.all(m > 0) and np.all(rho > 0)):
            raise ValueError("masses and densities must be positive")
        total = float(np.sum(m / rho))
        if abs(total - self.box_volume) > 1e-12 * self.box_volume:
            raise ValueError(
                f"sum of m_i/rho_i is {total!r}, expected {self.box_volume!r}")

    @classmethod
    def from_particle_system(cls, ps: ParticleSystem,
                             densities) -> "SphParams":
        rho = np.asarray(densities, dtype=float)
        return cls(masses=ps.volumes * rho, densities=rho,
                   box_volume=ps.extended_box.volume)

    def volumes(self) -> np.ndarray:
        return self.masses / self.densities


@dataclass(frozen=True)
class MpsParams:
    """Reference number density and reference second kernel moment."""

    number_density: float
    second_moment: float

    def __post_init__(self):
        if not self.number_density > 0:
            raise ValueError("number density must be positive")
        if not self.second_moment > 0:
            raise ValueError("second moment must be positive")

    @classmethod
    def canonical(cls, ps: ParticleSystem, w_mps: RadialWeight) -> "MpsParams":
        return cls(number_density=ps.n / ps.extended_box.volume,
                   second_moment=mps_lambda(w_mps, ps.dim))


def check_sph_kernel_conditions(w: RadialWeight, samples: int = 2048) -> dict:
    """Check the classical kernel conditions: C^2 profile, strictly
    decreasing on (0, 1), and a finite limit of w'(s)/s at zero.

    For piecewise polynomials the finite limit holds iff the linear term of
    the 0-piece vanishes; monotonicity is sampled densely.
    """
    mag = max((abs(w.scale * float(c)) for piece in w.coeffs for c in piece),
              default=1.0)
    tol = 1e-10 * max(1.0, mag)

    c2 = w.min_exps[0] >= 0
    for k in range(len(w.coeffs) - 1):
        b = w.breaks[k + 1]
        for probe in range(3):  # value, first, second derivative
            left = _poly_derivative_exact(w, k, b, probe)
            right = _poly_derivative_exact(w, k + 1, b, probe)
            if abs(w.scale * float(left - right)) > tol:
                c2 = False
    rs = np.linspace(0.0, 1.0, samples, endpoint=False)[1:]
    deriv = w.deriv_value(rs)
    decreasing = bool(np.all(deriv < 0))
    first = w.coeffs[0]
    linear_term = (first[1 - w.min_exps[0]]
                   if 0 <= 1 - w.min_exps[0] < len(first) else 0)
    finite_slope_ratio = (w.min_exps[0] >= 0
                          and abs(float(linear_term)) * abs(w.scale) <= tol)
    return {
        "c2": c2,
        "decreasing": decreasing,
        "finite_slope_ratio": finite_slope_ratio,
        "passed": c2 and decreasing and finite_slope_ratio,
    }


def _poly_derivative_exact(w: RadialWeight, k: int, r, order: int) -> Fraction:
    """Rational part of the order-th derivative of piece k at rational r > 0."""
    acc = Fraction(0)
    r = Fraction(r)
    for e, c in enumerate(w.coeffs[k]):
        p = w.min_exps[k] + e
        fac = 1
        for _ in range(order):
            fac *= p
            p -= 1
        if fac != 0:
            acc += c * fac * r**p
    return acc


def _gather(ps: ParticleSystem, x, exclude_center: bool):
    x = np.asarray(x, dtype=float)
    idx = neighbors(ps, x, ps.h, exclude_center=exclude_center)
    diffs = ps.points[idx] - x
    r = np.linalg.norm(diffs, axis=1)
    return x, idx, diffs, r


def sph_interpolant(ps: ParticleSystem, params: SphParams, w_sph: RadialWeight,
                    f: FieldSamples, x) -> float:
    """Kernel interpolant sum_i (m_i/rho_i) f(x_i) w_h(|x - x_i|)."""
    x, idx, _, r = _gather(ps, x, exclude_center=False)
    v = params.volumes()[idx]
    return float(np.sum(v * f.values[idx] * w_sph.evaluate_scaled(ps.h, r)))


def _kernel_gradient_scale(w_sph: RadialWeight, h: float, r: np.ndarray,
                           d: int) -> np.ndarray:
    """w_h'(r) for the scaled kernel: h^(-d-1) w'(r/h)."""
    return w_sph.deriv_value(r / h) / h ** (d + 1)


def sph_gradient(ps: ParticleSystem, params: SphParams, w_sph: RadialWeight,
                 f: FieldSamples, x) -> np.ndarray:
    """Difference-form kernel gradient sum (m/rho)(f(x)-f(x_i)) grad w_h."""
    x, idx, diffs, r = _gather(ps, x, exclude_center=True)
    fx = float(_values_at(ps, f, x.reshape(1, -1))[0])
    if idx.size == 0:
        return np.zeros(ps.dim)
    v = params.volumes()[idx]
    dwh = _kernel_gradient_scale(w_sph, ps.h, r, ps.dim)
    coef = v * (fx - f.values[idx]) * dwh / r
    return (coef[:, None] * diffs).sum(axis=0)


def sph_laplacian(ps: ParticleSystem, params: SphParams, w_sph: RadialWeight,
                  f: FieldSamples, x) -> float:
    """Difference-form kernel Laplacian 2 sum (m/rho)(f(x)-f(x_i)) x_d.grad w_h/|x_d|^2."""
    x, idx, _, r = _gather(ps, x, exclude_center=True)
    fx = float(_values_at(ps, f, x.reshape(1, -1))[0])
    if idx.size == 0:
        return 0.0
    v = params.volumes()[idx]
    dwh = _kernel_gradient_scale(w_sph, ps.h, r, ps.dim)
    return float(2.0 * np.sum(v * (fx - f.values[idx]) * dwh / r))


_UNCOVERED_WARNED: set[str] = set()


def mps_gradient(ps: ParticleSystem, params: MpsParams, w_mps: RadialWeight,
                 f: FieldSamples, x) -> np.ndarray:
    """Number-density gradient (d/n_hat) sum (f_i-f)(x_i-x) w_h / |x_i-x|^2."""
    if w_mps.name not in _UNCOVERED_WARNED and not check_smoothness_order(w_mps, 0):
        _UNCOVERED_WARNED.add(w_mps.name)
        logger.warning(
            "profile %s lacks smoothness order 0; the gradient estimate is "
            "outside the guaranteed regime", w_mps.name)
    x, idx, diffs, r = _gather(ps, x, exclude_center=True)
    fx = float(_values_at(ps, f, x.reshape(1, -1))[0])
    if idx.size == 0:
        return np.zeros(ps.dim)
    wh = w_mps.evaluate_scaled(ps.h, r)
    coef = (f.values[idx] - fx) * wh / r**2
    return (ps.dim / params.number_density) * (coef[:, None] * diffs).sum(axis=0)


def mps_laplacian(ps: ParticleSystem, params: MpsParams, w_mps: RadialWeight,
                  f: FieldSamples, x) -> float:
    """Number-density Laplacian (2d / (n_hat lambda_hat h^2)) sum (f_i-f) w_h.

    The h^2 converts the reference second moment into the scaled kernel's.
    """
    x, idx, _, r = _gather(ps, x, exclude_center=True)
    fx = float(_values_at(ps, f, x.reshape(1, -1))[0])
    if idx.size == 0:
        return 0.0
    wh = w_mps.evaluate_scaled(ps.h, r)
    pref = 2.0 * ps.dim / (params.number_density * params.second_moment * ps.h**2)
    return float(pref * np.sum((f.values[idx] - fx) * wh))


# ---------------------------------------------------------------------------
# Cross-family verification
# ---------------------------------------------------------------------------

EQUIVALENCE_NAMES = ("sph-interp", "sph-grad", "sph-lap", "mps-grad", "mps-lap")


def _random_polynomial_field(rng, degree: int = 3):
    """Random low-degree bivariate polynomial with derivatives of order one
    (keeps the compared operator values at unit scale, so an absolute
    tolerance reads as relative).
    """
    coefs = [(a, b, rng.uniform(-1.0, 1.0) / math.factorial(a + b))
             for a in range(degree + 1) for b in range(degree + 1 - a)]

    def fn(points):
        points = np.atleast_2d(points)
        out = np.zeros(points.shape[0])
        for a, b, c in coefs:
            out += c * points[:, 0] ** a * points[:, 1] ** b
        return out

    return fn


def _well_separated_points(rng, lo, hi, n: int, min_gap: float) -> np.ndarray:
    """Uniform points with a minimum pairwise gap (keeps 1/r factors tame)."""
    pts = np.empty((n, 2))
    have = 0
    while have < n:
        cand = rng.uniform(lo, hi, size=2)
        if have == 0 or np.min(
                np.sum((pts[:have] - cand) ** 2, axis=1)) >= min_gap**2:
            pts[have] = cand
            have += 1
    return pts


def equivalence_suite(seed: int = 11, configs: int = 100, n: int = 50,
                      evals_per_config: int = 3) -> dict[str, float]:
    """Max absolute gap of each native-vs-generalized identity over random
    configurations; all five should sit at rounding level (<= 1e-13).

    Configurations use well-separated points and evaluation sites so the
    compared values stay of order one (the identities are algebraic; close
    pairs would only amplify rounding noise through the 1/r^2 factors).
    """
    from .geometry import ParticleSystem, RectDomain, extend_domain
    from .operators import gradient, interpolate, laplacian
    from .weights import (get_weight, mps_classic_profile,
                          mps_laplacian_transform, sph_transform)

    rng = np.random.Generator(np.random.Philox(seed))
    domain = RectDomain(lower=(0.0, 0.0), upper=(1.0, 1.0), extension=0.3)
    box = extend_domain(domain)
    lo, hi = box.lower_array(), box.upper_array()
    min_gap = 0.6 * math.sqrt(box.volume / n)
    w_sph = get_weight("spline2d")
    w_sph_grad = sph_transform(w_sph)
    w_mps = mps_classic_profile()
    w_mps_lap, _ = mps_laplacian_transform(w_mps, 2)

    worst = {name: 0.0 for name in EQUIVALENCE_NAMES}
    for _ in range(configs):
        pts = _well_separated_points(rng, lo, hi, n, min_gap)
        raw = rng.uniform(0.5, 1.5, size=n)
        vols = raw * (box.volume / raw.sum())
        h = rng.uniform(0.18, 0.28)
        ps = ParticleSystem(domain=domain, points=pts, volumes=vols, h=h)
        ps_mps = ParticleSystem(domain=domain, points=pts,
                                volumes=np.full(n, box.volume / n), h=h)
        fn = _random_polynomial_field(rng)
        f = FieldSamples.from_function(ps, fn)
        f_mps = FieldSamples.from_function(ps_mps, fn)
        rho = rng.uniform(0.5, 2.0, size=n)
        sph = SphParams.from_particle_system(ps, rho)
        mps = MpsParams.canonical(ps_mps, w_mps)
        for _ in range(evals_per_config):
            x = rng.uniform(domain.lower, domain.upper)
            while np.min(np.sum((pts - x) ** 2, axis=1)) < (0.4 * min_gap) ** 2:
                x = rng.uniform(domain.lower, domain.upper)
            worst["sph-interp"] = max(worst["sph-interp"], abs(
                sph_interpolant(ps, sph, w_sph, f, x)
                - interpolate(ps, w_sph, f, x)))
            worst["sph-grad"] = max(worst["sph-grad"], float(np.max(np.abs(
                sph_gradient(ps, sph, w_sph, f, x)
                - gradient(ps, w_sph_grad, f, x)))))
            worst["sph-lap"] = max(worst["sph-lap"], abs(
                sph_laplacian(ps, sph, w_sph, f, x)
                - laplacian(ps, w_sph_grad, f, x)))
            worst["mps-grad"] = max(worst["mps-grad"], float(np.max(np.abs(
                mps_gradient(ps_mps, mps, w_mps, f_mps, x)
                - gradient(ps_mps, w_mps, f_mps, x)))))
            worst["mps-lap"] = max(worst["mps-lap"], abs(
                mps_laplacian(ps_mps, mps, w_mps, f_mps, x)
                - laplacian(ps_mps, w_mps_lap, f_mps, x)))
    return worst
