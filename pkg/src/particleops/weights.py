"""Radial reference weight functions: catalog, checks, construction, transforms.

A reference weight is a continuous radial profile w(r) supported on [0, 1]
whose d-dimensional integral of w(|x|) equals one.  Profiles are stored as
piecewise polynomials with exact rational coefficients times a floating-point
normalization factor, so derivative/transform algebra stays exact while
evaluation stays fast.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly

logger = logging.getLogger(__name__)

# Catalog identifiers accepted by get_weight() and the CLI.
CATALOG_NAMES = ("I1", "I2", "I3", "G1", "G2", "G3", "L1", "L2", "L3")
EXTRA_NAMES = ("spline2d", "mps-classic")

_GAUSS_ORDER = 24  # exact for polynomial integrands up to degree 47


def unit_sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2, 2*pi, 4*pi, ...)."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class RadialWeight:
    """Piecewise-polynomial radial profile on [0, 1], zero beyond.

    On piece k (breaks[k] <= r < breaks[k+1]) the value is

        scale * sum_e coeffs[k][e] * r**(min_exps[k] + e)

    ``min_exps`` allows negative powers so the classic singular profile used
    by some particle methods can be represented (and flagged) alongside the
    admissible polynomial ones.
    """

    name: str
    dim: int
    breaks: tuple[Fraction, ...]
    coeffs: tuple[tuple[Fraction, ...], ...]
    min_exps: tuple[int, ...]
    scale: float = 1.0
    moment_order: int = 1
    smooth_order: int | None = None
    renormalized: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"unsupported dimension {self.dim}")
        if len(self.breaks) != len(self.coeffs) + 1:
            raise ValueError("breaks/coeffs length mismatch")
        if len(self.min_exps) != len(self.coeffs):
            raise ValueError("min_exps/coeffs length mismatch")
        if self.breaks[0] != 0 or self.breaks[-1] != 1:
            raise ValueError("pieces must cover [0, 1]")
        for a, b in zip(self.breaks, self.breaks[1:]):
            if not a < b:
                raise ValueError("breaks must be strictly increasing")

    # -- evaluation -------------------------------------------------------

    @cached_property
    def _tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Float evaluation tables: (breaks, padded coeff matrix, min exps)."""
        width = max(len(c) for c in self.coeffs)
        mat = np.zeros((len(self.coeffs), width))
        for k, c in enumerate(self.coeffs):
            mat[k, : len(c)] = [self.scale * float(q) for q in c]
        brk = np.array([float(b) for b in self.breaks])
        return brk, mat, np.array(self.min_exps, dtype=np.int64)

    def __call__(self, r):
        return self.evaluate(r)

    def evaluate(self, r):
        """Profile value at radius r >= 0 (scalar or array)."""
        r_arr = np.asarray(r, dtype=float)
        brk, mat, mexp = self._tables
        out = np.zeros_like(r_arr)
        for k in range(len(self.coeffs)):
            mask = (r_arr >= brk[k]) & (r_arr < brk[k + 1])
            if not mask.any():
                continue
            vals = npoly.polyval(r_arr[mask], mat[k])
            if mexp[k] != 0:
                with np.errstate(divide="ignore"):
                    vals = vals * r_arr[mask] ** float(mexp[k])
            out[mask] = vals
        return float(out) if np.isscalar(r) or r_arr.ndim == 0 else out

    def evaluate_scaled(self, h: float, r):
        """Value of the h-scaled weight h**(-d) * w(r/h)."""
        if h <= 0:
            raise ValueError(f"influence radius must be positive, got {h}")
        return self.evaluate(np.asarray(r, dtype=float) / h) / h**self.dim

    def deriv_value(self, r):
        """One-sided derivative dw/dr at radius r (piece convention [a, b))."""
        r_arr = np.asarray(r, dtype=float)
        brk, mat, mexp = self._tables
        out = np.zeros_like(r_arr)
        for k in range(len(self.coeffs)):
            mask = (r_arr >= brk[k]) & (r_arr < brk[k + 1])
            if not mask.any():
                continue
            m = int(mexp[k])
            # d/dr sum c_e r^(m+e) = sum c_e (m+e) r^(m+e-1)
            dcoef = mat[k] * (m + np.arange(mat.shape[1]))
            vals = npoly.polyval(r_arr[mask], dcoef)
            if m != 1:
                with np.errstate(divide="ignore"):
                    vals = vals * r_arr[mask] ** float(m - 1)
            out[mask] = vals
        return float(out) if np.isscalar(r) or r_arr.ndim == 0 else out

    # -- exact helpers ----------------------------------------------------

    def piece_value_exact(self, k: int, r: Fraction) -> Fraction:
        """Rational part of the value on piece k at rational r (no scale)."""
        if self.min_exps[k] < 0 and r == 0:
            raise ZeroDivisionError("singular profile at r=0")
        acc = Fraction(0)
        for e, c in enumerate(self.coeffs[k]):
            acc += c * r ** (self.min_exps[k] + e)
        return acc

    def piece_deriv_exact(self, k: int, r: Fraction) -> Fraction:
        acc = Fraction(0)
        for e, c in enumerate(self.coeffs[k]):
            p = self.min_exps[k] + e
            if p != 0:
                acc += c * p * r ** (p - 1)
        return acc

    def lowest_degree_at_zero(self) -> int | None:
        """Smallest exponent with a nonvanishing coefficient on the 0-piece."""
        coefs = self.coeffs[0]
        top = max((abs(float(c)) for c in coefs), default=0.0)
        if top == 0.0:
            return None
        for e, c in enumerate(coefs):
            if abs(float(c)) > 1e-12 * top:
                return self.min_exps[0] + e
        return None

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "moment_order": self.moment_order,
            "smooth_order": self.smooth_order,
            "scale": self.scale,
            "pieces": [
                {
                    "lo": str(self.breaks[k]),
                    "hi": str(self.breaks[k + 1]),
                    "min_exp": self.min_exps[k],
                    "coeffs": [str(c) for c in self.coeffs[k]],
                }
                for k in range(len(self.coeffs))
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RadialWeight":
        pieces = data["pieces"]
        breaks = [Fraction(p["lo"]) for p in pieces] + [Fraction(pieces[-1]["hi"])]
        return cls(
            name=data["name"],
            dim=int(data["dim"]),
            breaks=tuple(breaks),
            coeffs=tuple(tuple(Fraction(c) for c in p["coeffs"]) for p in pieces),
            min_exps=tuple(int(p["min_exp"]) for p in pieces),
            scale=float(data["scale"]),
            moment_order=int(data["moment_order"]),
            smooth_order=data["smooth_order"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RadialWeight":
        return cls.from_dict(json.loads(text))


def _poly_weight(name, dim, scale, coeffs, breaks=(0, 1), min_exps=None,
                 moment_order=1, smooth_order=None) -> RadialWeight:
    coeffs = tuple(tuple(Fraction(c) for c in piece) for piece in coeffs)
    if min_exps is None:
        min_exps = (0,) * len(coeffs)
    return RadialWeight(
        name=name,
        dim=dim,
        breaks=tuple(Fraction(b) for b in breaks),
        coeffs=coeffs,
        min_exps=tuple(min_exps),
        scale=scale,
        moment_order=moment_order,
        smooth_order=smooth_order,
    )


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GAUSS_ORDER)


def radial_moment(w: RadialWeight, power: int) -> float:
    """Gauss-Legendre value of the radial integral of r**power * w(r) on [0, 1].

    Exact for polynomial integrands of degree < 2 * _GAUSS_ORDER, which covers
    every profile in scope; nodes stay strictly inside each piece so singular
    endpoints are never evaluated.
    """
    brk = [float(b) for b in w.breaks]
    total = 0.0
    for k in range(len(w.coeffs)):
        a, b = brk[k], brk[k + 1]
        half = 0.5 * (b - a)
        r = a + half * (_GL_NODES + 1.0)
        vals = w.evaluate(r) * r**power
        total += half * float(np.dot(_GL_WEIGHTS, vals))
    return total


def dim_integral(w: RadialWeight) -> float:
    """d-dimensional integral of w(|x|) over R^d via radial reduction."""
    return unit_sphere_area(w.dim) * radial_moment(w, w.dim - 1)


# ---------------------------------------------------------------------------
# Admissibility and hypothesis checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdmissibilityReport:
    support_ok: bool
    continuous: bool
    absolutely_continuous: bool
    unit_integral: bool
    integral: float

    @property
    def passed(self) -> bool:
        return (self.support_ok and self.continuous
                and self.absolutely_continuous and self.unit_integral)


def check_admissible(w: RadialWeight, tol_continuity: float = 1e-12,
                     tol_integral: float = 1e-10) -> AdmissibilityReport:
    """Verify membership in the admissible reference weight set.

    Checks support [0, 1] (vanishing endpoint value, nonzero tail piece),
    continuity (boundedness at 0 plus matching one-sided values at breaks),
    and the unit d-dimensional integral.  Absolute continuity is automatic
    for continuous piecewise polynomials.
    """
    mag = max((abs(w.scale * float(c)) for piece in w.coeffs for c in piece),
              default=0.0)
    ctol = tol_continuity * max(1.0, mag)

    bounded = w.min_exps[0] >= 0 or all(c == 0 for c in w.coeffs[0])
    continuous = bounded
    for k in range(len(w.coeffs) - 1):
        b = w.breaks[k + 1]
        left = w.scale * float(w.piece_value_exact(k, b))
        right = w.scale * float(w.piece_value_exact(k + 1, b))
        if abs(left - right) > ctol:
            continuous = False

    end_value = w.scale * float(w.piece_value_exact(len(w.coeffs) - 1, Fraction(1)))
    tail_nonzero = any(c != 0 for c in w.coeffs[-1])
    support_ok = abs(end_value) <= ctol and tail_nonzero

    integral = dim_integral(w)
    return AdmissibilityReport(
        support_ok=support_ok,
        continuous=continuous,
        absolutely_continuous=continuous,
        unit_integral=abs(integral - 1.0) <= tol_integral,
        integral=integral,
    )


@dataclass(frozen=True)
class MomentCheck:
    ok: bool
    residuals: dict[int, float]


def check_moment_order(w: RadialWeight, n: int, tol: float = 1e-10) -> MomentCheck:
    """Check the vanishing-moment hypothesis of order n.

    All mixed moments of order 1..n vanish iff the radial moments
    s_{d-1} * int_0^1 r^(d+2j-1) w(r) dr vanish for j = 1..floor(n/2); odd
    moments vanish by radial symmetry, so n = 1 holds vacuously.
    """
    if n < 1:
        raise ValueError(f"moment order must be >= 1, got {n}")
    area = unit_sphere_area(w.dim)
    residuals = {
        j: area * radial_moment(w, w.dim + 2 * j - 1)
        for j in range(1, n // 2 + 1)
    }
    return MomentCheck(ok=all(abs(v) < tol for v in residuals.values()),
                       residuals=residuals)


def check_smoothness_order(w: RadialWeight, k: int, tol: float = 1e-10) -> bool:
    """Check the near-origin smoothness hypothesis of order k.

    Sufficient criterion for piecewise polynomials: the lowest-degree
    monomial at 0 has degree >= k + 1 and the profile is C^1 across interior
    piece boundaries (then w/r^(k+1) and (w/r^k)' stay bounded on (0, 1)).
    """
    if k < 0:
        raise ValueError(f"smoothness order must be >= 0, got {k}")
    p0 = w.lowest_degree_at_zero()
    if p0 is None or p0 < k + 1:
        return False
    mag = max((abs(w.scale * float(c)) for piece in w.coeffs for c in piece),
              default=1.0)
    for j in range(len(w.coeffs) - 1):
        b = w.breaks[j + 1]
        dv = abs(float(w.piece_value_exact(j, b) - w.piece_value_exact(j + 1, b)))
        dd = abs(float(w.piece_deriv_exact(j, b) - w.piece_deriv_exact(j + 1, b)))
        if w.scale * max(dv, dd) > tol * max(1.0, mag):
            return False
    return True


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def construct_polynomial_weight(d: int, n: int, p: int) -> RadialWeight:
    """Build a single-piece polynomial weight with vanishing moments up to n.

    Solves for a_1..a_p in w(r) = gamma * (1 + sum a_l r^l) on [0, 1) under
    the edge conditions w(1) = 0 and w'(1) = 0 and the radial moment
    conditions 1 + sum_l a_l (d+2j)/(d+l+2j) = 0 for j = 1..floor(n/2).
    gamma is then fixed by quadrature so the d-dimensional mass is one.
    Underdetermined systems are resolved minimum-norm.
    """
    if n < 1:
        raise ValueError(f"moment order must be >= 1, got {n}")
    min_degree = n // 2 + 2
    if p < min_degree:
        raise ValueError(
            f"degree p={p} too small for moment order n={n}; need p >= {min_degree}")

    rows = [[1.0] * p, [float(l) for l in range(1, p + 1)]]
    rhs = [-1.0, 0.0]
    for j in range(1, n // 2 + 1):
        rows.append([(d + 2 * j) / (d + l + 2 * j) for l in range(1, p + 1)])
        rhs.append(-1.0)
    a_mat = np.array(rows)
    b_vec = np.array(rhs)

    if a_mat.shape[0] == p:
        try:
            sol = np.linalg.solve(a_mat, b_vec)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"singular coefficient system for (d={d}, n={n}, p={p})") from exc
    else:
        sol, *_ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    if not np.allclose(a_mat @ sol, b_vec, atol=1e-10):
        raise ValueError(f"inconsistent coefficient system for (d={d}, n={n}, p={p})")

    w0 = _poly_weight(f"poly-d{d}-n{n}-p{p}", d, 1.0,
                      [[1.0, *sol.tolist()]], moment_order=n)
    gamma = 1.0 / dim_integral(w0)
    return replace(w0, scale=gamma)


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

def _catalog_raw() -> dict[str, RadialWeight]:
    pi = math.pi
    bspline_pieces = [[1, 0, -6, 6], [2, -6, 6, -2]]
    half = (0, Fraction(1, 2), 1)
    return {
        "I1": _poly_weight("I1", 2, 3 / pi, [[1, -1]], moment_order=1),
        "I2": _poly_weight("I2", 2, 40 / (7 * pi), bspline_pieces, breaks=half,
                           moment_order=1),
        # printed constant 5/pi misses the unit-mass identity; fixed at load
        "I3": _poly_weight("I3", 2, 5 / pi, [[2, -5, 3]], moment_order=3),
        "G1": _poly_weight("G1", 2, 6 / pi, [[0, 1, -1]], moment_order=1,
                           smooth_order=0),
        "G2": _poly_weight("G2", 2, 40 / (7 * pi), [[0, 0, 6, -9], [0, 3, -6, 3]],
                           breaks=half, moment_order=1, smooth_order=0),
        "G3": _poly_weight("G3", 2, 15 / (2 * pi), [[0, 5, -12, 7]],
                           moment_order=3, smooth_order=0),
        "L1": _poly_weight("L1", 2, 10 / pi, [[0, 0, 1, -1]], moment_order=1,
                           smooth_order=1),
        "L2": _poly_weight("L2", 2, 40 / (7 * pi), [[0, 0, 6, -9], [0, 3, -6, 3]],
                           breaks=half, moment_order=1, smooth_order=1),
        "L3": _poly_weight("L3", 2, 30 / pi, [[0, 0, 3, -7, 4]], moment_order=3,
                           smooth_order=1),
    }


def _verify_normalization(w: RadialWeight, tol: float = 1e-8) -> RadialWeight:
    integral = dim_integral(w)
    if abs(integral - 1.0) <= tol:
        return w
    fixed = replace(w, scale=w.scale / integral, renormalized=True)
    logger.warning(
        "catalog weight %s: stored constant gives integral %.12g, "
        "renormalizing scale %.12g -> %.12g",
        w.name, integral, w.scale, fixed.scale)
    return fixed


@lru_cache(maxsize=1)
def _catalog_verified() -> tuple[tuple[str, RadialWeight], ...]:
    return tuple((name, _verify_normalization(w))
                 for name, w in _catalog_raw().items())


def catalog() -> dict[str, RadialWeight]:
    """The nine study weights, normalization re-verified by quadrature at load."""
    return dict(_catalog_verified())


def spline_kernel_2d() -> RadialWeight:
    """Cubic B-spline smoothing kernel (reference form, d=2)."""
    w = catalog()["I2"]
    return replace(w, name="spline2d")


def mps_classic_profile() -> RadialWeight:
    """Classic singular profile 1/r - 1; not admissible (unbounded at 0)."""
    return _poly_weight("mps-classic", 2, 1.0, [[1, -1]], min_exps=(-1,),
                        moment_order=1)


def get_weight(name: str) -> RadialWeight:
    """Resolve a stable identifier (I1..I3, G1..G3, L1..L3, spline2d, mps-classic)."""
    if name in CATALOG_NAMES:
        return catalog()[name]
    if name == "spline2d":
        return spline_kernel_2d()
    if name == "mps-classic":
        return mps_classic_profile()
    raise KeyError(f"unknown weight {name!r}; known: "
                   f"{', '.join(CATALOG_NAMES + EXTRA_NAMES)}")


# ---------------------------------------------------------------------------
# Transforms between operator families
# ---------------------------------------------------------------------------

def _tag_smoothness(w: RadialWeight) -> RadialWeight:
    for k in (1, 0):
        if check_smoothness_order(w, k):
            return replace(w, smooth_order=k)
    return replace(w, smooth_order=None)


def sph_transform(w_sph: RadialWeight) -> RadialWeight:
    """Reference weight whose difference-form operators match the kernel-
    gradient forms built on w_sph:  w(r) = -(r / d) * dw_sph/dr.

    Exact on the rational coefficients; the transform preserves unit mass
    (integration by parts against x/d, using w_sph(1) = 0).
    """
    for k in range(len(w_sph.coeffs) - 1):
        b = w_sph.breaks[k + 1]
        jump = w_sph.piece_value_exact(k, b) - w_sph.piece_value_exact(k + 1, b)
        if abs(float(jump)) * abs(w_sph.scale) > 1e-12:
            raise ValueError(
                f"{w_sph.name}: discontinuous at r={b}, cannot transform")
    d = Fraction(w_sph.dim)
    new_coeffs = tuple(
        tuple(-Fraction(e + w_sph.min_exps[k], 1) / d * c
              for e, c in enumerate(piece))
        for k, piece in enumerate(w_sph.coeffs)
    )
    out = RadialWeight(
        name=f"{w_sph.name}-grad",
        dim=w_sph.dim,
        breaks=w_sph.breaks,
        coeffs=new_coeffs,
        min_exps=w_sph.min_exps,
        scale=w_sph.scale,
        moment_order=1,
    )
    return _tag_smoothness(out)


def mps_lambda(w_mps: RadialWeight, d: int) -> float:
    """Second moment int |x|^2 w(|x|) dx of a radial profile in R^d."""
    return unit_sphere_area(d) * radial_moment(w_mps, d + 1)


def mps_laplacian_transform(w_mps: RadialWeight,
                            d: int | None = None) -> tuple[RadialWeight, float]:
    """Reference weight r^2 w_mps(r) / lambda and the moment lambda itself.

    The transform is admissible (continuous, unit mass) even when w_mps is
    the singular classic profile, because the r^2 factor removes the pole.
    """
    if d is None:
        d = w_mps.dim
    lam = mps_lambda(w_mps, d)
    if not lam > 0:
        raise ValueError(f"{w_mps.name}: second moment must be positive, got {lam}")
    new_coeffs = []
    new_exps = []
    for k, piece in enumerate(w_mps.coeffs):
        shift = w_mps.min_exps[k] + 2
        if shift >= 0:  # store plain polynomials with nonnegative exponents
            new_coeffs.append((Fraction(0),) * shift + tuple(piece))
            new_exps.append(0)
        else:
            new_coeffs.append(tuple(piece))
            new_exps.append(shift)
    out = RadialWeight(
        name=f"{w_mps.name}-lap",
        dim=d,
        breaks=w_mps.breaks,
        coeffs=tuple(new_coeffs),
        min_exps=tuple(new_exps),
        scale=w_mps.scale / lam,
        moment_order=1,
    )
    return _tag_smoothness(out), lam
