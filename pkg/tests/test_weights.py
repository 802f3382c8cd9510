import math
from fractions import Fraction

import numpy as np
import pytest

from particleops import (RadialWeight, catalog, check_admissible,
                         check_moment_order, check_smoothness_order,
                         construct_polynomial_weight, dim_integral,
                         get_weight, mps_classic_profile, mps_lambda,
                         mps_laplacian_transform, radial_moment,
                         spline_kernel_2d, sph_transform, unit_sphere_area)

from conftest import exact_radial_moment, tensor_moment_2d

PI = math.pi


class TestEvaluate:
    def test_i1_at_zero(self):
        assert get_weight("I1").evaluate(0.0) == pytest.approx(3 / PI,
                                                               rel=1e-15)

    def test_support_vanishes(self):
        for name in ("I1", "I2", "I3", "G1", "G2", "G3", "L1", "L2", "L3"):
            w = get_weight(name)
            assert w.evaluate(1.5) == 0.0
            assert w.evaluate(1.0) == 0.0

    def test_g1_midpoint(self):
        val = get_weight("G1").evaluate(0.4)
        assert val == pytest.approx((6 / PI) * 0.4 * 0.6, rel=1e-14)
        assert val == pytest.approx(0.4583662, abs=1e-7)

    def test_vectorized_matches_scalar(self):
        w = get_weight("I2")
        rs = np.linspace(0, 1.2, 57)
        vec = w.evaluate(rs)
        assert vec == pytest.approx([w.evaluate(float(r)) for r in rs],
                                    rel=1e-15)


class TestEvaluateScaled:
    def test_i1_scaled_origin(self):
        w = get_weight("I1")
        assert w.evaluate_scaled(0.5, 0.0) == pytest.approx(
            4 * 3 / PI, rel=1e-14)
        assert w.evaluate_scaled(0.5, 0.0) == pytest.approx(3.8197186,
                                                            abs=1e-7)

    def test_vanishes_beyond_h(self):
        for name in ("I1", "G2", "L3"):
            w = get_weight(name)
            assert w.evaluate_scaled(0.3, 0.3) == 0.0
            assert w.evaluate_scaled(0.3, 0.45) == 0.0

    def test_scaling_preserves_mass(self):
        # 2-d mass of the scaled weight via the radial reduction r -> r/h,
        # checked against the exact rational antiderivative oracle
        h = 0.37
        for name in ("I1", "I3", "G3"):
            w = get_weight(name)
            rs, wts = np.polynomial.legendre.leggauss(80)
            half = h / 2
            r = half * (rs + 1)
            vals = w.evaluate_scaled(h, r) * r
            mass = 2 * PI * half * float(wts @ vals)
            exact = 2 * PI * exact_radial_moment(w, 1)
            assert mass == pytest.approx(exact, abs=1e-10)
            assert mass == pytest.approx(1.0, abs=1e-10)

    def test_nonpositive_h_rejected(self):
        with pytest.raises(ValueError):
            get_weight("I1").evaluate_scaled(0.0, 0.1)


class TestAdmissibility:
    def test_catalog_all_admissible(self):
        for name, w in catalog().items():
            report = check_admissible(w)
            assert report.passed, (name, report)
            assert report.integral == pytest.approx(1.0, abs=1e-10)

    def test_i1_integral_tight(self):
        report = check_admissible(get_weight("I1"))
        assert report.integral == pytest.approx(1.0, abs=1e-12)

    def test_classic_profile_fails(self):
        report = check_admissible(mps_classic_profile())
        assert not report.continuous
        assert not report.passed

    def test_zero_function_fails(self):
        w = RadialWeight(name="zero", dim=2, breaks=(Fraction(0), Fraction(1)),
                         coeffs=((Fraction(0),),), min_exps=(0,))
        report = check_admissible(w)
        assert not report.unit_integral
        assert not report.passed


class TestMomentOrder:
    def test_i3_passes_n3(self):
        res = check_moment_order(get_weight("I3"), 3)
        assert res.ok
        assert abs(res.residuals[1]) < 1e-12

    def test_i1_fails_n3_with_reference_residual(self):
        res = check_moment_order(get_weight("I1"), 3)
        assert not res.ok
        # radial moment 1/20 * (3/pi) times the circle measure 2*pi
        assert res.residuals[1] == pytest.approx(0.3, abs=1e-12)

    def test_n1_vacuous(self):
        for name in ("I1", "G1", "L1"):
            assert check_moment_order(get_weight(name), 1).ok

    def test_high_order_tags(self):
        for name in ("I3", "G3", "L3"):
            assert check_moment_order(get_weight(name), 3).ok
        for name in ("I1", "I2", "G1", "G2", "L1", "L2"):
            assert not check_moment_order(get_weight(name), 3).ok

    def test_radial_reduction_matches_tensor_quadrature(self):
        # cross-validation of the radial reduction on mixed moments; the
        # support-edge kink limits the Gauss product rule to ~2e-6 at 200
        # nodes per axis, so 400 are used to certify the 1e-6 agreement
        for name in ("I1", "I3", "G1", "L2"):
            w = get_weight(name)
            for alpha in [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1),
                          (3, 0), (1, 2)]:
                if any(a % 2 for a in alpha):
                    radial = 0.0
                else:
                    from particleops import weighted_monomial_integral
                    radial = weighted_monomial_integral(w, 1.0, alpha)
                tensor = tensor_moment_2d(w, alpha, nodes=400)
                assert abs(radial - tensor) < 1e-6, (name, alpha)


class TestSmoothnessOrder:
    def test_reference_cases(self):
        assert check_smoothness_order(get_weight("G1"), 0)
        assert not check_smoothness_order(get_weight("G1"), 1)
        assert check_smoothness_order(get_weight("L1"), 1)
        assert not check_smoothness_order(get_weight("I1"), 0)

    def test_catalog_claims_hold(self):
        cat = catalog()
        for name in ("G1", "G2", "G3"):
            assert check_smoothness_order(cat[name], 0), name
        for name in ("L1", "L2", "L3"):
            assert check_smoothness_order(cat[name], 1), name

    def test_classic_profile_fails_any(self):
        assert not check_smoothness_order(mps_classic_profile(), 0)


class TestConstructor:
    def test_reference_cubic(self):
        w = construct_polynomial_weight(2, 3, 3)
        coefs = [float(c) for c in w.coeffs[0]]
        assert coefs[0] == pytest.approx(1.0, abs=1e-14)
        assert coefs[1] == pytest.approx(-3.75, abs=1e-12)
        assert coefs[2] == pytest.approx(4.5, abs=1e-12)
        assert coefs[3] == pytest.approx(-1.75, abs=1e-12)
        assert w.scale == pytest.approx(20 / PI, rel=1e-12)
        assert check_moment_order(w, 3).ok
        assert check_admissible(w).passed

    def test_reference_cubic_against_hand_solve(self):
        # independent oracle: assemble and solve the 3x3 system directly
        a = np.array([[1.0, 1.0, 1.0],
                      [1.0, 2.0, 3.0],
                      [4 / 5, 4 / 6, 4 / 7]])
        b = np.array([-1.0, 0.0, -1.0])
        sol = np.linalg.solve(a, b)
        w = construct_polynomial_weight(2, 3, 3)
        got = [float(c) for c in w.coeffs[0][1:]]
        assert got == pytest.approx(sol.tolist(), abs=1e-12)

    def test_edge_only_case(self):
        w = construct_polynomial_weight(2, 1, 2)
        coefs = [float(c) for c in w.coeffs[0]]
        assert coefs == pytest.approx([1.0, -2.0, 1.0], abs=1e-13)
        assert w.scale == pytest.approx(6 / PI, rel=1e-12)

    def test_degree_precondition(self):
        with pytest.raises(ValueError, match="too small"):
            construct_polynomial_weight(2, 3, 2)

    @pytest.mark.parametrize("d", [1, 2])
    @pytest.mark.parametrize("n", [1, 3, 5])
    def test_constructed_family_valid(self, d, n):
        for p in range(n // 2 + 2, 7):
            w = construct_polynomial_weight(d, n, p)
            assert check_admissible(w).passed, (d, n, p)
            assert check_moment_order(w, n).ok, (d, n, p)


class TestCatalog:
    def test_g3_unit_mass(self):
        assert dim_integral(get_weight("G3")) == pytest.approx(1.0, abs=1e-12)

    def test_l3_moment(self):
        res = check_moment_order(get_weight("L3"), 3)
        assert abs(res.residuals[1]) < 1e-12

    def test_i3_renormalized_constant(self, caplog):
        w = catalog()["I3"]
        assert w.renormalized
        assert w.scale == pytest.approx(6 / PI, rel=1e-12)

    def test_renormalization_logged(self):
        import importlib
        import logging
        import particleops.weights as wmod
        wmod._catalog_verified.cache_clear()
        with pytest.MonkeyPatch.context() as mp:
            records = []
            handler = logging.Handler()
            handler.emit = lambda record: records.append(record)
            log = logging.getLogger("particleops.weights")
            log.addHandler(handler)
            try:
                catalog()
            finally:
                log.removeHandler(handler)
        assert any("renormaliz" in r.getMessage() for r in records)

    def test_only_i3_renormalized(self):
        cat = catalog()
        assert [n for n, w in cat.items() if w.renormalized] == ["I3"]

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            get_weight("Q7")

    def test_exact_moments_against_quadrature(self):
        # quadrature path vs exact rational antiderivative path
        for name, w in catalog().items():
            for power in (1, 2, 3, 5):
                assert radial_moment(w, power) == pytest.approx(
                    exact_radial_moment(w, power), abs=1e-13)


class TestSphTransform:
    def test_spline_maps_to_g2_exactly(self):
        t = sph_transform(spline_kernel_2d())
        g2 = catalog()["G2"]
        assert t.breaks == g2.breaks
        assert t.coeffs == g2.coeffs  # exact rational comparison
        assert t.min_exps == g2.min_exps
        assert t.scale == g2.scale

    def test_transform_preserves_mass(self):
        for name in ("I2", "spline2d"):
            t = sph_transform(get_weight(name))
            assert dim_integral(t) == pytest.approx(1.0, abs=1e-10)

    def test_transform_admissible(self):
        t = sph_transform(spline_kernel_2d())
        assert check_admissible(t).passed
        # the transformed profile vanishes quadratically at zero
        assert check_smoothness_order(t, 0)

    def test_zero_beyond_support(self):
        t = sph_transform(spline_kernel_2d())
        assert t.evaluate(1.2) == 0.0


class TestMpsTransform:
    def test_classic_lambda(self):
        w, lam = mps_laplacian_transform(mps_classic_profile(), 2)
        assert lam == pytest.approx(PI / 6, rel=1e-12)
        assert lam == pytest.approx(0.5235988, abs=1e-7)

    def test_classic_transform_is_admissible(self):
        w, _ = mps_laplacian_transform(mps_classic_profile(), 2)
        assert check_admissible(w).passed
        # r^2 (1/r - 1) / lambda = (6/pi)(r - r^2): the quadratic profile
        g1 = catalog()["G1"]
        assert w.coeffs == g1.coeffs
        assert w.scale == pytest.approx(g1.scale, rel=1e-14)

    def test_polynomial_input_admissible(self):
        w, lam = mps_laplacian_transform(get_weight("I2"), 2)
        assert lam > 0
        assert check_admissible(w).passed

    def test_lambda_scales_linearly(self):
        from dataclasses import replace
        w = get_weight("I1")
        assert mps_lambda(replace(w, scale=3.0 * w.scale), 2) == pytest.approx(
            3.0 * mps_lambda(w, 2), rel=1e-14)

    def test_lambda_positive_for_nonnegative_profiles(self):
        for name in ("I1", "I2", "G1", "L1", "mps-classic"):
            assert mps_lambda(get_weight(name), 2) > 0
        # signed order-3 weights have vanishing second moment by construction
        assert mps_lambda(get_weight("L3"), 2) == pytest.approx(0.0, abs=1e-12)


class TestSerialization:
    def test_json_round_trip(self):
        for name in ("I2", "L3", "mps-classic"):
            w = get_weight(name)
            back = RadialWeight.from_json(w.to_json())
            assert back.breaks == w.breaks
            assert back.coeffs == w.coeffs
            assert back.min_exps == w.min_exps
            assert back.scale == w.scale
            rs = np.linspace(0, 1, 37)[1:]
            assert np.array_equal(back.evaluate(rs), w.evaluate(rs))


def test_unit_sphere_area_values():
    assert unit_sphere_area(1) == pytest.approx(2.0, rel=1e-15)
    assert unit_sphere_area(2) == pytest.approx(2 * PI, rel=1e-15)
    assert unit_sphere_area(3) == pytest.approx(4 * PI, rel=1e-15)
