import math

import numpy as np
import pytest

from trackassoc.quadrature import (IntegrationError, adaptive_integrate, gauss_hermite,
                                   normal_upper_tail)


def reference_upper_tail(x):
    """From-scratch standard-normal upper tail (series core, continued-fraction tail).

    Independent of scipy: Taylor series of the central integral for |x| <= 4,
    backward-recurrence continued fraction for the far tail.
    """
    if x < 0:
        return 1.0 - reference_upper_tail(-x)
    if x <= 4.0:
        # integral of pdf over [0, x] as an alternating series
        term = x
        total = x
        k = 0
        while abs(term) > 1e-22 * max(1.0, abs(total)):
            k += 1
            term *= -x * x / (2.0 * k)
            total += term / (2 * k + 1)
        return 0.5 - total / math.sqrt(2.0 * math.pi)
    # Q(x) = pdf(x) / (x + 1/(x + 2/(x + 3/(x + ...))))
    cf = 0.0
    for k in range(200, 0, -1):
        cf = k / (x + cf)
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return pdf / (x + cf)


class TestNormalUpperTail:
    def test_center(self):
        assert normal_upper_tail(0.0) == pytest.approx(0.5, abs=1e-15)

    def test_tail_limits(self):
        assert normal_upper_tail(40.0) == 0.0
        assert normal_upper_tail(-40.0) == pytest.approx(1.0, abs=1e-15)

    def test_quantile_1p96(self):
        # frozen from reference_upper_tail(1.96)
        assert reference_upper_tail(1.96) == pytest.approx(0.024997895148220595, abs=1e-16)
        assert normal_upper_tail(1.96) == pytest.approx(0.024997895148220595, abs=1e-14)

    def test_symmetry(self):
        x = np.linspace(-6, 6, 121)
        np.testing.assert_allclose(normal_upper_tail(-x), 1.0 - normal_upper_tail(x),
                                   rtol=0, atol=1e-15)

    def test_against_independent_reference(self):
        for x in np.linspace(-4, 4, 321):
            assert normal_upper_tail(x) == pytest.approx(reference_upper_tail(x), abs=1e-14)
        for x in np.linspace(4, 30, 53):
            assert normal_upper_tail(x) == pytest.approx(reference_upper_tail(x), rel=1e-11)

    def test_classical_relation(self):
        from scipy.special import erfc
        x = np.linspace(-8, 8, 161)
        np.testing.assert_allclose(normal_upper_tail(x), 0.5 * erfc(x / math.sqrt(2)),
                                   rtol=0, atol=1e-16)


class TestGaussHermite:
    def test_weight_normalization(self):
        for order in (1, 2, 16, 48, 128):
            _, w = gauss_hermite(order)
            assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_second_moment(self):
        x, w = gauss_hermite(24)
        assert float(w @ x**2) == pytest.approx(1.0, abs=1e-12)

    def test_fourth_moment(self):
        x, w = gauss_hermite(24)
        assert float(w @ x**4) == pytest.approx(3.0, abs=1e-12)

    def test_polynomial_exactness(self):
        # E[Z^8] = 105 needs order >= 5
        x, w = gauss_hermite(5)
        assert float(w @ x**8) == pytest.approx(105.0, rel=1e-12)

    def test_unsupported_order(self):
        with pytest.raises(ValueError):
            gauss_hermite(0)
        with pytest.raises(ValueError):
            gauss_hermite(10_000)


class TestAdaptiveIntegrate:
    def test_chi2_density_normalization(self):
        def density(v):
            return 0.5 * np.exp(-v / 2.0)   # chi-square with 2 dof

        val, err = adaptive_integrate(density, 0.0, 60.0, abs_tol=1e-9)
        assert val == pytest.approx(1.0, abs=1e-8)
        assert err < 1e-8

    def test_half_angle_sine(self):
        val, _ = adaptive_integrate(lambda t: np.sin(t / 2.0) ** 2, 0.0, 2.0 * np.pi,
                                    abs_tol=1e-12)
        assert val == pytest.approx(np.pi, abs=1e-11)

    def test_matches_gauss_hermite(self):
        def f(x):
            return np.cos(x) * np.exp(-(x**2) / 2.0) / math.sqrt(2.0 * math.pi)

        val, _ = adaptive_integrate(f, -12.0, 12.0, abs_tol=1e-12)
        x, w = gauss_hermite(64)
        assert val == pytest.approx(float(w @ np.cos(x)), abs=1e-8)

    def test_max_depth_error_carries_estimate(self):
        def nasty(x):
            return np.abs(x - math.pi / 10.0) ** -0.5

        with pytest.raises(IntegrationError) as exc:
            adaptive_integrate(nasty, 0.0, 1.0, abs_tol=1e-13, max_depth=6)
        assert math.isfinite(exc.value.estimate)
        assert exc.value.error_bound > 0

    def test_bad_interval(self):
        with pytest.raises(ValueError):
            adaptive_integrate(np.exp, 1.0, 1.0)
