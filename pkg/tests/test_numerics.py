import numpy as np
import pytest

from modules.calculus.numerics import generalized_inverse, integrate_log_axis
from modules.errors import NumericError


class TestIntegrateLogAxis:
    """Quadrature on the log axis and its divergence reporting."""

    def test_gamma_half(self):
        value = integrate_log_axis(lambda z: z ** -0.5 * np.exp(-z))
        assert value == pytest.approx(np.sqrt(np.pi), rel=1e-8)

    def test_far_end_overflow_counts_as_zero(self):
        # exp(-z) * z is 0 * inf once z overflows
        assert integrate_log_axis(lambda z: np.exp(-z)) == pytest.approx(1.0, rel=1e-8)

    def test_finite_bounds(self):
        assert integrate_log_axis(lambda z: 1.0, 1.0, 3.0) == pytest.approx(2.0)
        assert integrate_log_axis(lambda z: 1.0, 3.0, 1.0) == 0.0

    @pytest.mark.parametrize("bad", [np.inf, np.nan])
    def test_non_finite_integrand(self, bad):
        with pytest.raises(NumericError) as exc:
            integrate_log_axis(lambda z: bad if z > 1.0 else 0.0, what="test integral")
        assert exc.value.condition == "quadrature divergence"
        assert "test integral" in str(exc.value)


class TestGeneralizedInverse:

    def test_exponential_quantiles(self):
        u = np.array([0.1, 0.5, 0.9])
        y = generalized_inverse(lambda x: 1.0 - np.exp(-x), u)
        np.testing.assert_allclose(y, -np.log1p(-u), rtol=1e-8)

    def test_unbracketed(self):
        with pytest.raises(NumericError) as exc:
            generalized_inverse(lambda x: np.zeros_like(x), np.array([0.5]), what="flat cdf")
        assert exc.value.condition == "bisection bracket for flat cdf"
