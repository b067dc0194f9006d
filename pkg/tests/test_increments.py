import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import lognorm, norm

from modules.calculus.increments import (
    Discrete, Empirical, LogNormal, HuslerReiss, PickandsIncrement, ReversedIncrement,
    increment_from_pickands, pickands_from_increment, reverse_increment, alpha_moment,
    sample_increment, increment_density, reverse_density, increment_from_dict,
)
from modules.calculus.pickands import (
    GridPickands, HuslerReissPickands, comonotone_pickands, independence_pickands,
)
from modules.calculus.workers import set_thread_cap
from modules.errors import ConfigError, PreconditionError

from conftest import degenerate

Z = np.geomspace(1e-3, 1e3, 200)


class TestDiscrete:
    """Finite atom laws."""

    def test_merges_and_sorts_atoms(self):
        m = Discrete([2.0, 0.0, 2.0], [0.25, 0.5, 0.25])
        assert_array_equal(m.values, [0.0, 2.0])
        assert_allclose(m.weights, [0.5, 0.5])

    def test_cdf_and_atoms(self):
        m = Discrete([0.0, 2.0], [0.5, 0.5])
        assert_allclose(m.cdf([-1.0, 0.0, 1.0, 2.0]), [0.0, 0.5, 0.5, 1.0])
        assert_allclose(m.cdf_left([0.0, 2.0]), [0.0, 0.5])
        assert m.zero_mass == pytest.approx(0.5)
        assert m.atom_mass(2.0) == pytest.approx(0.5)

    def test_ppf_is_generalised_inverse(self):
        m = Discrete([0.0, 2.0], [0.5, 0.5])
        assert_allclose(m.ppf([0.1, 0.5, 0.75, 1.0]), [0.0, 0.0, 2.0, 2.0])

    def test_partial_mean(self):
        m = Discrete([0.5, 1.5], [0.5, 0.5])
        assert_allclose(m.partial_mean([0.4, 0.5, 1.0, 2.0]), [0.0, 0.25, 0.25, 1.0])

    @pytest.mark.parametrize("values, weights", [
        ([1.0], [0.5]),
        ([-1.0], [1.0]),
        ([1.0, 2.0], [1.0, 0.0]),
        ([], []),
    ])
    def test_invalid(self, values, weights):
        with pytest.raises(ConfigError):
            Discrete(values, weights)

    def test_empirical(self):
        m = Empirical([0.0, 1.0, 1.0, 3.0])
        assert m.cdf(1.0) == pytest.approx(0.75)
        assert m.moment(1.0) == pytest.approx(1.25)
        assert m.zero_mass == pytest.approx(0.25)


class TestFromPickands:
    """increment_from_pickands examples."""

    def test_comonotone(self):
        m = increment_from_pickands(comonotone_pickands())
        assert isinstance(m, Discrete) and m.is_degenerate
        assert m.values[0] == pytest.approx(1.0)

    def test_independence(self):
        m = increment_from_pickands(independence_pickands())
        assert_allclose(m.values, [0.0])

    def test_husler_reiss_closed_form(self):
        m = increment_from_pickands(HuslerReissPickands(1.0))
        assert isinstance(m, HuslerReiss)
        assert m.cdf(1.0) == pytest.approx(norm.cdf(1.0), abs=1e-12)

    def test_grid_is_exactly_discrete(self):
        A = GridPickands([0.0, 0.5, 1.0], [1.0, 0.75, 1.0])
        exact = increment_from_pickands(A)
        assert_allclose(exact.values, [0.0, 1.0])
        assert_allclose(exact.weights, [0.5, 0.5])
        z = np.array([0.25, 0.5, 2.0, 4.0])
        assert_allclose(PickandsIncrement(A).cdf(z), exact.cdf(z), atol=1e-14)

    def test_pickands_increment_matches_lognormal(self):
        m = PickandsIncrement(HuslerReissPickands(1.0))
        hr = HuslerReiss(1.0)
        assert_allclose(m.cdf(Z), hr.cdf(Z), atol=1e-10)
        assert m.moment(1.0) == pytest.approx(1.0)
        assert_allclose(m.density(Z[::20]), hr.density(Z[::20]), rtol=1e-8)

    def test_pickands_round_trip(self):
        A = pickands_from_increment(Discrete([0.0, 1.0], [0.5, 0.5]))
        w = np.linspace(0.0, 1.0, 11)
        assert_allclose(A.evaluate(w), GridPickands([0.0, 0.5, 1.0], [1.0, 0.75, 1.0]).evaluate(w),
                        atol=1e-14)


class TestReverse:
    """Increment reversal."""

    def test_discrete_to_degenerate(self):
        m = reverse_increment(Discrete([0.0, 2.0], [0.5, 0.5]), 1.0, 1.0, 1.0)
        assert_allclose(m.values, [0.5])
        assert_allclose(m.weights, [1.0])

    def test_degenerate_gains_zero_atom(self):
        m = reverse_increment(degenerate(0.5), 1.0, 1.0, 1.0)
        assert_allclose(m.values, [0.0, 2.0])
        assert_allclose(m.weights, [0.5, 0.5])

    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
    def test_husler_reiss_self_reversal(self, lam):
        hr = HuslerReiss(lam)
        rev = reverse_increment(hr, 1.0, 1.0, 1.0)
        assert isinstance(rev, HuslerReiss)
        assert np.max(np.abs(rev.cdf(Z) - hr.cdf(Z))) <= 1e-8

    def test_discrete_involution(self):
        m = Discrete([0.5, 1.5], [0.5, 0.5])
        back = reverse_increment(reverse_increment(m, 1.0, 1.0, 1.0), 1.0, 1.0, 1.0)
        assert_allclose(back.values, m.values)
        assert_allclose(back.weights, m.weights)

    def test_involution_with_constants(self):
        # E[M^2] = c_b / c_a = 2.5
        m = Discrete([1.0, 2.0], [0.5, 0.5])
        back = reverse_increment(reverse_increment(m, 2.0, 5.0, 2.0), 5.0, 2.0, 2.0)
        assert_allclose(back.values, m.values)
        assert_allclose(back.weights, m.weights)

    def test_lognormal_closed_form(self):
        rev = reverse_increment(LogNormal(-1.0, 1.0), 1.0, 1.0, 1.0)
        assert rev.zero_mass == pytest.approx(1.0 - np.exp(-0.5))
        assert rev.moment(1.0) == pytest.approx(1.0)

    def test_quadrature_reversal_matches_closed_form(self):
        base = LogNormal(-1.0, 1.0)
        closed = reverse_increment(base, 1.0, 1.0, 1.0)
        quad = ReversedIncrement(base, 1.0, 1.0)
        z = np.array([0.1, 0.5, 1.0, 3.0, 10.0])
        assert_allclose(quad.cdf(z), closed.cdf(z), atol=1e-7)
        assert quad.zero_mass == pytest.approx(closed.zero_mass, abs=1e-9)
        assert_allclose(quad.density(z), closed.density(z), rtol=1e-10)

    def test_reverse_of_reverse_is_base(self):
        base = LogNormal(-1.0, 1.0)
        assert reverse_increment(ReversedIncrement(base, 1.0, 1.0), 1.0, 1.0, 1.0) is base

    def test_flipped_pickands_reversal(self):
        A = HuslerReissPickands(1.0).flipped()
        rev = reverse_increment(PickandsIncrement(A), 1.0, 1.0, 1.0)
        assert isinstance(rev, PickandsIncrement)
        assert rev.A is A.base

    def test_quadrature_needs_density(self):
        with pytest.raises(PreconditionError):
            ReversedIncrement(Discrete([0.5, 1.0], [0.5, 0.5]), 1.0, 1.0)

    def test_moment_consistency(self):
        with pytest.raises(PreconditionError) as exc:
            reverse_increment(degenerate(2.0), 1.0, 1.0, 1.0)
        assert exc.value.condition == "moment consistency of reversed increment"

    def test_bad_constants(self):
        with pytest.raises(ConfigError):
            reverse_increment(degenerate(0.5), 0.0, 1.0, 1.0)


class TestMomentsAndDensities:

    def test_examples(self):
        assert alpha_moment(HuslerReiss(1.0), 1.0) == 1.0
        assert alpha_moment(degenerate(3.0), 2.0) == pytest.approx(9.0)
        assert alpha_moment(Discrete([0.0, 2.0], [0.5, 0.5]), 2.0) == pytest.approx(2.0)

    def test_alpha_must_be_positive(self):
        with pytest.raises(ConfigError):
            alpha_moment(degenerate(1.0), 0.0)

    def test_husler_reiss_density(self):
        hr = HuslerReiss(1.0)
        assert_allclose(increment_density(hr, Z), lognorm.pdf(Z, s=2.0, scale=np.exp(-2.0)))

    def test_discrete_has_no_density(self):
        with pytest.raises(PreconditionError) as exc:
            increment_density(degenerate(1.0), 1.0)
        assert exc.value.condition == "increment density"

    def test_husler_reiss_density_symmetry(self):
        hr = HuslerReiss(0.5)
        q_rev = reverse_density(hr.density, 1.0, 1.0, 1.0)
        assert_allclose(q_rev(Z), hr.density(Z), rtol=1e-10, atol=1e-14)


class TestSampling:
    """Seeded block sampling."""

    def test_degenerate(self):
        assert_array_equal(sample_increment(degenerate(1.0), 3, seed=0), [1.0, 1.0, 1.0])

    def test_zero_fraction(self):
        n = 200_000
        draws = sample_increment(Discrete([0.0, 2.0], [0.5, 0.5]), n, seed=3)
        assert abs(np.mean(draws == 0.0) - 0.5) <= 4 * np.sqrt(0.25 / n)

    def test_husler_reiss_mean(self):
        n = 200_000
        draws = sample_increment(HuslerReiss(1.0), n, seed=1)
        assert abs(draws.mean() - 1.0) <= 4 * np.sqrt(np.expm1(4.0) / n)

    @pytest.mark.slow
    def test_husler_reiss_mean_full(self):
        draws = sample_increment(HuslerReiss(1.0), 1_000_000, seed=0)
        assert 0.978 <= draws.mean() <= 1.022

    def test_reversed_draws(self):
        rev = ReversedIncrement(LogNormal(-1.0, 1.0), 1.0, 1.0)
        draws = sample_increment(rev, 20_000, seed=2)
        assert np.mean(draws == 0.0) == pytest.approx(rev.zero_mass, abs=0.02)

    def test_independent_of_thread_count(self, restore_threads):
        hr = HuslerReiss(1.0)
        set_thread_cap(1)
        one = sample_increment(hr, 5_000, seed=7, block_size=1_000)
        set_thread_cap(4)
        four = sample_increment(hr, 5_000, seed=7, block_size=1_000)
        assert_array_equal(one, four)

    def test_seed_changes_draws(self):
        hr = HuslerReiss(1.0)
        assert not np.array_equal(sample_increment(hr, 10, seed=0),
                                  sample_increment(hr, 10, seed=1))


class TestFromDict:

    def test_discrete_pairs_and_dicts(self):
        a = increment_from_dict({"type": "discrete", "atoms": [[0, 0.5], [2, 0.5]]})
        b = increment_from_dict({"type": "discrete",
                                 "atoms": [{"value": 0, "weight": 0.5},
                                           {"value": 2, "weight": 0.5}]})
        assert_array_equal(a.values, b.values)

    def test_lognormal_with_zero_mass(self):
        m = increment_from_dict({"type": "lognormal", "mu": 0, "sigma": 1, "zero_mass": 0.2})
        assert m.zero_mass == pytest.approx(0.2)

    def test_pickands_grid(self):
        m = increment_from_dict({"type": "pickands_grid", "w": [0, 0.5, 1], "A": [1, 0.75, 1]})
        assert isinstance(m, Discrete)

    def test_round_trip_of_to_dict(self):
        m = HuslerReiss(0.7)
        assert increment_from_dict(m.to_dict()).lam == pytest.approx(0.7)

    def test_unknown(self):
        with pytest.raises(ConfigError):
            increment_from_dict({"type": "gamma"})
