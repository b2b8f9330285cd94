# ruff: noqa: PLR6301, PLR2004, E501
import numpy as np
import pytest

from src.fixtures import k2_model
from src.markov import Path, potential_kernel, sample_path
from src.measures import (
    SignedMeasure,
    caf_at,
    caf_total,
    caf_trace,
    revuz_potential,
    verify_revuz,
)

# Test constants
PATH = Path(np.array([0, 1, 0]), np.array([1.0, 2.0, 0.5]))
M = np.array([1.0, 2.0])


class TestSignedMeasure:
    """Test signed measure arithmetic."""

    def test_from_mapping(self):
        """Test building atoms from state names."""
        nu = SignedMeasure.from_mapping(['a', 'b', 'c'], {'b': 2.0})
        np.testing.assert_array_equal(nu.atoms, [0.0, 2.0, 0.0])
        assert nu.to_mapping(['a', 'b', 'c']) == {'a': 0.0, 'b': 2.0, 'c': 0.0}

    def test_unknown_state(self):
        """Test that unknown states are rejected."""
        with pytest.raises(ValueError, match='Unknown states'):
            SignedMeasure.from_mapping(['a'], {'z': 1.0})

    def test_non_finite(self):
        """Test that atoms must be finite."""
        with pytest.raises(ValueError, match='finite'):
            SignedMeasure([1.0, np.inf])

    def test_arithmetic(self):
        """Test sums, differences and scalar multiples."""
        a = SignedMeasure.delta(3, 0)
        b = SignedMeasure.uniform(3, 0.5)
        np.testing.assert_allclose((a + b).atoms, [1.5, 0.5, 0.5])
        np.testing.assert_allclose((a - b).atoms, [0.5, -0.5, -0.5])
        np.testing.assert_allclose((2 * b).atoms, [1.0, 1.0, 1.0])
        np.testing.assert_allclose((-a).atoms, [-1.0, 0.0, 0.0])

    def test_jordan_decomposition(self):
        """Test nu = nu+ - nu- and |nu| = nu+ + nu-."""
        nu = SignedMeasure([1.0, -2.0, 0.5])
        np.testing.assert_allclose(
            (nu.positive - nu.negative).atoms, nu.atoms
        )
        assert nu.total_variation == pytest.approx(3.5)
        assert not nu.is_nonnegative
        assert nu.abs.is_nonnegative

    def test_translate(self):
        """Test translation on a torus grid."""
        nu = SignedMeasure.delta(4, 3)
        np.testing.assert_array_equal(nu.translate([1], [4]).atoms, [1, 0, 0, 0])


class TestAdditiveFunctionals:
    """Test continuous additive functionals along a path."""

    def test_total(self):
        """Test L^nu_inf as a sum of holding times times densities."""
        nu = np.array([1.0, 4.0])
        assert caf_total(PATH, nu, M) == pytest.approx(1.5 * 1.0 + 2.0 * 2.0)

    def test_signed_is_linear(self):
        """Test linearity in nu pathwise."""
        a, b = np.array([1.0, -1.0]), np.array([0.3, 2.0])
        assert caf_total(PATH, a + 2 * b, M) == pytest.approx(
            caf_total(PATH, a, M) + 2 * caf_total(PATH, b, M)
        )

    def test_trace(self):
        """Test the running value of the functional."""
        nu = np.array([1.0, 0.0])
        trace = caf_trace(PATH, nu, M)
        assert trace.at(0.5) == pytest.approx(0.5)
        assert trace.at(2.0) == pytest.approx(1.0)
        assert trace.total == pytest.approx(1.5)
        assert caf_at(PATH, nu, M, 10.0) == pytest.approx(1.5)

    def test_additive_at_split_times(self, k4):
        """Test L^nu_t + L^nu_inf o shift_t = L^nu_inf on sampled paths."""
        rng = np.random.default_rng(31)
        for _ in range(200):
            path = sample_path(k4, int(rng.integers(k4.n)), rng)
            nu = rng.uniform(-1.0, 1.0, size=k4.n)
            t = rng.uniform(0.0, 1.2 * path.lifetime)
            split = caf_at(path, nu, k4.m, t) + caf_total(path.shift(t), nu, k4.m)
            assert split == pytest.approx(caf_total(path, nu, k4.m), rel=0.0, abs=1e-12)

    def test_empty_path(self):
        """Test that a dead path carries nothing."""
        empty = Path(np.empty(0, dtype=int), np.empty(0))
        assert caf_total(empty, [1.0, 1.0], M) == 0.0
        assert caf_at(empty, [1.0, 1.0], M, 1.0) == 0.0

    def test_negative_time(self):
        """Test that t must be nonnegative."""
        with pytest.raises(ValueError, match='t must be nonnegative'):
            caf_at(PATH, [1.0, 0.0], M, -1.0)


class TestRevuz:
    """Test E^x L^nu_inf = sum_y u(x, y) nu(y)."""

    def test_potential(self):
        """Test the exact side on K2."""
        kernel = potential_kernel(k2_model())
        np.testing.assert_allclose(
            revuz_potential(kernel, [1.0, 0.0]), [2.0 / 3.0, 1.0 / 3.0]
        )

    def test_monte_carlo(self, k2):
        """Test the empirical mean against the potential."""
        report = verify_revuz(k2, [1.0, 0.0], 'a', 4000, seed=11)
        assert report.exact == pytest.approx(2.0 / 3.0)
        assert abs(report.z_score) < 4
        assert report.seed == 11
        assert report.chunk_size > 0

    def test_thread_count_does_not_change_the_estimate(self, k2):
        """Test that threads only change who runs a chunk."""
        one = verify_revuz(k2, [1.0, 0.5], 'b', 1500, seed=5, threads=1)
        three = verify_revuz(k2, [1.0, 0.5], 'b', 1500, seed=5, threads=3)
        assert one.estimate == three.estimate

    def test_minimum_samples(self, k2):
        """Test the sample floor."""
        with pytest.raises(ValueError, match='samples must be'):
            verify_revuz(k2, [1.0, 0.0], 'a', 10, seed=1)

    def test_signed_measure_rejected(self, k2):
        """Test that the Revuz check needs a nonnegative measure."""
        with pytest.raises(ValueError, match='nonnegative measure'):
            verify_revuz(k2, [1.0, -1.0], 'a', 2000, seed=1)
