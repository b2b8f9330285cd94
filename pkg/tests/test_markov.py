# ruff: noqa: PLR6301, PLR2004, E501
import math

import numpy as np
import pytest
from scipy import integrate, linalg, stats

from src.errors import (
    DualityWarning,
    NegativeRateError,
    NonpositiveWeightError,
    NonTransientError,
)
from src.markov import (
    Path,
    bridge_moment,
    build_model,
    model_from_spec,
    model_to_spec,
    ordered_integral,
    ordered_sum,
    potential_kernel,
    sample_bridge,
    sample_path,
    transition_density,
)

# Oracles
K2_U = np.array([[2.0, 1.0], [1.0, 2.0]]) / 3.0


def k2_diagonal_density(t):
    return math.exp(-t) * (1.0 + math.exp(-2.0 * t)) / 2.0


class TestBuildModel:
    """Test model construction and validation."""

    def test_k2_generator(self, k2):
        """Test the generator of the two-state chain."""
        np.testing.assert_allclose(k2.generator, [[-2.0, 1.0], [1.0, -2.0]])
        assert k2.states == ('a', 'b')
        assert k2.decay_rate == pytest.approx(1.0)

    def test_negative_rate(self):
        """Test that negative jump rates are rejected."""
        with pytest.raises(NegativeRateError):
            build_model([[0.0, -1.0], [1.0, 0.0]], [1.0, 1.0], [1.0, 1.0])

    def test_nonpositive_weight(self):
        """Test that reference weights must be positive."""
        with pytest.raises(NonpositiveWeightError):
            build_model([[0.0, 1.0], [1.0, 0.0]], [1.0, 1.0], [1.0, 0.0])

    def test_non_transient(self):
        """Test that a conservative chain is rejected."""
        with pytest.raises(NonTransientError):
            build_model([[0.0, 1.0], [1.0, 0.0]], [0.0, 0.0], [1.0, 1.0])

    def test_non_transient_is_value_error(self):
        """Test that validation errors are ValueErrors."""
        with pytest.raises(ValueError, match='nonnegative real part'):
            build_model([[0.0, 1.0], [1.0, 0.0]], [0.0, 0.0], [1.0, 1.0])

    def test_duality_warning(self):
        """Test the warning when m is not excessive for the dual chain."""
        with pytest.warns(DualityWarning):
            build_model([[0.0, 5.0], [0.0, 0.0]], [0.0, 1.0], [1.0, 1.0])

    def test_spec_round_trip(self, k4):
        """Test that a model survives its JSON document."""
        spec = model_to_spec(k4)
        again = model_from_spec(spec.model_validate_json(spec.model_dump_json()))
        assert again.states == k4.states
        np.testing.assert_allclose(
            potential_kernel(again).u, potential_kernel(k4).u, rtol=1e-14
        )

    def test_index(self, k2):
        """Test state lookup by name and position."""
        assert k2.index('b') == 1
        assert k2.index(0) == 0
        with pytest.raises(ValueError, match='Unknown state'):
            k2.index('c')
        with pytest.raises(ValueError, match='out of range'):
            k2.index(2)


class TestKernels:
    """Test transition and potential densities."""

    def test_k2_potential(self, k2):
        """Test u = (1/3)[[2, 1], [1, 2]]."""
        kernel = potential_kernel(k2)
        np.testing.assert_allclose(kernel.u, K2_U, rtol=1e-12)
        assert kernel.symmetric

    def test_k2_transition_density(self, k2):
        """Test p_t(a, a) against its spectral form."""
        for t in (0.1, 1.0, 3.0):
            p = transition_density(k2, t)
            assert p[0, 0] == pytest.approx(k2_diagonal_density(t), rel=1e-12)

    def test_transition_density_rejects_nonpositive_time(self, k2):
        """Test that t must be positive."""
        with pytest.raises(ValueError, match='t must be positive'):
            transition_density(k2, 0.0)

    def test_potential_identity(self, k4):
        """Test that -Q applied to the Green matrix is the identity."""
        kernel = potential_kernel(k4)
        np.testing.assert_allclose(
            -k4.generator @ kernel.green, np.eye(k4.n), atol=1e-12
        )

    def test_apply(self, k4):
        """Test U f(x) = sum_y u(x, y) f(y) m_y."""
        kernel = potential_kernel(k4)
        f = np.arange(1.0, k4.n + 1)
        np.testing.assert_allclose(kernel.apply(f), kernel.green @ f)

    def test_chapman_kolmogorov(self, k4):
        """Test sum_y p_s(x, y) p_t(y, z) m_y = p_{s+t}(x, z)."""
        rng = np.random.default_rng(21)
        for s, t in rng.uniform(0.05, 3.0, size=(10, 2)):
            composed = transition_density(k4, s) @ np.diag(k4.m) @ transition_density(k4, t)
            np.testing.assert_allclose(composed, transition_density(k4, s + t), rtol=0.0, atol=1e-10)

    def test_potential_is_time_integral(self, k4):
        """Test u = int_0^inf p_t dt, integrated over log t."""
        horizon = 60.0 / k4.decay_rate

        def integrand(s):
            t = math.exp(s)
            return t * transition_density(k4, t).ravel()

        value, _ = integrate.quad_vec(integrand, -40.0, math.log(horizon), epsabs=0.0, epsrel=1e-11)
        np.testing.assert_allclose(value.reshape(k4.n, k4.n), potential_kernel(k4).u, rtol=1e-8)


class TestOrderedIntegrals:
    """Test time-ordered integrals and bridge moments."""

    def test_no_measures(self, k4):
        """Test that the empty ordered integral is e^{tQ}."""
        np.testing.assert_allclose(
            ordered_integral(k4, 0.7, []), linalg.expm(0.7 * k4.generator)
        )

    def test_reference_measure(self, k4):
        """Test that nu = m gives t e^{tQ}."""
        t = 1.3
        np.testing.assert_allclose(
            ordered_integral(k4, t, [k4.m]),
            t * linalg.expm(t * k4.generator),
            rtol=1e-10,
            atol=1e-14,
        )

    def test_identical_measures(self, k4):
        """Test that orderings of identical measures collapse."""
        nu = np.linspace(0.2, 1.0, k4.n)
        np.testing.assert_allclose(
            ordered_sum(k4, 0.9, [nu, nu]),
            2.0 * ordered_integral(k4, 0.9, [nu, nu]),
            rtol=1e-12,
        )

    def test_bridge_moment_reference_measure(self, k2):
        """Test Q_t^{a,a}(L^m_t) = t p_t(a, a)."""
        t = 0.8
        assert bridge_moment(k2, 'a', 'a', t, [k2.m]) == pytest.approx(
            t * k2_diagonal_density(t), rel=1e-10
        )


class TestPaths:
    """Test path sampling."""

    def test_lifetime_mean(self, k2, rng):
        """Test that K2 dies at rate 1 from every state."""
        lifetimes = np.array([
            sample_path(k2, 'a', rng).lifetime for _ in range(4000)
        ])
        stderr = lifetimes.std(ddof=1) / math.sqrt(lifetimes.size)
        assert abs(lifetimes.mean() - 1.0) < 4 * stderr

    def test_bridge_endpoints(self, k4, rng):
        """Test that a bridge starts at x, ends at y and lasts t."""
        path = sample_bridge(k4, 0, 2, 1.5, rng)
        assert path.start == 0
        assert int(path.states[-1]) == 2
        assert path.lifetime == pytest.approx(1.5)

    def test_bridge_occupation(self, k2, rng):
        """Test the bridge mean of the time spent at a."""
        t = 1.0
        exact = bridge_moment(k2, 'a', 'a', t, [[1.0, 0.0]])
        exact /= k2_diagonal_density(t)
        values = np.array([
            sample_bridge(k2, 'a', 'a', t, rng).occupation(2)[0]
            for _ in range(2000)
        ])
        stderr = values.std(ddof=1) / math.sqrt(values.size)
        assert abs(values.mean() - exact) < 4 * stderr

    def test_shift(self):
        """Test the path seen from a later time."""
        path = Path(np.array([0, 1, 0]), np.array([1.0, 2.0, 0.5]))
        shifted = path.shift(1.5)
        np.testing.assert_array_equal(shifted.states, [1, 0])
        np.testing.assert_allclose(shifted.holding, [1.5, 0.5])
        assert path.state_at(0.5) == 0
        assert path.state_at(2.0) == 1
        assert path.state_at(4.0) == -1

    @pytest.mark.slow
    def test_bridge_jump_free_frequency(self, k2, rng):
        """Test P(no jump) = e^{-2} / p_1(a, a) for the K2 loop bridge."""
        n = 100_000
        expected = math.exp(-2.0) / k2_diagonal_density(1.0)
        assert expected == pytest.approx(0.6480, abs=1e-4)
        still = sum(len(sample_bridge(k2, 'a', 'a', 1.0, rng)) == 1 for _ in range(n))
        z = (still / n - expected) / math.sqrt(expected * (1.0 - expected) / n)
        assert abs(z) < 4.0

    def test_bridge_midpoint_law(self, k4, rng):
        """Test the bridge state at t/2 against p_{t/2} p_{t/2} m / p_t."""
        t, n = 1.0, 4000
        half = transition_density(k4, t / 2.0)
        law = half[0, :] * half[:, 0] * k4.m / transition_density(k4, t)[0, 0]
        assert law.sum() == pytest.approx(1.0, rel=1e-10)
        states = [sample_bridge(k4, 0, 0, t, rng).state_at(t / 2.0) for _ in range(n)]
        observed = np.bincount(states, minlength=k4.n)
        assert stats.chisquare(observed, n * law).pvalue > 0.001
