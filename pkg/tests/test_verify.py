# ruff: noqa: PLR6301, PLR2004, E501
import numpy as np
import pytest

from src.levy import LatticeLevyKernel, rw_exponent
from src.markov import potential_kernel
from src.verify import (
    caf_field_demo,
    revuz_fixtures,
    verify_isomorphism_mc,
    verify_permanental_moments,
    verify_revuz_suite,
)

Z_LIMIT = 4.0
DELTA_A = np.array([1.0, 0.0])


@pytest.fixture(name='rw16')
def rw16_fixture():
    return LatticeLevyKernel(1, 16, 1.0, rw_exponent(1, 16), 'rw')


class TestPermanentalMoments:
    """Test the Monte Carlo check of permanental moments."""

    def test_k2(self, k2):
        """Test second moments of two atoms across two cutoffs."""
        report = verify_permanental_moments(
            k2,
            1.0,
            {'a': DELTA_A, 'b': np.array([0.0, 1.0])},
            orders=(2,),
            soups=600,
            delta_schedule=(0.05, 0.5),
            seed=21,
            chunk_size=200,
        )
        assert report.delta_schedule == [0.5, 0.05]
        labels = {check.label for check in report.checks}
        assert labels == {'psi(a)^2', 'psi(b)^2', 'psi(a) psi(b)'}
        assert len(report.checks) == 6
        assert report.bias_monotone
        assert report.details['bias_gated']
        for check in report.checks:
            assert abs(check.z_score) < Z_LIMIT, check
        limit = next(c.limit for c in report.checks if c.label == 'psi(a)^2')
        assert limit == pytest.approx(4.0 / 9.0)

    def test_exact_approaches_limit(self, k2):
        """Test that the cutoff bias shrinks with the cutoff."""
        report = verify_permanental_moments(
            k2, 1.0, {'a': DELTA_A}, orders=(2,), soups=50,
            delta_schedule=(0.5, 0.1, 0.01), seed=2,
        )
        biases = [abs(check.bias) for check in report.checks]
        assert biases[0] > biases[1] > biases[2]

    def test_signed_measures_skip_bias_gate(self, k2):
        """Test that a signed measure is not gated on bias monotonicity."""
        report = verify_permanental_moments(
            k2, 1.0, {'s': np.array([1.0, -1.0])}, orders=(2,), soups=50,
            delta_schedule=(0.3,), seed=3,
        )
        assert not report.details['bias_gated']

    @pytest.mark.parametrize(
        ('orders', 'soups', 'message'),
        [((5,), 50, 'orders must lie'), ((2,), 1, 'at least two soups')],
    )
    def test_preconditions(self, k2, orders, soups, message):
        """Test the order range and the sample count."""
        with pytest.raises(ValueError, match=message):
            verify_permanental_moments(
                k2, 1.0, {'a': DELTA_A}, orders=orders, soups=soups, seed=0
            )


class TestIsomorphismMC:
    """Test the Monte Carlo side of the isomorphism."""

    def test_degree_one(self, k2):
        """Test (1/alpha) E(theta psi) against its cutoff value."""
        report = verify_isomorphism_mc(
            k2, 1.0, DELTA_A, DELTA_A, [DELTA_A], [1],
            soups=1000, delta=0.05, seed=8,
        )
        (check,) = report.checks
        assert abs(check.z_score) < Z_LIMIT
        assert report.details['closed_form_rel_diff'] <= 1e-9
        assert check.limit == pytest.approx(report.details['closed_form_lhs'])

    def test_degree_cap(self, k2):
        """Test that only low total degrees are sampled."""
        with pytest.raises(ValueError, match='total degree'):
            verify_isomorphism_mc(
                k2, 1.0, DELTA_A, DELTA_A, [DELTA_A], [3], soups=10, seed=0
            )


class TestRevuz:
    """Test the Revuz suite."""

    def test_fixtures(self):
        """Test that the suite covers three chains."""
        names = [name for name, *_ in revuz_fixtures()]
        assert names == ['revuz_k2', 'revuz_k4', 'revuz_death']

    def test_suite(self):
        """Test E_x L^nu_inf against U nu on every fixture."""
        reports = verify_revuz_suite(2000, seed=5)
        assert [r.name for r in reports] == ['revuz_k2', 'revuz_k4', 'revuz_death']
        for report in reports:
            assert abs(report.z_score) < Z_LIMIT
        k2_report = reports[0]
        u = potential_kernel(revuz_fixtures()[0][1]).u
        assert k2_report.exact == pytest.approx(u[0, 0])

    def test_death_exact(self):
        """Test a pure death chain: E_a L^nu = nu(a) / m_a."""
        report = verify_revuz_suite(1000, seed=6)[2]
        assert report.exact == pytest.approx(2.0)


class TestCafFieldDemo:
    """Test the translate-difference diagnostic."""

    def test_zero_measure(self, rw16):
        """Test that the zero measure gives zero differences."""
        frame = caf_field_demo(rw16, np.zeros(16), [0.125], [0.5], 20, seed=1)
        assert list(frame.columns) == ['delta', 'time', 'omega', 'max_diff', 'ratio']
        assert (frame['max_diff'] == 0.0).all()
        assert (frame['ratio'] == 0.0).all()

    def test_time_zero(self, rw16):
        """Test that nothing has accumulated at time 0."""
        frame = caf_field_demo(rw16, rw16.delta(0), [0.125, 0.25], [0.0, 0.5], 20, seed=1)
        assert len(frame) == 4
        assert (frame.loc[frame['time'] == 0.0, 'max_diff'] == 0.0).all()
        assert (frame['omega'] > 0.0).all()
        assert (frame.loc[frame['time'] == 0.5, 'max_diff'] > 0.0).all()

    def test_paths_positive(self, rw16):
        """Test that at least one path is required."""
        with pytest.raises(ValueError, match='paths must be positive'):
            caf_field_demo(rw16, rw16.delta(0), [0.125], [0.5], 0, seed=1)


@pytest.mark.slow
class TestAcceptance:
    """Acceptance-scale runs on the reference chains."""

    def test_k4_moments(self, k4):
        """Test moments of orders 2 and 3 across the default cutoffs."""
        rng = np.random.default_rng(17)
        report = verify_permanental_moments(
            k4,
            0.5,
            {'x': rng.uniform(0.0, 1.0, size=k4.n), 'y': rng.uniform(0.0, 1.0, size=k4.n)},
            soups=10000,
            seed=2024,
            threads=4,
        )
        assert report.bias_monotone
        assert all(abs(c.z_score) < Z_LIMIT for c in report.checks)

    def test_isomorphism_degree_two(self, k2):
        """Test the sampled isomorphism at total degree 2."""
        report = verify_isomorphism_mc(
            k2, 1.0, np.ones(2), DELTA_A, [DELTA_A], [2],
            soups=20000, delta=0.02, seed=31, threads=4,
        )
        assert abs(report.checks[0].z_score) < Z_LIMIT
