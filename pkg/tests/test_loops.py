# ruff: noqa: PLR6301, PLR2004, E501
import math

import numpy as np
import pytest
from scipy import special, stats

from src.loops import (
    LifetimeLaw,
    Loop,
    LoopSoup,
    centering_term,
    loop_mass,
    merge_soups,
    mu_moment_cutoff,
    occupation_field,
    read_soup_jsonl,
    sample_soup,
    sample_soups,
    theta,
    write_soup_jsonl,
)
from src.markov import Path, potential_kernel
from src.moments import mu_moment

Z_LIMIT = 4.0
DELTA_A = np.array([1.0, 0.0])


def _mean_z(values, mean, sd):
    return (values.mean() - mean) / (sd / math.sqrt(values.size))


def _variance_se(values):
    """Standard error of the sample variance from the fourth central moment."""
    fourth = np.mean((values - values.mean()) ** 4)
    return math.sqrt(max(fourth - values.var(ddof=1) ** 2, 0.0) / values.size)


def _variance_z(values, variance):
    return (values.var(ddof=1) - variance) / _variance_se(values)


class TestLoopMeasure:
    """Test the lifetime-truncated loop measure in closed form."""

    @pytest.mark.parametrize('delta', [0.01, 0.1, 1.0])
    def test_pure_death_mass(self, death, delta):
        """Test mu(zeta > delta) = 2 E1(delta) for two dead-end states."""
        assert loop_mass(death, delta) == pytest.approx(2.0 * special.exp1(delta), rel=1e-8)

    def test_k2_mass(self, k2):
        """Test mu(zeta > delta) = E1(delta) + E1(3 delta) on K2."""
        expected = special.exp1(0.2) + special.exp1(0.6)
        assert loop_mass(k2, 0.2) == pytest.approx(expected, rel=1e-8)

    def test_centering_k2(self, k2):
        """Test the centering term of delta_a at cutoff 1."""
        expected = math.exp(-1.0) / 2.0 + math.exp(-3.0) / 6.0
        assert centering_term(k2, DELTA_A, 1.0) == pytest.approx(expected, rel=1e-10)
        assert expected == pytest.approx(0.19223, abs=1e-5)

    def test_centering_limit(self, k2):
        """Test that the centering term tends to u(a, a)."""
        assert centering_term(k2, DELTA_A, 1e-9) == pytest.approx(2.0 / 3.0, rel=1e-6)

    def test_centering_zero_measure(self, k2):
        """Test that the zero measure needs no centering."""
        assert centering_term(k2, np.zeros(2), 0.5) == 0.0

    def test_cutoff_moment_limit(self, k4):
        """Test that small cutoffs recover the full loop measure moment."""
        rng = np.random.default_rng(5)
        measures = [rng.uniform(0.0, 1.0, size=k4.n) for _ in range(3)]
        u = potential_kernel(k4).u
        assert mu_moment_cutoff(k4, measures, 1e-6) == pytest.approx(
            mu_moment(u, measures), rel=1e-6
        )

    def test_cutoff_moment_decreases(self, k2):
        """Test that raising the cutoff removes mass."""
        values = [mu_moment_cutoff(k2, [DELTA_A, DELTA_A], d) for d in (0.01, 0.1, 1.0)]
        assert values[0] > values[1] > values[2] > 0.0

    def test_cutoff_dispatch(self, k2):
        """Test orders 0 and 1."""
        assert mu_moment_cutoff(k2, [], 0.3) == pytest.approx(loop_mass(k2, 0.3))
        assert mu_moment_cutoff(k2, [DELTA_A], 0.3) == pytest.approx(
            centering_term(k2, DELTA_A, 0.3)
        )

    def test_delta_positive(self, k2):
        """Test that the cutoff must be positive."""
        with pytest.raises(ValueError, match='delta must be positive'):
            loop_mass(k2, 0.0)


class TestLifetimeLaw:
    """Test lifetime sampling above the cutoff."""

    def test_pure_death_ks(self, death, rng):
        """Test samples against P(zeta <= t) = 1 - E1(t) / E1(delta)."""
        delta = 0.1
        law = LifetimeLaw(death, delta)
        samples = law.sample(rng, 2000)
        assert samples.min() >= delta

        def cdf(t):
            return 1.0 - special.exp1(t) / special.exp1(delta)

        assert stats.kstest(samples, cdf).pvalue > 0.001

    def test_cdf_bounds(self, k2):
        """Test the tabulated CDF at both ends."""
        law = LifetimeLaw(k2, 0.05)
        assert law.cdf(0.05) == pytest.approx(0.0)
        assert law.cdf(law.horizon) == pytest.approx(1.0)
        assert law.mass == pytest.approx(loop_mass(k2, 0.05))

    def test_prepare(self, k2):
        """Test that preparing a law fills its cached table and mass."""
        law = LifetimeLaw(k2, 0.1)
        assert 'table' not in vars(law)
        assert law.prepare() is law
        assert {'grid', 'table', 'mass'} <= set(vars(law))


class TestSoups:
    """Test soup sampling and the fields built on it."""

    def test_loop_validation(self):
        """Test that a loop returns to its root."""
        with pytest.raises(ValueError, match='start and end at its root'):
            Loop(0, 1.0, Path(np.array([0, 1]), np.array([0.5, 0.5])))
        with pytest.raises(ValueError, match='lifetime must be positive'):
            Loop(0, 0.0, Path(np.array([0]), np.array([0.0])))

    def test_loops_are_rooted(self, k4, rng):
        """Test root, lifetime and cutoff of sampled loops."""
        soup = sample_soup(k4, 2.0, 0.1, rng)
        for loop in soup.loops:
            assert loop.lifetime >= 0.1
            assert loop.path.lifetime == pytest.approx(loop.lifetime)
            assert loop.path.start == loop.root

    def test_count_mean(self, k2):
        """Test that soups hold Poisson(alpha mu(zeta > delta)) loops."""
        alpha, delta, n = 1.5, 0.2, 2000
        batch = sample_soups(k2, alpha, delta, n, seed=11)
        mean = alpha * loop_mass(k2, delta)
        z = (batch.counts.mean() - mean) / math.sqrt(mean / n)
        assert abs(z) < Z_LIMIT

    def test_psi_hat_centered(self, k2):
        """Test that the centered occupation field has mean zero."""
        batch = sample_soups(k2, 1.0, 0.1, 2000, seed=12)
        values = batch.psi_hat(k2, DELTA_A)
        z = values.mean() / (values.std(ddof=1) / math.sqrt(values.size))
        assert abs(z) < Z_LIMIT

    def test_reproducible(self, k2):
        """Test that a seed and chunk size fix the batch."""
        first = sample_soups(k2, 1.0, 0.3, 300, seed=4, chunk_size=100)
        second = sample_soups(k2, 1.0, 0.3, 300, seed=4, chunk_size=100, threads=2)
        np.testing.assert_array_equal(first.occupations, second.occupations)
        np.testing.assert_array_equal(first.soup_index, second.soup_index)

    def test_batch_matches_loop_fields(self, k2, rng):
        """Test that theta and psi_hat agree with the per-soup versions."""
        soup = sample_soup(k2, 1.0, 0.2, rng)
        assert occupation_field(soup, np.zeros(2), k2) == 0.0
        expected = sum(loop.caf(DELTA_A, k2.m) ** 2 for loop in soup.loops)
        assert theta(soup, DELTA_A, DELTA_A, k2) == pytest.approx(expected)
        with pytest.raises(ValueError, match='nonnegative'):
            theta(soup, -DELTA_A, DELTA_A, k2)

    def test_merge(self, k2, rng):
        """Test that superposition adds intensities."""
        first = sample_soup(k2, 0.5, 0.2, rng)
        second = sample_soup(k2, 1.0, 0.2, rng)
        merged = merge_soups(first, second)
        assert merged.alpha == pytest.approx(1.5)
        assert len(merged) == len(first) + len(second)
        with pytest.raises(ValueError, match='lifetime cutoff'):
            merge_soups(first, LoopSoup(1.0, 0.3, ()))

    def test_merge_is_a_soup_of_summed_intensity(self, k2):
        """Test loop counts and psi_hat cumulants of merged soups."""
        alphas, delta, n = (0.5, 1.0), 0.2, 1000
        rng = np.random.default_rng(41)
        merged = [
            merge_soups(sample_soup(k2, alphas[0], delta, rng), sample_soup(k2, alphas[1], delta, rng))
            for _ in range(n)
        ]
        alpha = sum(alphas)

        counts = np.array([len(soup) for soup in merged], dtype=float)
        rate = alpha * loop_mass(k2, delta)
        assert abs(_mean_z(counts, rate, math.sqrt(rate))) < Z_LIMIT
        assert abs(_variance_z(counts, rate)) < Z_LIMIT

        values = np.array([occupation_field(soup, DELTA_A, k2) for soup in merged])
        variance = alpha * mu_moment_cutoff(k2, [DELTA_A, DELTA_A], delta)
        assert abs(_mean_z(values, 0.0, math.sqrt(variance))) < Z_LIMIT
        assert abs(_variance_z(values, variance)) < Z_LIMIT

        direct = sample_soups(k2, alpha, delta, n, seed=42).psi_hat(k2, DELTA_A)
        gap = values.mean() - direct.mean()
        assert abs(gap) < Z_LIMIT * math.sqrt(2.0 * variance / n)
        spread = values.var(ddof=1) - direct.var(ddof=1)
        assert abs(spread) < Z_LIMIT * math.hypot(_variance_se(values), _variance_se(direct))

    def test_jsonl_round_trip(self, k2, rng, tmp_path):
        """Test writing and reading a soup."""
        soup = sample_soup(k2, 2.0, 0.1, rng, seed=7)
        path = tmp_path / 'soup.jsonl'
        write_soup_jsonl(soup, path, k2)
        loaded = read_soup_jsonl(path, k2)
        assert (loaded.alpha, loaded.delta, loaded.seed) == (2.0, 0.1, 7)
        assert len(loaded) == len(soup)
        for before, after in zip(soup.loops, loaded.loops):
            assert after.root == before.root
            assert after.lifetime == pytest.approx(before.lifetime)
        assert occupation_field(loaded, DELTA_A, k2) == pytest.approx(
            occupation_field(soup, DELTA_A, k2)
        )

    def test_jsonl_state_mismatch(self, k2, k4, rng, tmp_path):
        """Test that a soup cannot be read on another chain."""
        path = tmp_path / 'soup.jsonl'
        write_soup_jsonl(sample_soup(k2, 1.0, 0.5, rng), path, k2)
        with pytest.raises(ValueError, match='different state space'):
            read_soup_jsonl(path, k4)
