"""
Statistical checks that tie sampled soups and paths to the exact engines.

Every exact column is computed by the moment engine; Monte Carlo only ever
supplies the estimate.
"""

import itertools
import math
from collections.abc import Mapping, Sequence

import numpy as np
import pandas as pd
from icecream import ic
from numpy.typing import ArrayLike

from src import levy
from src.config import DEFAULT_CHUNK_SIZE, DEFAULT_DELTA_SCHEDULE
from src.fixtures import k2_model, k4_model, pure_death_model
from src.isomorphism import isomorphism_check
from src.loops import mu_moment_cutoff, sample_soups
from src.markov import MarkovModel, potential_kernel
from src.measures import as_atoms, verify_revuz
from src.moments import (
    MomentGroup,
    MomentSpec,
    alpha_permanental_moment,
    poisson_mixed_moment,
)
from src.schemas.schemas import MomentCheck, RevuzReport, VerificationReport
from src.streams import z_score

Z_THRESHOLD = 3.0
MAX_MC_DEGREE = 2
MAX_MC_ORDER = 4


def _stream_seed(seed: int, index: int) -> int:
    """Independent child seed for the index-th sampling run."""
    state = np.random.SeedSequence([seed, index]).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def _truncated_mu(model: MarkovModel, delta: float):
    return lambda measures: mu_moment_cutoff(model, measures, delta)


def _moment_targets(names, orders):
    """(label, factor names) pairs: every power of every measure, plus the
    product of the first two measures at order 2."""
    targets = [
        (f'psi({name})^{n}', [name] * n) for n in orders for name in names
    ]
    if len(names) >= 2 and 2 in orders:  # noqa: PLR2004
        first, second = names[:2]
        targets.append((f'psi({first}) psi({second})', [first, second]))
    return targets


def _estimate(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(values.size))
    return mean, stderr


def _bias_monotone(checks: list[MomentCheck]) -> bool:
    by_label: dict[str, list[float]] = {}
    for check in checks:
        by_label.setdefault(check.label, []).append(abs(check.bias))
    return all(
        all(b <= a * (1.0 + 1e-9) + 1e-15 for a, b in zip(v, v[1:]))
        for v in by_label.values()
    )


def verify_permanental_moments(
    model: MarkovModel,
    alpha: float,
    measures: Mapping[str, ArrayLike],
    *,
    orders: Sequence[int] = (2, 3),
    soups: int,
    delta_schedule: Sequence[float] = DEFAULT_DELTA_SCHEDULE,
    seed: int,
    threads: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    name: str = 'permanental_moments',
) -> VerificationReport:
    """
    Empirical moments of psi_hat at each cutoff against their exact values
    at that cutoff, with the alpha-permanental moment as the limit.
    """
    if not measures:
        raise ValueError('at least one measure is required')
    if any(not 1 <= n <= MAX_MC_ORDER for n in orders):
        raise ValueError(f'orders must lie in 1..{MAX_MC_ORDER}')
    if soups < 2:  # noqa: PLR2004
        raise ValueError('a standard error needs at least two soups')
    atoms = {key: as_atoms(nu) for key, nu in measures.items()}
    u = potential_kernel(model).u
    targets = _moment_targets(list(atoms), orders)
    schedule = sorted(delta_schedule, reverse=True)

    checks = []
    for index, delta in enumerate(schedule):
        batch = sample_soups(
            model,
            alpha,
            delta,
            soups,
            _stream_seed(seed, index),
            threads=threads,
            chunk_size=chunk_size,
        )
        fields = {key: batch.psi_hat(model, nu) for key, nu in atoms.items()}
        mu = _truncated_mu(model, delta)
        for label, names in targets:
            values = np.prod([fields[key] for key in names], axis=0)
            factors = [atoms[key] for key in names]
            spec = MomentSpec(
                tuple(MomentGroup((nu,), centered=True) for nu in factors)
            )
            exact = poisson_mixed_moment(u, alpha, spec, mu=mu)
            estimate, stderr = _estimate(values)
            checks.append(
                MomentCheck(
                    label=label,
                    delta=delta,
                    exact=exact,
                    limit=alpha_permanental_moment(u, factors, alpha),
                    estimate=estimate,
                    standard_error=stderr,
                    z_score=z_score(estimate, exact, stderr),
                )
            )

    nonnegative = all((nu >= 0).all() for nu in atoms.values())
    monotone = _bias_monotone(checks)
    within = all(abs(c.z_score) <= Z_THRESHOLD for c in checks)
    passed = within and (monotone or not nonnegative)
    ic(name, within, monotone, passed)
    return VerificationReport(
        name=name,
        checks=checks,
        samples=soups,
        seed=seed,
        chunk_size=chunk_size,
        delta_schedule=schedule,
        bias_monotone=monotone,
        passed=passed,
        details={
            'alpha': alpha,
            'states': list(model.states),
            'measures': {k: v.tolist() for k, v in atoms.items()},
            'bias_gated': nonnegative,
        },
    )


def verify_isomorphism_mc(
    model: MarkovModel,
    alpha: float,
    rho: ArrayLike,
    phi: ArrayLike,
    measures: Sequence[ArrayLike],
    degrees: Sequence[int],
    *,
    soups: int,
    delta: float = 0.02,
    seed: int,
    threads: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    name: str = 'isomorphism_mc',
) -> VerificationReport:
    """
    (1/alpha) E(theta^{rho,phi} prod psi_hat(nu_i)^{d_i}) from sampled soups
    against its exact value at the cutoff; the closed-form left-hand side
    of the isomorphism is reported as the limit.
    """
    if sum(degrees) > MAX_MC_DEGREE:
        raise ValueError(f'total degree must be <= {MAX_MC_DEGREE}')
    closed = isomorphism_check(model, alpha, rho, phi, measures, degrees)
    rho, phi = as_atoms(rho), as_atoms(phi)
    atoms = [as_atoms(nu) for nu in measures]
    u = potential_kernel(model).u

    batch = sample_soups(
        model, alpha, delta, soups, seed, threads=threads,
        chunk_size=chunk_size,
    )
    values = batch.theta(model, rho, phi) / alpha
    groups = [MomentGroup((rho, phi))]
    for nu, d in zip(atoms, degrees):
        values = values * batch.psi_hat(model, nu) ** d
        groups.extend(MomentGroup((nu,), centered=True) for _ in range(d))
    exact = poisson_mixed_moment(
        u, alpha, MomentSpec(tuple(groups)), mu=_truncated_mu(model, delta)
    ) / alpha
    estimate, stderr = _estimate(values)
    check = MomentCheck(
        label=f'theta psi^{list(degrees)}',
        delta=delta,
        exact=exact,
        limit=closed.lhs,
        estimate=estimate,
        standard_error=stderr,
        z_score=z_score(estimate, exact, stderr),
    )
    passed = closed.passed and abs(check.z_score) <= Z_THRESHOLD
    ic(name, check.z_score, closed.rel_diff, passed)
    return VerificationReport(
        name=name,
        checks=[check],
        samples=soups,
        seed=seed,
        chunk_size=chunk_size,
        delta_schedule=[delta],
        passed=passed,
        details={
            'alpha': alpha,
            'closed_form_lhs': closed.lhs,
            'closed_form_rhs': closed.rhs,
            'closed_form_rel_diff': closed.rel_diff,
        },
    )


def revuz_fixtures() -> list[tuple[str, MarkovModel, np.ndarray, str]]:
    k2, k4, death = k2_model(), k4_model(), pure_death_model(2)
    return [
        ('revuz_k2', k2, np.array([1.0, 0.0]), 'a'),
        ('revuz_k4', k4, np.full(k4.n, 0.5), k4.states[0]),
        ('revuz_death', death, np.array([2.0, 1.0]), 'a'),
    ]


def verify_revuz_suite(
    samples: int, seed: int, *, threads: int = 1
) -> list[RevuzReport]:
    return [
        verify_revuz(
            model,
            nu,
            x,
            samples,
            _stream_seed(seed, index),
            threads=threads,
            name=name,
        )
        for index, (name, model, nu, x) in enumerate(revuz_fixtures())
    ]


def _translate_fields(kernel, occupation: np.ndarray, nu: np.ndarray):
    """L^{nu_x} for every translate x at once, by circular correlation."""
    axes = tuple(range(-kernel.d, 0))
    grids = occupation.reshape(*occupation.shape[:-1], *kernel.shape)
    spectrum = np.conj(np.fft.fftn(nu.reshape(kernel.shape)))
    fields = np.fft.ifftn(np.fft.fftn(grids, axes=axes) * spectrum, axes=axes)
    return fields.real / kernel.weight


def _shifts_within(kernel, delta: float) -> list[tuple[int, ...]]:
    reach = int(math.floor(delta * kernel.N))
    span = range(-reach, reach + 1)
    return [
        shift
        for shift in itertools.product(span, repeat=kernel.d)
        if any(shift) and levy.torus_distance(kernel, shift) <= delta
    ]


def caf_field_demo(
    kernel: levy.LatticeLevyKernel,
    nu: ArrayLike,
    deltas: Sequence[float],
    times: Sequence[float],
    paths: int,
    seed: int,
    *,
    start: int = 0,
) -> pd.DataFrame:
    """
    Largest |L^{nu_x}_t - L^{nu_y}_t| over translates with |x - y| <= delta,
    divided by omega(delta). Diagnostic: the modulus carries no constant.
    """
    atoms = as_atoms(nu)
    if paths <= 0:
        raise ValueError('paths must be positive')
    times = sorted(times)
    rng = np.random.default_rng(seed)
    occupation = levy.lattice_paths(kernel, start, times, paths, rng)
    fields = _translate_fields(kernel, occupation, atoms)
    lattice_axes = tuple(range(1, 1 + kernel.d))

    rows = []
    for delta in sorted(deltas):
        omega = levy.omega_delta(kernel, atoms, delta) if atoms.any() else 0.0
        shifts = _shifts_within(kernel, delta)
        for k, t in enumerate(times):
            field = fields[k]
            moved = (np.roll(field, s, lattice_axes) for s in shifts)
            gap = max(
                (float(np.abs(m - field).max()) for m in moved), default=0.0
            )
            rows.append({
                'delta': delta,
                'time': t,
                'omega': omega,
                'max_diff': gap,
                'ratio': gap / omega if omega > 0 else 0.0,
            })
    ic(kernel.N, paths, len(rows))
    return pd.DataFrame(
        rows, columns=['delta', 'time', 'omega', 'max_diff', 'ratio']
    )
