"""
Killed Levy processes on the discrete torus Z_N^d.

A kernel is given by its characteristic exponent kappa_bar on the dual
torus, kappa_bar(xi) = sum_z r(z) (1 - exp(2 pi i xi.z / N)), and a killing
rate beta > 0, so kappa = beta + kappa_bar and u_hat = 1 / kappa.

DFT normalization: forward transforms are unnormalized sums
(``numpy.fft.fftn``), inverse transforms carry 1/N^d. With reference
weight m = N^{-d} on every site the potential density is
u(x, y) = sum_xi u_hat(xi) exp(2 pi i xi.(x - y) / N).
"""

import itertools
import math
import warnings
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pandas as pd
from icecream import ic
from numpy.typing import ArrayLike
from scipy import integrate, optimize
from scipy.special import logsumexp

from src.errors import (
    HeavyTailError,
    KernelValidationError,
    NotAMetricError,
    QuadratureFailureError,
    SectorialWarning,
)
from src.markov import MarkovModel, PotentialKernel, build_model
from src.measures import as_atoms
from src.moments import alpha_permanental_moment, derangement_count
from src.schemas.schemas import (
    ExponentKind,
    KernelSpec,
    LevyReport,
    TauFitReport,
)

NORMALIZATION = (
    'forward DFT unnormalized, inverse 1/N^d; m = N^-d; '
    'u(x,y) = sum_xi u_hat(xi) e^{2 pi i xi.(x-y)/N}'
)
EXPONENT_TOL = 1e-9
RATE_TOL = 1e-9
TRANSLATION_BOUND_CONSTANT = 2.0
MIN_ORLICZ_SAMPLES = 1000
METRIC_TOL = 1e-12
REPORT_DELTAS = (0.25, 0.125, 0.0625, 0.03125)


@dataclass(frozen=True, eq=False)
class LatticeLevyKernel:
    d: int
    N: int  # noqa: N815
    beta: float
    exponent: np.ndarray
    kind: str = ExponentKind.TABLE.value

    def __post_init__(self):
        exponent = np.array(self.exponent, dtype=complex)
        if self.d < 1 or self.N < 2:  # noqa: PLR2004
            raise KernelValidationError('need d >= 1 and N >= 2')
        if exponent.shape != (self.N,) * self.d:
            raise KernelValidationError(
                f'exponent has shape {exponent.shape}, expected '
                f'{(self.N,) * self.d}'
            )
        if not self.beta > 0:
            raise KernelValidationError('killing rate beta must be > 0')
        if not np.isfinite(exponent).all():
            raise KernelValidationError('exponent must be finite')
        scale = max(1.0, float(np.abs(exponent).max()))
        if abs(exponent.flat[0]) > EXPONENT_TOL * scale:
            raise KernelValidationError('kappa_bar(0) must vanish')
        if exponent.real.min() < -EXPONENT_TOL * scale:
            raise KernelValidationError('Re kappa_bar must be >= 0')
        exponent.flags.writeable = False
        object.__setattr__(self, 'exponent', exponent)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N**self.d

    @property
    def weight(self) -> float:
        return float(self.N) ** -self.d

    @cached_property
    def kappa(self) -> np.ndarray:
        return self.beta + self.exponent

    @cached_property
    def u_hat(self) -> np.ndarray:
        return 1.0 / self.kappa

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Centered integer frequencies, shape (d, N, ..., N)."""
        axis = np.fft.fftfreq(self.N, d=1.0 / self.N)
        return np.array(np.meshgrid(*[axis] * self.d, indexing='ij'))

    @cached_property
    def radius(self) -> np.ndarray:
        """|xi_c|, the Euclidean length of the centered frequency."""
        return np.sqrt((self.frequencies**2).sum(axis=0))

    @property
    def angular_radius(self) -> np.ndarray:
        return 2.0 * np.pi * self.radius

    @cached_property
    def potential_values(self) -> np.ndarray:
        """U(w) with u(x, y) = U(y - x)."""
        return np.fft.fftn(self.u_hat).real

    @cached_property
    def states(self) -> tuple[str, ...]:
        return tuple(
            ','.join(str(c) for c in point)
            for point in itertools.product(range(self.N), repeat=self.d)
        )

    @cached_property
    def _sites(self) -> np.ndarray:
        return np.array(
            list(itertools.product(range(self.N), repeat=self.d)), dtype=int
        ).reshape(-1, self.d)

    def _difference_index(self) -> np.ndarray:
        sites = self._sites
        diff = (sites[None, :, :] - sites[:, None, :]) % self.N
        return np.ravel_multi_index(tuple(diff.T), self.shape).T

    def potential(self) -> PotentialKernel:
        u = self.potential_values.reshape(-1)[self._difference_index()]
        u.flags.writeable = False
        return PotentialKernel(u=u, m=np.full(self.size, self.weight))

    @cached_property
    def jump_rates(self) -> np.ndarray:
        """r(z) recovered from kappa_bar; r(0) is set to 0."""
        rates = -np.fft.fftn(self.exponent).real / self.size
        rates.flat[0] = 0.0
        scale = max(float(np.abs(rates).max()), 1.0)
        if rates.min() < -RATE_TOL * scale:
            raise KernelValidationError(
                'exponent does not come from nonnegative jump rates'
            )
        rates = np.clip(rates, 0.0, None)
        rates[rates < RATE_TOL * scale] = 0.0
        rates.flags.writeable = False
        return rates

    @cached_property
    def _model(self) -> MarkovModel:
        rates = self.jump_rates.reshape(-1)[self._difference_index()]
        return build_model(
            rates=rates,
            kill=np.full(self.size, self.beta),
            m=np.full(self.size, self.weight),
            states=list(self.states),
        )

    def to_markov_model(self) -> MarkovModel:
        """The translation-invariant chain with jump rates r(y - x)."""
        return self._model

    def fourier(self, nu: ArrayLike) -> np.ndarray:
        return fourier_measure(self, nu)

    def measure(self, weights: Mapping[str, float]) -> np.ndarray:
        unknown = set(weights) - set(self.states)
        if unknown:
            raise ValueError(f'Unknown lattice sites: {sorted(unknown)}')
        return np.array([float(weights.get(s, 0.0)) for s in self.states])

    def delta(self, site: int = 0) -> np.ndarray:
        atoms = np.zeros(self.size)
        atoms[site] = 1.0
        return atoms


def _dual_phases(n: int, d: int) -> list[np.ndarray]:
    axis = 2.0 * np.pi * np.arange(n) / n
    return np.meshgrid(*[axis] * d, indexing='ij')


def rw_exponent(
    d: int,
    n: int,
    rate_plus: float = 0.5,
    rate_minus: float = 0.5,
    scale: float | None = None,
) -> np.ndarray:
    """Nearest-neighbour walk with jump rates scaled by N^2 (or ``scale``)."""
    if rate_plus < 0 or rate_minus < 0:
        raise KernelValidationError('walk rates must be >= 0')
    factor = float(n) ** 2 if scale is None else float(scale)
    total = np.zeros((n,) * d, dtype=complex)
    for theta in _dual_phases(n, d):
        total += rate_plus * (1.0 - np.exp(1j * theta))
        total += rate_minus * (1.0 - np.exp(-1j * theta))
    return factor * total


def stable_exponent(
    d: int, n: int, index: float = 1.5, scale: float = 1.0
) -> np.ndarray:
    """scale * |2 pi xi_c|^index on the dual torus."""
    if not 0 < index <= 2:  # noqa: PLR2004
        raise KernelValidationError('stable index must lie in (0, 2]')
    axis = np.fft.fftfreq(n, d=1.0 / n)
    grids = np.meshgrid(*[axis] * d, indexing='ij')
    radius = np.sqrt(sum(g**2 for g in grids))
    return (scale * (2.0 * np.pi * radius) ** index).astype(complex)


def kernel_from_spec(spec: KernelSpec) -> LatticeLevyKernel:
    params = dict(spec.exponent.params)
    kind = spec.exponent.kind
    try:
        if kind is ExponentKind.RW:
            exponent = rw_exponent(spec.d, spec.N, **params)
        elif kind is ExponentKind.STABLE_SURROGATE:
            exponent = stable_exponent(spec.d, spec.N, **params)
        else:
            re = np.asarray(params['re'], dtype=float)
            im = np.asarray(params.get('im', np.zeros_like(re)), dtype=float)
            exponent = (re + 1j * im).reshape((spec.N,) * spec.d)
    except (KeyError, TypeError, ValueError) as exc:
        raise KernelValidationError(f'bad exponent params: {exc}') from exc
    kernel = LatticeLevyKernel(spec.d, spec.N, spec.beta, exponent, kind.value)
    ic(kernel.kind, kernel.d, kernel.N, kernel.beta)
    return kernel


def fourier_measure(kernel: LatticeLevyKernel, nu: ArrayLike) -> np.ndarray:
    atoms = as_atoms(nu)
    if atoms.size != kernel.size:
        raise ValueError(f'measure has {atoms.size} atoms, need {kernel.size}')
    return np.fft.fftn(atoms.reshape(kernel.shape))


def translate(
    kernel: LatticeLevyKernel, nu: ArrayLike, shift: Sequence[int]
) -> np.ndarray:
    """nu_h(A) = nu(A - h)."""
    grid = as_atoms(nu).reshape(kernel.shape)
    axes = tuple(range(kernel.d))
    return np.roll(grid, tuple(shift), axis=axes).reshape(-1)


def torus_distance(kernel: LatticeLevyKernel, shift: Sequence[int]) -> float:
    """Minimal-image length of a lattice shift, in unit-torus units."""
    shift = np.mod(np.asarray(shift, dtype=int), kernel.N)
    folded = np.minimum(shift, kernel.N - shift)
    return float(np.sqrt((folded**2).sum())) / kernel.N


def gamma(kernel: LatticeLevyKernel, method: str = 'fft') -> np.ndarray:
    """gamma = |u_hat| * |u_hat|, circular convolution on the dual torus."""
    magnitude = np.abs(kernel.u_hat)
    if method == 'fft':
        spectrum = np.fft.fftn(magnitude)
        values = np.fft.ifftn(spectrum * spectrum).real
    elif method == 'direct':
        values = np.zeros(kernel.shape)
        axes = tuple(range(kernel.d))
        for eta in itertools.product(range(kernel.N), repeat=kernel.d):
            values += magnitude[eta] * np.roll(magnitude, eta, axis=axes)
    else:
        raise ValueError(f'Unknown method: {method}')
    return np.clip(values, 0.0, None)


def norm_gamma2(kernel: LatticeLevyKernel, nu: ArrayLike) -> float:
    weights = np.abs(fourier_measure(kernel, nu)) ** 2
    return math.sqrt(float(np.sum(weights * gamma(kernel))))


@dataclass(frozen=True)
class SectorialNorm:
    value: float
    sectorial_constant: float


def sectorial_constant(kernel: LatticeLevyKernel) -> float:
    return float(np.max(np.abs(kernel.kappa.imag) / kernel.kappa.real))


def norm_sect2(kernel: LatticeLevyKernel, nu: ArrayLike) -> SectorialNorm:
    """
    (sum u(x - y) u(y - x) nu(x) nu(y))^{1/2}, evaluated spectrally, with
    the sectorial constant max |Im kappa| / Re kappa.
    """
    constant = sectorial_constant(kernel)
    if constant >= 1.0:
        warnings.warn(
            f'sectorial constant {constant:.3f} >= 1',
            SectorialWarning,
            stacklevel=2,
        )
    values = kernel.potential_values
    axes = tuple(range(kernel.d))
    mirrored = np.roll(np.flip(values, axis=axes), 1, axis=axes)
    product = np.fft.fftn(values * mirrored).real
    weights = np.abs(fourier_measure(kernel, nu)) ** 2
    form = float(np.sum(product * weights)) / kernel.size
    return SectorialNorm(math.sqrt(max(form, 0.0)), constant)


def parseval_error(kernel: LatticeLevyKernel) -> float:
    """Relative gap between sum u(w)^2 m and sum |u_hat|^2."""
    left = float(np.sum(kernel.potential_values**2)) * kernel.weight
    right = float(np.sum(np.abs(kernel.u_hat) ** 2))
    return abs(left - right) / right


def convolution_constant(kernel: LatticeLevyKernel) -> float:
    """max_xi (|u_hat|^2 * |u_hat|)(xi) / (|u_hat(xi)| sum |u_hat|^2)."""
    magnitude = np.abs(kernel.u_hat)
    folded = np.fft.ifftn(
        np.fft.fftn(magnitude**2) * np.fft.fftn(magnitude)
    ).real
    total = float(np.sum(magnitude**2))
    return float(np.max(folded / (magnitude * total)))


@dataclass(frozen=True)
class ShellIntegral:
    value: float
    shells: pd.DataFrame


def shell_integral(kernel: LatticeLevyKernel, nu: ArrayLike) -> ShellIntegral:
    """
    int_1^inf (sum_{|xi| >= x} |nu_hat|^2 gamma)^{1/2} dx / x with |xi| the
    angular frequency, integrated exactly over the step function, plus the
    tail values at dyadic radii.
    """
    weights = (np.abs(fourier_measure(kernel, nu)) ** 2 * gamma(kernel))
    radius = kernel.angular_radius.reshape(-1)
    weights = weights.reshape(-1)
    levels = np.unique(radius)
    tails = np.array([weights[radius >= level].sum() for level in levels])

    value = 0.0
    previous = 1.0
    for level, tail in zip(levels, tails):
        if level <= 1.0:
            continue
        value += math.sqrt(max(tail, 0.0)) * math.log(level / previous)
        previous = level

    rows = []
    x = 1.0
    top = float(levels[-1])
    while x <= top:
        tail = float(weights[radius >= x].sum())
        rows.append({'radius': x, 'tail': math.sqrt(max(tail, 0.0))})
        x *= 2.0
    return ShellIntegral(value, pd.DataFrame(rows, columns=['radius', 'tail']))


def _phi_profile(
    kernel: LatticeLevyKernel, nu: ArrayLike
) -> Callable[[float], float]:
    weights = (
        np.abs(fourier_measure(kernel, nu)) ** 2 * gamma(kernel)
    ).reshape(-1)
    radius = kernel.angular_radius.reshape(-1)

    def phi(delta: float) -> float:
        if delta <= 0:
            raise ValueError('delta must be positive')
        factor = np.minimum(delta * radius, 1.0) ** 2
        return math.sqrt(float(np.sum(factor * weights)))

    return phi


def phi_delta(kernel: LatticeLevyKernel, nu: ArrayLike, delta: float):
    """phi(delta)^2 = sum min(delta |xi|, 1)^2 |nu_hat|^2 gamma."""
    return _phi_profile(kernel, nu)(delta)


def omega_from_phi(phi: Callable[[float], float], delta: float) -> float:
    """phi(delta) log(1/delta) + int_0^delta phi(s) / s ds."""
    if not 0 < delta < 1:
        raise ValueError('delta must lie in (0, 1)')
    value, error = integrate.quad(
        lambda t: phi(math.exp(t)), -np.inf, math.log(delta), limit=200
    )
    if not np.isfinite(value) or error > 1e-6 * abs(value) + 1e-300:
        raise QuadratureFailureError(f'omega quadrature error {error:.3e}')
    return phi(delta) * math.log(1.0 / delta) + value


def omega_delta(kernel: LatticeLevyKernel, nu: ArrayLike, delta: float):
    return omega_from_phi(_phi_profile(kernel, nu), delta)


def phi_omega_table(
    kernel: LatticeLevyKernel, nu: ArrayLike, deltas: Sequence[float]
) -> pd.DataFrame:
    phi = _phi_profile(kernel, nu)
    rows = [
        {
            'delta': delta,
            'phi': phi(delta),
            'omega': omega_from_phi(phi, delta),
        }
        for delta in sorted(deltas)
    ]
    return pd.DataFrame(rows, columns=['delta', 'phi', 'omega'])


def translation_difference(
    kernel: LatticeLevyKernel, nu: ArrayLike, shift: Sequence[int]
) -> float:
    """||nu_h - nu||_{gamma,2}."""
    return norm_gamma2(kernel, translate(kernel, nu, shift) - as_atoms(nu))


def tau_fit(kernel: LatticeLevyKernel) -> TauFitReport:
    """
    Regress log |kappa| on log |xi| over the resolved band
    sqrt(N/8) <= |xi_c| <= N/8, and evaluate the two growth conditions that
    tie gamma to tau on that band and beyond.
    """
    radius = kernel.radius.reshape(-1)
    lo, hi = math.sqrt(kernel.N / 8.0), kernel.N / 8.0
    band = (radius >= lo) & (radius <= hi)
    if np.unique(radius[band]).size < 2:  # noqa: PLR2004
        lo, hi = 1.0, kernel.N / 2.0
        band = (radius >= lo) & (radius <= hi)
    if np.unique(radius[band]).size < 2:  # noqa: PLR2004
        raise KernelValidationError(
            f'N={kernel.N} resolves fewer than two radii for the tau fit'
        )
    angular = kernel.angular_radius.reshape(-1)
    magnitude = np.abs(kernel.kappa).reshape(-1)
    x, y = np.log(angular[band]), np.log(magnitude[band])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.abs(y - (slope * x + intercept)).max())

    outer = radius >= lo
    tau = np.exp(intercept) * angular[outer] ** slope
    g = gamma(kernel).reshape(-1)[outer]
    scale = angular[outer] ** kernel.d
    gamma_growth = float(np.max(g * tau**2 / scale))
    kappa_growth = float(np.max(scale / (magnitude[outer] ** 2 * g)))
    ic(slope, intercept, residual, lo, hi)
    return TauFitReport(
        slope=float(slope),
        intercept=float(intercept),
        residual_band=residual,
        band=(lo, hi),
        gamma_growth_sup=gamma_growth,
        kappa_growth_sup=kappa_growth,
    )


def check_metric(distances: ArrayLike) -> np.ndarray:
    dist = np.asarray(distances, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:  # noqa: PLR2004
        raise NotAMetricError('distances must be a square matrix')
    scale = max(float(np.abs(dist).max(initial=0.0)), 1.0)
    tol = METRIC_TOL * scale
    if (dist < -tol).any() or np.abs(np.diag(dist)).max(initial=0.0) > tol:
        raise NotAMetricError('distances must be >= 0 with zero diagonal')
    if np.abs(dist - dist.T).max(initial=0.0) > tol:
        raise NotAMetricError('distances must be symmetric')
    through = (dist[:, :, None] + dist[None, :, :]).min(axis=1)
    if (dist > through + tol).any():
        raise NotAMetricError('triangle inequality fails')
    return dist


def j_functional(
    distances: ArrayLike, sigma: ArrayLike, a: float
) -> float:
    """
    sup over points of int_0^a log(1 / sigma(B(point, r))) dr with closed
    balls; the ball weight is a step function of r, integrated exactly.
    """
    dist = check_metric(distances)
    sigma = as_atoms(sigma)
    if sigma.size != len(dist) or (sigma < 0).any():
        raise ValueError('sigma must be nonnegative, one weight per point')
    if not math.isclose(sigma.sum(), 1.0, abs_tol=1e-9):
        raise ValueError('sigma must sum to 1')
    if a < 0:
        raise ValueError('a must be nonnegative')

    best = 0.0
    for row in dist:
        order = np.argsort(row, kind='stable')
        radii, first = np.unique(row[order], return_index=True)
        mass = np.cumsum(sigma[order])[np.append(first[1:] - 1, len(row) - 1)]
        ends = np.append(radii[1:], np.inf)
        total = 0.0
        for start, end, weight in zip(radii, ends, mass):
            if start >= a:
                break
            length = min(end, a) - start
            if length <= 0:
                continue
            if weight <= 0:
                return math.inf
            total += -math.log(min(weight, 1.0)) * length
        best = max(best, total)
    return best


def chaining_ratio(
    samples: ArrayLike, distances: ArrayLike, sigma: ArrayLike
) -> float:
    """E sup_{s,t} |X_s - X_t| / J(D), D the diameter of the family."""
    values = np.asarray(samples, dtype=float)
    dist = check_metric(distances)
    spread = float(np.mean(values.max(axis=1) - values.min(axis=1)))
    j = j_functional(dist, sigma, float(dist.max()))
    if j == 0.0:
        return math.inf if spread > 0 else 0.0
    return spread / j


def orlicz_norm(samples: ArrayLike, *, c_max: float | None = None) -> float:
    """inf{c : mean(exp(|x| / c) - 1) <= 1} over the sample."""
    values = np.abs(as_atoms(samples))
    if values.size < MIN_ORLICZ_SAMPLES:
        raise ValueError(f'need at least {MIN_ORLICZ_SAMPLES} samples')
    top = float(values.max())
    if top == 0.0:
        return 0.0
    log_size = math.log(values.size)

    def excess(c: float) -> float:
        return float(logsumexp(values / c)) - log_size - math.log(2.0)

    if c_max is not None and excess(c_max) > 0:
        raise HeavyTailError(f'Orlicz norm exceeds {c_max}')
    c_hi = top / math.log(2.0)
    if abs(excess(c_hi)) < 1e-12:
        return c_hi
    c_lo = 0.5 * top / (log_size + math.log(2.0) + 1.0)
    return float(optimize.brentq(excess, c_lo, c_hi, xtol=1e-14 * c_hi))


@dataclass(frozen=True)
class OrliczCheck:
    estimate: float
    bound: float
    passed: bool


def orlicz_bound_check(
    samples: ArrayLike, alpha: float, constant: float, norm_value: float
) -> OrliczCheck:
    """||psi(nu)||_Xi <= 2 C (alpha v 1)^{1/2} ||nu||."""
    estimate = orlicz_norm(samples)
    bound = 2.0 * constant * math.sqrt(max(alpha, 1.0)) * norm_value
    return OrliczCheck(estimate, bound, estimate <= bound)


def even_moment_bound_check(
    u: ArrayLike,
    nu: ArrayLike,
    alpha: float,
    norm_value: float,
    *,
    constant: float = 1.0,
    orders: Sequence[int] = (2, 4, 6),
) -> pd.DataFrame:
    """
    Exact E psi(nu)^n against (alpha v 1)^{n/2} (C ||nu||)^n times the
    number of fixed-point-free permutations, and times (n-1)!.
    """
    rows = []
    for n in orders:
        if n % 2:
            raise ValueError('only even orders are bounded')
        moment = alpha_permanental_moment(u, [nu] * n, alpha)
        base = max(alpha, 1.0) ** (n / 2) * (constant * norm_value) ** n
        bound = derangement_count(n) * base
        literal = math.factorial(n - 1) * base
        rows.append({
            'n': n,
            'moment': moment,
            'bound': bound,
            'literal_bound': literal,
            'passed': moment <= bound * (1.0 + 1e-12),
            'literal_passed': moment <= literal * (1.0 + 1e-12),
        })
    return pd.DataFrame(rows)


def _fit_decay(radius: np.ndarray, values: np.ndarray) -> float:
    keep = (radius > 0) & (values > 0)
    if keep.sum() < 2:  # noqa: PLR2004
        return math.inf
    slope, _ = np.polyfit(np.log(radius[keep]), -np.log(values[keep]), 1)
    return float(slope)


def example_report(
    kernel: LatticeLevyKernel, nu: ArrayLike, deltas: Sequence[float]
) -> dict:
    """
    Classify a kernel and measure into the four continuity templates and
    put each predicted modulus next to measured translation differences.

    Predicted moduli carry no constant; they are shape predictions.
    """
    fit = tau_fit(kernel)
    index, d = fit.slope, kernel.d
    lo, hi = fit.band
    radius = kernel.radius.reshape(-1)
    angular = kernel.angular_radius.reshape(-1)
    band = (radius >= lo) & (radius <= hi)
    amplitude = np.abs(fourier_measure(kernel, nu)).reshape(-1)
    decay = _fit_decay(angular[band], amplitude[band])
    tau = np.exp(fit.intercept) * angular[band] ** index
    logs = np.log(angular[band])

    def amplitude_ratio(power, log_power):
        ratio = amplitude[band] * power / tau * logs**log_power
        return float(ratio.max()) if ratio.size else math.nan

    log_corrected = d == 2 and abs(index - 2.0) <= 0.15  # noqa: PLR2004
    between = d / 2 < index < d
    templates = [
        {
            'case': 'regular_variation',
            'applies': between,
            'amplitude_ratio': amplitude_ratio(angular[band] ** d, 1.5),
        },
        {
            'case': 'log_corrected_2d',
            'applies': log_corrected,
            'amplitude_ratio': amplitude_ratio(angular[band] ** 2, 2.0),
        },
        {
            'case': 'modulus_power',
            'applies': between and index + decay > d,
            'modulus_exponent': index + decay - d,
        },
        {
            'case': 'modulus_2d',
            'applies': log_corrected and decay > 0,
            'modulus_exponent': decay,
        },
    ]

    phi = _phi_profile(kernel, nu)
    rows = []
    for delta in sorted(deltas):
        step = max(1, int(delta * kernel.N))
        shift = [step] + [0] * (d - 1)
        h = torus_distance(kernel, shift)
        row = {
            'delta': delta,
            'shift': step,
            'measured': translation_difference(kernel, nu, shift),
            'phi_bound': TRANSLATION_BOUND_CONSTANT * phi(h),
            'omega': omega_from_phi(phi, delta) if delta < 1 else math.nan,
        }
        exponent = index + decay - d
        log_term = math.log(1.0 / delta) if delta < 1 else 0.0
        row['predicted_power'] = delta**exponent * log_term
        row['predicted_2d'] = delta**decay * log_term**1.5
        rows.append(row)
    return {
        'tau_index': index,
        'decay_index': decay,
        'templates': templates,
        'rows': rows,
    }


def lattice_paths(
    kernel: LatticeLevyKernel,
    start: int,
    times: Sequence[float],
    paths: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Occupation times of ``paths`` independent killed walks, vectorized over
    paths: the result has shape (len(times), paths, N^d) and entry
    [k, p, y] is the time path p spent at y before times[k].
    """
    times = np.asarray(sorted(times), dtype=float)
    rates = kernel.jump_rates.reshape(-1)
    total_rate = float(rates.sum())
    exit_rate = total_rate + kernel.beta
    jumps = np.flatnonzero(rates)
    law = rates[jumps] / total_rate if total_rate > 0 else None
    shape = np.array(kernel.shape)

    occupation = np.zeros((len(times), paths, kernel.size))
    position = np.full(paths, start, dtype=int)
    clock = np.zeros(paths)
    alive = np.ones(paths, dtype=bool)
    horizon = float(times[-1]) if len(times) else 0.0
    index = np.arange(paths)
    while alive.any():
        live = index[alive]
        hold = rng.exponential(1.0 / exit_rate, size=live.size)
        begin, end = clock[live], clock[live] + hold
        for k, t in enumerate(times):
            spent = np.clip(np.minimum(end, t) - begin, 0.0, None)
            np.add.at(occupation[k], (live, position[live]), spent)
        clock[live] = end
        dies = rng.random(live.size) < kernel.beta / exit_rate
        alive[live[dies | (end >= horizon)]] = False
        movers = live[~dies & (end < horizon)]
        if movers.size and law is not None:
            step = jumps[rng.choice(jumps.size, size=movers.size, p=law)]
            here = np.array(np.unravel_index(position[movers], kernel.shape))
            moved = np.array(np.unravel_index(step, kernel.shape))
            target = (here + moved) % shape[:, None]
            position[movers] = np.ravel_multi_index(
                tuple(target), kernel.shape
            )
    return occupation


def levy_report(
    spec: KernelSpec,
    nu: ArrayLike | None = None,
    deltas: Sequence[float] = REPORT_DELTAS,
    *,
    detailed: bool = True,
) -> LevyReport:
    """
    Summary of a lattice kernel and one measure (a unit atom at the origin
    unless given): gamma, the tau fit, the fitted constants and, when
    ``detailed``, the shell integral, phi/omega table and template report.
    """
    kernel = kernel_from_spec(spec)
    nu = kernel.delta(0) if nu is None else as_atoms(nu)
    values = gamma(kernel)
    energy = float(np.sum(np.abs(kernel.u_hat) ** 2))
    constant = sectorial_constant(kernel)
    norms = {'gamma2': norm_gamma2(kernel, nu)}
    if constant < 1.0:
        norms['sq_bracket2'] = norm_sect2(kernel, nu).value

    report = LevyReport(
        kernel=spec,
        normalization=NORMALIZATION,
        gamma_sup=float(values.max()),
        gamma_sup_ratio=float(values.max()) / energy,
        parseval_error=parseval_error(kernel),
        sectorial_constant=constant,
        tau=tau_fit(kernel),
        convolution_constant=convolution_constant(kernel),
        norms=norms,
    )
    if not detailed:
        return report
    shells = shell_integral(kernel, nu)
    return report.model_copy(
        update={
            'shell_integral': {
                'value': shells.value,
                'shells': shells.shells.to_dict(orient='records'),
            },
            'phi_omega': phi_omega_table(kernel, nu, deltas).to_dict(
                orient='records'
            ),
            'example': example_report(kernel, nu, deltas),
        }
    )
