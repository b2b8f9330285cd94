"""
Norms on signed measures that control cyclic u-integrals.

State-space norms are evaluated here directly from the potential density;
the Fourier-side norms of a lattice kernel are delegated to ``src.levy``.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pandas as pd
from icecream import ic
from numpy.typing import ArrayLike
from scipy import integrate, linalg

from src import levy
from src.errors import (
    IdentityViolationError,
    NotPositiveDefiniteError,
    QuadratureFailureError,
)
from src.markov import MarkovModel, potential_kernel
from src.measures import as_atoms
from src.moments import cyclic_integral, mu_moment
from src.schemas.schemas import NormKind

PD_TOL = 1e-10
W_IDENTITY_TOL = 1e-6
QUAD_TOL = 1e-11
TAIL_EXPONENT = 40.0
MAX_PROBE_ORDER = 8
STABILITY_SLACK = 1.1


def _kernel(u: ArrayLike) -> np.ndarray:
    if isinstance(u, MarkovModel):
        return potential_kernel(u).u
    return np.asarray(u, dtype=float)


def norm_u2_inf(u: ArrayLike, nu: ArrayLike) -> float:
    u = _kernel(u)
    weight = np.abs(as_atoms(nu))
    squares = u**2
    reach = (squares + squares.T) @ weight
    return float(max(weight.sum(), reach.max(initial=0.0)))


def norm_zero(u: ArrayLike, nu: ArrayLike) -> float:
    u = _kernel(u)
    weight = np.abs(as_atoms(nu))
    return float(max(weight.sum(), (u @ weight).max(initial=0.0)))


def norm_two_pd(u: ArrayLike, nu: ArrayLike) -> float:
    """(sum (u(x,y) + u(y,x))^2 |nu|(x) |nu|(y))^{1/2}; u must be PD."""
    u = _kernel(u)
    lowest = np.linalg.eigvalsh((u + u.T) / 2.0).min()
    if lowest < -PD_TOL:
        raise NotPositiveDefiniteError(
            f'symmetric part of u has eigenvalue {lowest:.3e}'
        )
    weight = np.abs(as_atoms(nu))
    return math.sqrt(max(weight @ (u + u.T) ** 2 @ weight, 0.0))


def norm_pi_ubar(u: ArrayLike, nu: ArrayLike) -> float:
    u = _kernel(u)
    atoms = as_atoms(nu)
    through = u @ (atoms[:, None] * u)
    return float(max(np.abs(atoms).sum(), np.abs(through).max(initial=0.0)))


def _tail_time(model: MarkovModel) -> float:
    return (TAIL_EXPONENT + math.log(model.n)) / model.decay_rate


@lru_cache(maxsize=32)
def w_kernel(model: MarkovModel) -> np.ndarray:
    """
    w(x, y) = int_0^inf p_s(x, y) / sqrt(pi s) ds.

    With s = r^2 the integrand is (2/sqrt(pi)) e^{r^2 Q}, smooth at 0. The
    result is checked against sum_y w(x,y) w(y,z) m_y = u(x,z).
    """
    n, q = model.n, model.generator
    reach = math.sqrt(_tail_time(model))

    def integrand(r):
        return (2.0 / math.sqrt(math.pi)) * linalg.expm(r * r * q).ravel()

    value, error = integrate.quad_vec(
        integrand, 0.0, reach, epsabs=0.0, epsrel=QUAD_TOL
    )
    scale = float(np.abs(value).max())
    if not np.isfinite(error) or error > 1e-8 * scale:
        raise QuadratureFailureError(f'w quadrature error {error:.3e}')
    w = value.reshape(n, n) / model.m[None, :]

    u = potential_kernel(model).u
    squared = w @ (model.m[:, None] * w)
    gap = float(np.abs(squared - u).max() / np.abs(u).max())
    ic(reach, error, gap)
    if gap > W_IDENTITY_TOL:
        raise IdentityViolationError(f'W^2 differs from U by {gap:.3e}')
    w.flags.writeable = False
    return w


def norm_w(model: MarkovModel, nu: ArrayLike) -> float:
    w = w_kernel(model)
    m = model.m
    through = w @ (as_atoms(nu)[:, None] * w)
    return math.sqrt(float(np.sum(through**2 * m[:, None] * m[None, :])))


def _theta_lyapunov(model: MarkovModel) -> tuple[np.ndarray, np.ndarray]:
    q, m = model.generator, model.m
    left = 2.0 * linalg.solve_continuous_lyapunov(q, -np.diag(1.0 / m))
    right = 2.0 * linalg.solve_continuous_lyapunov(q.T, -np.diag(m))
    return left, right / np.outer(m, m)


def _theta_quadrature(model: MarkovModel) -> tuple[np.ndarray, np.ndarray]:
    q, m, n = model.generator, model.m, model.n

    def integrand(s):
        half = linalg.expm(0.5 * s * q)
        left = half @ np.diag(1.0 / m) @ half.T
        right = half.T @ np.diag(m) @ half
        return np.concatenate((left.ravel(), right.ravel()))

    value, error = integrate.quad_vec(
        integrand, 0.0, 2.0 * _tail_time(model), epsabs=0.0, epsrel=QUAD_TOL
    )
    if not np.isfinite(error) or error > 1e-8 * np.abs(value).max():
        raise QuadratureFailureError(f'theta quadrature error {error:.3e}')
    left = value[: n * n].reshape(n, n)
    right = value[n * n :].reshape(n, n) / np.outer(m, m)
    return left, right


@lru_cache(maxsize=32)
def phi_kernel(model: MarkovModel, method: str = 'lyapunov') -> np.ndarray:
    """Phi = Theta_l * Theta_r entrywise."""
    if method == 'lyapunov':
        left, right = _theta_lyapunov(model)
    elif method == 'quadrature':
        left, right = _theta_quadrature(model)
    else:
        raise ValueError(f'Unknown method: {method}')
    phi = left * right
    phi.flags.writeable = False
    return phi


def norm_phi(model: MarkovModel, nu: ArrayLike) -> float:
    phi = phi_kernel(model)
    atoms = as_atoms(nu)
    form = float(atoms @ phi @ atoms)
    magnitude = np.abs(atoms)
    scale = max(float(magnitude @ np.abs(phi) @ magnitude), 1.0)
    if form < -PD_TOL * scale:
        raise NotPositiveDefiniteError(f'Phi quadratic form is {form:.3e}')
    return math.sqrt(max(form, 0.0))


def cycle_bound(
    u: ArrayLike, measures: Sequence[ArrayLike], b_indices: Sequence[int]
) -> float:
    """
    prod_{i not in B} ||nu_i||_0 prod_{j in B} ||nu_j||_{u^2,inf}, an upper
    bound for |cyclic_integral(u, measures)| whenever B is nonempty.
    """
    if len(measures) < 2:  # noqa: PLR2004
        raise ValueError('the mixed bound needs at least two measures')
    chosen = set(b_indices)
    if not chosen or not chosen <= set(range(len(measures))):
        raise ValueError('B must be a nonempty set of measure indices')
    u = _kernel(u)
    return math.prod(
        norm_u2_inf(u, nu) if j in chosen else norm_zero(u, nu)
        for j, nu in enumerate(measures)
    )


def evaluate_norm(kind: NormKind | str, target, nu: ArrayLike) -> float:
    """Dispatch over norm kinds; ``target`` is u, a model or a lattice
    kernel, as the norm requires."""
    kind = NormKind(kind)
    if kind in {NormKind.GAMMA2, NormKind.SQ_BRACKET2}:
        if kind is NormKind.GAMMA2:
            return levy.norm_gamma2(target, nu)
        return levy.norm_sect2(target, nu).value
    if kind is NormKind.W_NORM:
        return norm_w(_target_model(target), nu)
    if kind is NormKind.PHI_NORM:
        return norm_phi(_target_model(target), nu)
    evaluators = {
        NormKind.U2_INF: norm_u2_inf,
        NormKind.ZERO: norm_zero,
        NormKind.TWO_PD: norm_two_pd,
        NormKind.PI_UBAR: norm_pi_ubar,
    }
    return evaluators[kind](_target_kernel(target), nu)


def _target_model(target) -> MarkovModel:
    if hasattr(target, 'to_markov_model'):
        return target.to_markov_model()
    return target


def _target_kernel(target) -> np.ndarray:
    if hasattr(target, 'potential'):
        return np.asarray(target.potential(), dtype=float)
    return _kernel(target)


def random_signed_measure(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform atoms on [-1, 1]; half the time one sign is zeroed."""
    atoms = rng.uniform(-1.0, 1.0, size=n)
    if rng.random() < 0.5:  # noqa: PLR2004
        if rng.random() < 0.5:  # noqa: PLR2004
            atoms = np.clip(atoms, 0.0, None)
        else:
            atoms = np.clip(atoms, None, 0.0)
    return atoms


@dataclass(frozen=True)
class ProbeResult:
    norm_kind: NormKind
    rows: pd.DataFrame
    per_order: dict[int, float]
    constant: float
    stable: bool


def proper_constant_probe(
    norm_kind: NormKind | str,
    target,
    rng: np.random.Generator,
    n_max: int = 6,
    trials: int = 200,
    *,
    pi_proper: bool = False,
) -> ProbeResult:
    """
    Largest observed |cyclic integral| / prod ||nu_j|| per order n.

    With ``pi_proper`` the permutation-symmetrized integral divided by n!
    is probed instead. C_n is the n-th root of the per-order maximum and
    the fitted constant is the largest C_n.
    """
    kind = NormKind(norm_kind)
    if not 2 <= n_max <= MAX_PROBE_ORDER:  # noqa: PLR2004
        raise ValueError(f'n_max must lie in 2..{MAX_PROBE_ORDER}')
    if trials <= 0:
        raise ValueError('trials must be positive')
    u = _target_kernel(target)
    size = len(u)

    rows = []
    for n in range(2, n_max + 1):
        for trial in range(trials):
            measures = [random_signed_measure(rng, size) for _ in range(n)]
            norms = [evaluate_norm(kind, target, nu) for nu in measures]
            scale = math.prod(norms)
            if scale == 0.0:
                continue
            if pi_proper:
                value = abs(n * mu_moment(u, measures)) / math.factorial(n)
            else:
                value = abs(cyclic_integral(u, measures))
            rows.append({
                'n': n,
                'trial': trial,
                'ratio': value / scale,
                'norm_kind': kind.value,
            })

    frame = pd.DataFrame(rows, columns=['n', 'trial', 'ratio', 'norm_kind'])
    maxima = frame.groupby('n')['ratio'].max()
    per_order = {
        int(n): float(ratio) ** (1.0 / int(n)) for n, ratio in maxima.items()
    }
    constant = max(per_order.values(), default=0.0)
    orders = sorted(n for n in per_order if n >= 3)  # noqa: PLR2004
    stable = all(
        per_order[b] <= STABILITY_SLACK * per_order[a]
        for a, b in zip(orders, orders[1:])
    )
    ic(kind, per_order, constant, stable)
    return ProbeResult(kind, frame, per_order, constant, stable)


def second_moment_ratio(u: ArrayLike, nu: ArrayLike) -> float:
    """
    ||nu||_{(2)}^2 / E psi(nu)^2 at alpha = 1/2.

    The value is 8 when u is symmetric and nu >= 0: the norm counts
    (u + u^T)^2 = 4 u^2 while the half-intensity field carries 1/2.
    """
    u = _kernel(u)
    second = 0.5 * cyclic_integral(u, [nu, nu])
    if second == 0.0:
        raise ValueError('psi(nu) is degenerate')
    return norm_two_pd(u, nu) ** 2 / second
