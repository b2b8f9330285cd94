"""
Finite-state transient continuous-time Markov chains.

A chain is described by off-diagonal jump rates, per-state killing rates
and strictly positive reference weights ``m``. Densities are always taken
with respect to ``m``: ``p_t(x, y) = (e^{tQ})_{xy} / m_y`` and
``u(x, y) = ((-Q)^{-1})_{xy} / m_y``.
"""

import itertools
import threading
import warnings
from collections import Counter
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from icecream import ic
from numpy.typing import ArrayLike
from scipy import linalg
from scipy.stats import poisson

from src.errors import (
    DualityWarning,
    ModelValidationError,
    NegativeRateError,
    NonpositiveWeightError,
    NonTransientError,
    PositivityWarning,
    SingularGeneratorError,
    UnderflowBridgeError,
)
from src.schemas.schemas import ModelSpec

DEATH = -1
DUALITY_PROBE_TIMES = (0.1, 1.0, 10.0)
TRANSIENCE_TOL = 1e-12
MAX_CONDITION = 1e14
BRIDGE_TAIL = 1e-16
BRIDGE_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class MarkovModel:
    states: tuple[str, ...]
    rates: np.ndarray
    kill: np.ndarray
    m: np.ndarray

    @property
    def n(self) -> int:
        return len(self.states)

    @cached_property
    def generator(self) -> np.ndarray:
        q = self.rates.copy()
        np.fill_diagonal(q, 0.0)
        q[np.diag_indices(self.n)] = -(q.sum(axis=1) + self.kill)
        q.flags.writeable = False
        return q

    @cached_property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.generator)

    @cached_property
    def spectrum(self) -> np.ndarray:
        return np.linalg.eigvals(self.generator)

    @property
    def decay_rate(self) -> float:
        """Smallest |Re λ| over the spectrum of Q."""
        return float(-self.spectrum.real.max())

    @cached_property
    def jump_table(self) -> np.ndarray:
        # Row x: cumulative law of the next state, last column is death.
        probs = np.zeros((self.n, self.n + 1))
        probs[:, : self.n] = self.rates
        probs[np.arange(self.n), np.arange(self.n)] = 0.0
        probs[:, self.n] = self.kill
        probs /= self.exit_rates[:, None]
        return np.cumsum(probs, axis=1)

    def index(self, state: str | int) -> int:
        if isinstance(state, (int, np.integer)):
            if not 0 <= state < self.n:
                raise ValueError(f'State index out of range: {state}')
            return int(state)
        try:
            return self.states.index(state)
        except ValueError as exc:
            raise ValueError(f'Unknown state: {state!r}') from exc


@dataclass(frozen=True, eq=False)
class PotentialKernel:
    u: np.ndarray
    m: np.ndarray

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def green(self) -> np.ndarray:
        """The matrix (-Q)^{-1}."""
        return self.u * self.m[None, :]

    @cached_property
    def symmetric(self) -> bool:
        return bool(np.allclose(self.u, self.u.T, rtol=1e-12, atol=0.0))

    def apply(self, f: ArrayLike) -> np.ndarray:
        """Return x -> sum_y u(x, y) f(y) m(y)."""
        return self.u @ (np.asarray(f, dtype=float) * self.m)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.u, dtype=dtype)


@dataclass(frozen=True, eq=False)
class Path:
    """Right-continuous path: sojourns at ``states`` then death."""

    states: np.ndarray
    holding: np.ndarray

    @property
    def start(self) -> int:
        return int(self.states[0]) if len(self.states) else DEATH

    @property
    def lifetime(self) -> float:
        return float(self.holding.sum())

    @property
    def jumps(self) -> int:
        return max(len(self.states) - 1, 0)

    def __len__(self) -> int:
        return len(self.states)

    def occupation(self, n: int) -> np.ndarray:
        return np.bincount(self.states, weights=self.holding, minlength=n)

    def state_at(self, t: float) -> int:
        if t < 0:
            raise ValueError('t must be nonnegative')
        ends = np.cumsum(self.holding)
        i = int(np.searchsorted(ends, t, side='right'))
        return int(self.states[i]) if i < len(self.states) else DEATH

    def shift(self, t: float) -> 'Path':
        """The path seen from time t on."""
        if t < 0:
            raise ValueError('t must be nonnegative')
        ends = np.cumsum(self.holding)
        i = int(np.searchsorted(ends, t, side='right'))
        if i >= len(self.states):
            return Path(np.empty(0, dtype=int), np.empty(0))
        holding = self.holding[i:].copy()
        holding[0] = ends[i] - t
        if holding[0] <= 0.0:
            return Path(self.states[i + 1 :].copy(), holding[1:])
        return Path(self.states[i:].copy(), holding)


def _as_vector(values: ArrayLike, name: str) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.ndim != 1:
        raise ModelValidationError(f'{name} must be a vector')
    return array


def build_model(
    rates: ArrayLike,
    kill: ArrayLike,
    m: ArrayLike,
    states: list[str] | tuple[str, ...] | None = None,
) -> MarkovModel:
    rates = np.array(rates, dtype=float)
    kill = _as_vector(kill, 'kill')
    m = _as_vector(m, 'm')
    n = len(kill)
    if n == 0 or rates.shape != (n, n) or m.shape != (n,):
        raise ModelValidationError(
            f'Inconsistent dimensions: rates {rates.shape}, '
            f'kill {kill.shape}, m {m.shape}'
        )
    if not all(np.isfinite(a).all() for a in (rates, kill, m)):
        raise ModelValidationError('Model entries must be finite')
    np.fill_diagonal(rates, 0.0)
    if (rates < 0).any() or (kill < 0).any():
        raise NegativeRateError('Jump and killing rates must be >= 0')
    if (m <= 0).any():
        raise NonpositiveWeightError('Reference weights must be > 0')

    states = tuple(str(s) for s in states) if states else None
    if states is None:
        states = tuple(str(i) for i in range(n))
    if len(states) != n or len(set(states)) != n:
        raise ModelValidationError('State names must be n distinct labels')

    for array in (rates, kill, m):
        array.flags.writeable = False
    model = MarkovModel(states=states, rates=rates, kill=kill, m=m)

    scale = max(1.0, float(np.abs(model.generator).max()))
    if model.spectrum.real.max() >= -TRANSIENCE_TOL * scale:
        raise NonTransientError(
            'Generator has an eigenvalue with nonnegative real part'
        )
    _check_duality(model)
    return model


def _check_duality(model: MarkovModel) -> None:
    for t in DUALITY_PROBE_TIMES:
        mass = model.m @ linalg.expm(t * model.generator)
        if (mass > model.m * (1.0 + 1e-10)).any():
            ic(t, mass, model.m)
            warnings.warn(
                f'm is not excessive for the dual chain at t={t}',
                DualityWarning,
                stacklevel=3,
            )
            return


def transition_density(model: MarkovModel, t: float) -> np.ndarray:
    """p_t(x, y) = (e^{tQ})_{xy} / m_y; entries underflow to 0 for huge t."""
    if t <= 0:
        raise ValueError('t must be positive')
    return linalg.expm(t * model.generator) / model.m[None, :]


@lru_cache(maxsize=64)
def potential_kernel(model: MarkovModel) -> PotentialKernel:
    minus_q = -model.generator
    try:
        green = np.linalg.solve(minus_q, np.eye(model.n))
    except np.linalg.LinAlgError as exc:
        raise SingularGeneratorError(str(exc)) from exc
    condition = np.linalg.cond(minus_q)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SingularGeneratorError(f'-Q is ill conditioned ({condition})')
    u = green / model.m[None, :]
    if (u <= 0).any():
        warnings.warn(
            'Potential density vanishes somewhere; chain is reducible',
            PositivityWarning,
            stacklevel=2,
        )
    u.flags.writeable = False
    return PotentialKernel(u=u, m=model.m)


def sample_path(
    model: MarkovModel, start: str | int, rng: np.random.Generator
) -> Path:
    x = model.index(start)
    table = model.jump_table
    exit_rates = model.exit_rates
    states: list[int] = []
    holding: list[float] = []
    while x != DEATH:
        states.append(x)
        holding.append(rng.exponential(1.0 / exit_rates[x]))
        nxt = int(np.searchsorted(table[x], rng.random(), side='right'))
        x = DEATH if nxt >= model.n else nxt
    return Path(np.array(states, dtype=int), np.array(holding))


class _Uniformization:
    """Powers of the uniformized kernel P = I + Q/λ, grown on demand."""

    def __init__(self, model: MarkovModel):
        self.rate = float(model.exit_rates.max())
        self.kernel = np.eye(model.n) + model.generator / self.rate
        self._powers = [np.eye(model.n)]
        self._lock = threading.Lock()

    def powers(self, k_max: int) -> np.ndarray:
        with self._lock:
            while len(self._powers) <= k_max:
                self._powers.append(self._powers[-1] @ self.kernel)
            return np.array(self._powers[: k_max + 1])


@lru_cache(maxsize=64)
def _uniformization(model: MarkovModel) -> _Uniformization:
    return _Uniformization(model)


def sample_bridge(
    model: MarkovModel,
    x: str | int,
    y: str | int,
    t: float,
    rng: np.random.Generator,
) -> Path:
    """
    Sample a path from Q_t^{x,y} / p_t(x, y).

    The number of uniformized jumps is drawn from its law conditioned on
    ending at y, jump times are uniform order statistics and the skeleton
    is drawn backward-filtered through powers of P.
    """
    if t <= 0:
        raise ValueError('t must be positive')
    x, y = model.index(x), model.index(y)
    chain = _uniformization(model)
    mean = chain.rate * t
    k_max = int(poisson.isf(BRIDGE_TAIL, mean)) + 1
    powers = chain.powers(k_max)
    to_y = powers[:, :, y]
    weights = poisson.pmf(np.arange(k_max + 1), mean) * to_y[:, x]
    total = weights.sum()
    if not np.isfinite(total) or total < BRIDGE_FLOOR:
        raise UnderflowBridgeError(
            f'p_t({x},{y}) underflows at t={t} (mass {total:.3e})'
        )
    k = int(rng.choice(k_max + 1, p=weights / total))
    times = np.sort(rng.uniform(0.0, t, size=k))

    skeleton = [x]
    for i in range(1, k + 1):
        probs = chain.kernel[skeleton[-1]] * to_y[k - i]
        probs = np.clip(probs, 0.0, None)
        skeleton.append(int(rng.choice(model.n, p=probs / probs.sum())))

    durations = np.diff(np.concatenate(([0.0], times, [t])))
    states: list[int] = []
    holding: list[float] = []
    for state, duration in zip(skeleton, durations):
        if states and states[-1] == state:
            holding[-1] += duration
        elif duration > 0.0:
            states.append(state)
            holding.append(duration)
    return Path(np.array(states, dtype=int), np.array(holding))


def ordered_integral(
    model: MarkovModel, t: float, measures: list[ArrayLike]
) -> np.ndarray:
    """
    Time-ordered integral of e^{r1 Q} D1 e^{(r2-r1) Q} ... Dk e^{(t-rk) Q}.

    D_j = diag(nu_j / m). Evaluated as the upper-right block of one
    block-bidiagonal matrix exponential.
    """
    n, k = model.n, len(measures)
    q = model.generator
    if k == 0:
        return linalg.expm(t * q)
    big = np.zeros(((k + 1) * n, (k + 1) * n))
    for j in range(k + 1):
        big[j * n : (j + 1) * n, j * n : (j + 1) * n] = q
    for j, nu in enumerate(measures):
        density = np.asarray(nu, dtype=float) / model.m
        big[j * n : (j + 1) * n, (j + 1) * n : (j + 2) * n] = np.diag(density)
    return linalg.expm(t * big)[:n, k * n :]


def ordered_sum(
    model: MarkovModel, t: float, measures: list[ArrayLike]
) -> np.ndarray:
    """
    Sum of ordered integrals over every ordering of ``measures``.

    Orderings that only swap identical measures give the same integral,
    so each distinct word is integrated once and weighted by its count.
    """
    atoms = [np.asarray(nu, dtype=float) for nu in measures]
    keys: dict[bytes, int] = {}
    labels = [keys.setdefault(a.tobytes(), len(keys)) for a in atoms]
    words = Counter(
        tuple(labels[i] for i in order)
        for order in itertools.permutations(range(len(atoms)))
    )
    first = {label: atoms[i] for i, label in reversed(list(enumerate(labels)))}
    total = np.zeros((model.n, model.n))
    for word, count in sorted(words.items()):
        total += count * ordered_integral(
            model, t, [first[label] for label in word]
        )
    return total


def bridge_moment(
    model: MarkovModel,
    x: str | int,
    y: str | int,
    t: float,
    measures: list[ArrayLike],
) -> float:
    """Q_t^{x,y}(prod_j L_t^{nu_j})."""
    if t <= 0:
        raise ValueError('t must be positive')
    x, y = model.index(x), model.index(y)
    return float(ordered_sum(model, t, measures)[x, y] / model.m[y])


def model_from_spec(spec: ModelSpec) -> MarkovModel:
    return build_model(spec.rates, spec.kill, spec.m, states=spec.states)


def model_to_spec(model: MarkovModel) -> ModelSpec:
    return ModelSpec(
        states=list(model.states),
        rates=model.rates.tolist(),
        kill=model.kill.tolist(),
        m=model.m.tolist(),
    )
