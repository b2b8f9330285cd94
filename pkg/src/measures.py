"""
Signed measures on the state set and the additive functionals they drive.

A measure nu acts along a path through the density f(y) = nu({y}) / m_y,
so that E^x L^nu_inf = sum_y u(x, y) nu({y}).
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from icecream import ic
from numpy.typing import ArrayLike

from src.markov import MarkovModel, Path, potential_kernel, sample_path
from src.schemas.schemas import RevuzReport
from src.streams import map_chunks, plan_chunks, z_score

MIN_REVUZ_SAMPLES = 1000


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    atoms: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float).reshape(-1)
        if not np.isfinite(atoms).all():
            raise ValueError('Measure atoms must be finite')
        atoms.flags.writeable = False
        object.__setattr__(self, 'atoms', atoms)

    @classmethod
    def zeros(cls, n: int) -> 'SignedMeasure':
        return cls(np.zeros(n))

    @classmethod
    def delta(cls, n: int, index: int, weight: float = 1.0):
        atoms = np.zeros(n)
        atoms[index] = weight
        return cls(atoms)

    @classmethod
    def uniform(cls, n: int, weight: float = 1.0) -> 'SignedMeasure':
        return cls(np.full(n, weight))

    @classmethod
    def from_mapping(
        cls, states: Sequence[str], weights: Mapping[str, float]
    ) -> 'SignedMeasure':
        unknown = set(weights) - set(states)
        if unknown:
            raise ValueError(f'Unknown states in measure: {sorted(unknown)}')
        return cls([float(weights.get(s, 0.0)) for s in states])

    def to_mapping(self, states: Sequence[str]) -> dict[str, float]:
        return {s: float(w) for s, w in zip(states, self.atoms)}

    @property
    def n(self) -> int:
        return len(self.atoms)

    @property
    def positive(self) -> 'SignedMeasure':
        return SignedMeasure(np.clip(self.atoms, 0.0, None))

    @property
    def negative(self) -> 'SignedMeasure':
        return SignedMeasure(np.clip(-self.atoms, 0.0, None))

    @property
    def abs(self) -> 'SignedMeasure':
        return SignedMeasure(np.abs(self.atoms))

    @property
    def total_variation(self) -> float:
        return float(np.abs(self.atoms).sum())

    @property
    def is_nonnegative(self) -> bool:
        return bool((self.atoms >= 0).all())

    def translate(self, shift: Sequence[int], shape: Sequence[int]):
        """nu_h(A) = nu(A - h) for a measure laid out on a torus grid."""
        grid = self.atoms.reshape(tuple(shape))
        moved = np.roll(grid, tuple(shift), axis=tuple(range(grid.ndim)))
        return SignedMeasure(moved.reshape(-1))

    def __add__(self, other: 'SignedMeasure') -> 'SignedMeasure':
        return SignedMeasure(self.atoms + np.asarray(other, dtype=float))

    def __sub__(self, other: 'SignedMeasure') -> 'SignedMeasure':
        return SignedMeasure(self.atoms - np.asarray(other, dtype=float))

    def __mul__(self, scalar: float) -> 'SignedMeasure':
        return SignedMeasure(self.atoms * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> 'SignedMeasure':
        return SignedMeasure(-self.atoms)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.atoms, dtype=dtype)

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True, eq=False)
class CAFTrace:
    breakpoints: np.ndarray
    values: np.ndarray

    def at(self, t: float) -> float:
        if t < 0:
            raise ValueError('t must be nonnegative')
        return float(np.interp(t, self.breakpoints, self.values))

    @property
    def total(self) -> float:
        return float(self.values[-1])


def as_atoms(nu: ArrayLike) -> np.ndarray:
    return np.asarray(nu, dtype=float).reshape(-1)


def _densities(nu: ArrayLike, m: np.ndarray):
    atoms = as_atoms(nu)
    return np.clip(atoms, 0.0, None) / m, np.clip(-atoms, 0.0, None) / m


def caf_total(path: Path, nu: ArrayLike, m: np.ndarray) -> float:
    """L^nu_inf as the difference of the CAFs of nu+ and nu-."""
    if not len(path):
        return 0.0
    plus, minus = _densities(nu, m)
    occupation = path.occupation(len(m))
    return float(occupation @ plus - occupation @ minus)


def caf_trace(path: Path, nu: ArrayLike, m: np.ndarray) -> CAFTrace:
    plus, minus = _densities(nu, m)
    if not len(path):
        return CAFTrace(np.zeros(1), np.zeros(1))
    slopes = plus[path.states] - minus[path.states]
    breakpoints = np.concatenate(([0.0], np.cumsum(path.holding)))
    values = np.concatenate(([0.0], np.cumsum(slopes * path.holding)))
    return CAFTrace(breakpoints, values)


def caf_at(path: Path, nu: ArrayLike, m: np.ndarray, t: float) -> float:
    """L^nu_t, frozen at its final value for t >= lifetime."""
    if t < 0:
        raise ValueError('t must be nonnegative')
    return caf_trace(path, nu, m).at(t)


def revuz_potential(kernel, nu: ArrayLike) -> np.ndarray:
    """(U nu)(x) = sum_y u(x, y) nu({y})."""
    return np.asarray(kernel, dtype=float) @ as_atoms(nu)


def _revuz_chunk(model, nu, start, rng, size):
    values = np.empty(size)
    for i in range(size):
        values[i] = caf_total(sample_path(model, start, rng), nu, model.m)
    return values


def verify_revuz(
    model: MarkovModel,
    nu: ArrayLike,
    x: str | int,
    samples: int,
    seed: int,
    *,
    threads: int = 1,
    name: str = 'revuz',
) -> RevuzReport:
    atoms = as_atoms(nu)
    if (atoms < 0).any():
        raise ValueError('verify_revuz needs a nonnegative measure')
    if samples < MIN_REVUZ_SAMPLES:
        raise ValueError(f'samples must be >= {MIN_REVUZ_SAMPLES}')
    start = model.index(x)

    plan = plan_chunks(seed, samples)
    values = np.concatenate(
        map_chunks(
            lambda rng, size: _revuz_chunk(model, atoms, start, rng, size),
            plan,
            threads=threads,
        )
    )
    exact = float(revuz_potential(potential_kernel(model), atoms)[start])
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(samples))
    z = z_score(mean, exact, stderr)
    ic(name, exact, mean, stderr, z)
    return RevuzReport(
        name=name,
        state=model.states[start],
        exact=exact,
        estimate=mean,
        standard_error=stderr,
        z_score=z,
        samples=samples,
        seed=seed,
        chunk_size=plan.chunk_size,
        passed=abs(z) <= 3.0,
    )
