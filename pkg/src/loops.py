"""
The loop measure mu of a chain, Poisson loop soups of intensity alpha mu
restricted to lifetimes above a cutoff delta, and the fields built on them.

mu is carried by rooted loops: a lifetime t with density (1/t) tr e^{tQ}
dt, a root x with weight (e^{tQ})_{xx}, and a bridge from x back to x.
"""

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path as FilePath

import numpy as np
from icecream import ic
from numpy.typing import ArrayLike
from scipy import integrate, linalg

from src.errors import QuadratureFailureError
from src.markov import MarkovModel, Path, ordered_sum, sample_bridge
from src.measures import as_atoms, caf_total
from src.schemas.schemas import LoopRecord, SoupHeader
from src.streams import map_chunks, plan_chunks

QUAD_RTOL = 1e-9
TAIL_EXPONENT = 35.0
GRID_POINTS = 4097


def _check_delta(delta: float) -> None:
    if not delta > 0:
        raise ValueError('delta must be positive')


def _horizon(model: MarkovModel, delta: float, power: int = 0) -> float:
    """
    A time T past which t^power e^{-a t} is below e^{-35} / n relative to
    its value at the cutoff, a being the decay rate of e^{tQ}.
    """
    rate = model.decay_rate
    target = TAIL_EXPONENT + math.log(model.n)
    reference = max(delta, 1.0 / rate)
    horizon = delta + target / rate
    while power * math.log(horizon / reference) - rate * (
        horizon - delta
    ) > -target:
        horizon *= 2.0
    return horizon


def _trace_exp(model: MarkovModel, t: float) -> float:
    return float(np.exp(model.spectrum * t).real.sum())


def _log_quad(fn, delta: float, horizon: float, what: str) -> float:
    value, error = integrate.quad(
        lambda s: fn(math.exp(s)),
        math.log(delta),
        math.log(horizon),
        epsabs=0.0,
        epsrel=QUAD_RTOL / 10,
        limit=400,
    )
    if not np.isfinite(value) or error > QUAD_RTOL * abs(value) + 1e-300:
        raise QuadratureFailureError(
            f'{what}: quadrature error {error:.3e} on value {value:.6e}'
        )
    return value


def loop_mass(model: MarkovModel, delta: float) -> float:
    """mu(zeta > delta) = int_delta^inf (1/t) tr e^{tQ} dt."""
    _check_delta(delta)
    horizon = _horizon(model, delta)
    mass = _log_quad(
        lambda t: _trace_exp(model, t), delta, horizon, 'loop_mass'
    )
    ic(delta, horizon, mass)
    return mass


def centering_term(model: MarkovModel, nu: ArrayLike, delta: float):
    """
    mu(1_{zeta > delta} L^nu_inf) = sum_y (e^{delta Q} (-Q)^{-1})_{yy}
    nu(y) / m_y, the time integral of p_t(y, y) in closed form.
    """
    _check_delta(delta)
    atoms = as_atoms(nu)
    if not atoms.any():
        return 0.0
    q = model.generator
    tail = linalg.expm(delta * q) @ np.linalg.solve(-q, np.eye(model.n))
    return float(np.diag(tail) @ (atoms / model.m))


def mu_moment_cutoff(
    model: MarkovModel, measures: Sequence[ArrayLike], delta: float
) -> float:
    """
    mu(1_{zeta > delta} prod_j L^{nu_j}_inf)
      = int_delta^inf (1/t) tr(sum over orderings of the time-ordered
        integral) dt.
    """
    _check_delta(delta)
    k = len(measures)
    if k == 0:
        return loop_mass(model, delta)
    if k == 1:
        return centering_term(model, measures[0], delta)
    atoms = [as_atoms(nu) for nu in measures]
    if any(not a.any() for a in atoms):
        return 0.0
    horizon = _horizon(model, delta, power=k)
    return _log_quad(
        lambda t: float(np.trace(ordered_sum(model, t, atoms))),
        delta,
        horizon,
        'mu_moment_cutoff',
    )


class LifetimeLaw:
    """
    Law of the lifetime of a mu-loop conditioned on zeta > delta.

    The density of log t is proportional to tr e^{tQ}; its CDF is tabulated
    on a log grid once and inverted by interpolation.
    """

    def __init__(self, model: MarkovModel, delta: float):
        _check_delta(delta)
        self.model = model
        self.delta = delta
        self.horizon = _horizon(model, delta)

    @cached_property
    def grid(self) -> np.ndarray:
        return np.linspace(
            math.log(self.delta), math.log(self.horizon), GRID_POINTS
        )

    @cached_property
    def table(self) -> np.ndarray:
        times = np.exp(self.grid)
        density = np.exp(np.outer(times, self.model.spectrum)).real.sum(1)
        cdf = integrate.cumulative_trapezoid(density, self.grid, initial=0.0)
        return cdf / cdf[-1]

    @cached_property
    def mass(self) -> float:
        return loop_mass(self.model, self.delta)

    def prepare(self) -> 'LifetimeLaw':
        """Fill the CDF table and the mass before workers share the law."""
        for name in ('grid', 'table', 'mass'):
            getattr(self, name)
        return self

    def cdf(self, t: ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        logs = np.log(np.clip(t, self.delta, self.horizon))
        return np.interp(logs, self.grid, self.table)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.exp(np.interp(rng.random(size), self.table, self.grid))


@dataclass(frozen=True, eq=False)
class Loop:
    root: int
    lifetime: float
    path: Path

    def __post_init__(self):
        if not self.lifetime > 0:
            raise ValueError('loop lifetime must be positive')
        if len(self.path) and (
            self.path.start != self.root
            or int(self.path.states[-1]) != self.root
        ):
            raise ValueError('loop must start and end at its root')

    def caf(self, nu: ArrayLike, m: np.ndarray) -> float:
        return caf_total(self.path, nu, m)


@dataclass(frozen=True, eq=False)
class LoopSoup:
    alpha: float
    delta: float
    loops: tuple[Loop, ...]
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.loops)


def _sample_loop(model, law, rng, lifetime=None) -> Loop:
    t = float(law.sample(rng, 1)[0]) if lifetime is None else lifetime
    weights = np.clip(np.diag(linalg.expm(t * model.generator)), 0.0, None)
    root = int(rng.choice(model.n, p=weights / weights.sum()))
    return Loop(root, t, sample_bridge(model, root, root, t, rng))


def _check_intensity(alpha: float, delta: float) -> None:
    if not alpha > 0:
        raise ValueError('alpha must be positive')
    _check_delta(delta)


def sample_soup(
    model: MarkovModel,
    alpha: float,
    delta: float,
    rng: np.random.Generator,
    *,
    seed: int | None = None,
    law: LifetimeLaw | None = None,
) -> LoopSoup:
    _check_intensity(alpha, delta)
    law = law or LifetimeLaw(model, delta)
    count = int(rng.poisson(alpha * law.mass))
    loops = tuple(_sample_loop(model, law, rng) for _ in range(count))
    return LoopSoup(alpha, delta, loops, seed)


def occupation_field(
    soup: LoopSoup, nu: ArrayLike, model: MarkovModel
) -> float:
    """Soup total of L^nu_inf minus alpha mu(1_{zeta > delta} L^nu_inf)."""
    atoms = as_atoms(nu)
    if not atoms.any():
        return 0.0
    total = sum(loop.caf(atoms, model.m) for loop in soup.loops)
    return total - soup.alpha * centering_term(model, atoms, soup.delta)


def theta(
    soup: LoopSoup, rho: ArrayLike, phi: ArrayLike, model: MarkovModel
) -> float:
    """theta^{rho,phi} = sum over soup loops of L^rho_inf L^phi_inf."""
    rho, phi = as_atoms(rho), as_atoms(phi)
    if (rho < 0).any() or (phi < 0).any():
        raise ValueError('rho and phi must be nonnegative measures')
    return sum(
        loop.caf(rho, model.m) * loop.caf(phi, model.m)
        for loop in soup.loops
    )


def merge_soups(first: LoopSoup, second: LoopSoup) -> LoopSoup:
    """Superposition; intensities add."""
    if not math.isclose(first.delta, second.delta):
        raise ValueError('soups must share the lifetime cutoff')
    return LoopSoup(
        first.alpha + second.alpha,
        first.delta,
        first.loops + second.loops,
    )


@dataclass(frozen=True, eq=False)
class SoupBatch:
    """
    Many independent soups in flat form: one row per loop holding its
    occupation-time vector, plus the index of the soup it belongs to.
    """

    alpha: float
    delta: float
    n_soups: int
    soup_index: np.ndarray
    occupations: np.ndarray
    lifetimes: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.soup_index, minlength=self.n_soups)

    def caf(self, nu: ArrayLike, m: np.ndarray) -> np.ndarray:
        """L^nu_inf of every loop."""
        return self.occupations @ (as_atoms(nu) / m)

    def _per_soup(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(
            self.soup_index, weights=values, minlength=self.n_soups
        )

    def psi_hat(self, model: MarkovModel, nu: ArrayLike) -> np.ndarray:
        centering = self.alpha * centering_term(model, nu, self.delta)
        return self._per_soup(self.caf(nu, model.m)) - centering

    def theta(
        self, model: MarkovModel, rho: ArrayLike, phi: ArrayLike
    ) -> np.ndarray:
        rho, phi = as_atoms(rho), as_atoms(phi)
        if (rho < 0).any() or (phi < 0).any():
            raise ValueError('rho and phi must be nonnegative measures')
        return self._per_soup(
            self.caf(rho, model.m) * self.caf(phi, model.m)
        )

    @classmethod
    def concat(cls, batches: Sequence['SoupBatch']) -> 'SoupBatch':
        """Stack batches in order; soup indices are renumbered."""
        if not batches:
            raise ValueError('nothing to concatenate')
        offsets = np.cumsum([0] + [b.n_soups for b in batches[:-1]])
        first = batches[0]
        return cls(
            alpha=first.alpha,
            delta=first.delta,
            n_soups=int(sum(b.n_soups for b in batches)),
            soup_index=np.concatenate(
                [b.soup_index + o for b, o in zip(batches, offsets)]
            ),
            occupations=np.concatenate([b.occupations for b in batches]),
            lifetimes=np.concatenate([b.lifetimes for b in batches]),
        )


def sample_soup_batch(
    model: MarkovModel,
    alpha: float,
    delta: float,
    n_soups: int,
    rng: np.random.Generator,
    *,
    law: LifetimeLaw | None = None,
) -> SoupBatch:
    _check_intensity(alpha, delta)
    law = law or LifetimeLaw(model, delta)
    counts = rng.poisson(alpha * law.mass, size=n_soups)
    total = int(counts.sum())
    lifetimes = law.sample(rng, total)
    occupations = np.zeros((total, model.n))
    for i, t in enumerate(lifetimes):
        loop = _sample_loop(model, law, rng, lifetime=float(t))
        occupations[i] = loop.path.occupation(model.n)
    return SoupBatch(
        alpha=alpha,
        delta=delta,
        n_soups=n_soups,
        soup_index=np.repeat(np.arange(n_soups), counts),
        occupations=occupations,
        lifetimes=lifetimes,
    )


def sample_soups(
    model: MarkovModel,
    alpha: float,
    delta: float,
    n_soups: int,
    seed: int,
    *,
    threads: int = 1,
    chunk_size: int | None = None,
) -> SoupBatch:
    """Chunked batch sampling; the result depends on seed and chunk size."""
    law = LifetimeLaw(model, delta).prepare()
    plan = (
        plan_chunks(seed, n_soups)
        if chunk_size is None
        else plan_chunks(seed, n_soups, chunk_size)
    )
    batches = map_chunks(
        lambda rng, size: sample_soup_batch(
            model, alpha, delta, size, rng, law=law
        ),
        plan,
        threads=threads,
    )
    return SoupBatch.concat(batches)


def write_soup_jsonl(
    soup: LoopSoup, path: FilePath | str, model: MarkovModel
) -> None:
    """A header line with alpha, delta and seed, then one loop per line."""
    header = SoupHeader(
        alpha=soup.alpha,
        delta=soup.delta,
        seed=soup.seed,
        states=list(model.states),
    )
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(header.model_dump_json() + '\n')
        for loop in soup.loops:
            record = LoopRecord(
                root=model.states[loop.root],
                lifetime=loop.lifetime,
                skeleton=[model.states[s] for s in loop.path.states],
                holding=loop.path.holding.tolist(),
            )
            handle.write(record.model_dump_json() + '\n')


def read_soup_jsonl(path: FilePath | str, model: MarkovModel) -> LoopSoup:
    with open(path, encoding='utf-8') as handle:
        lines = [line for line in handle if line.strip()]
    if not lines:
        raise ValueError(f'{path} holds no soup header')
    header = SoupHeader.model_validate(json.loads(lines[0]))
    if tuple(header.states) != model.states:
        raise ValueError('soup was sampled on a different state space')
    loops = []
    for line in lines[1:]:
        record = LoopRecord.model_validate_json(line)
        states = np.array([model.index(s) for s in record.skeleton], int)
        loops.append(
            Loop(
                model.index(record.root),
                record.lifetime,
                Path(states, np.array(record.holding, dtype=float)),
            )
        )
    return LoopSoup(header.alpha, header.delta, tuple(loops), header.seed)
