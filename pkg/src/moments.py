"""
Exact moment formulas for permanental fields and loop measures.

Every quantity here is a finite sum over permutations or set partitions of
cyclic integrals tr(B_1 ... B_n), where B_j = diag(nu_j) u. Nothing is
sampled, so these values are the oracles the Monte Carlo code is checked
against.
"""

import itertools
import math
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from icecream import ic
from numpy.typing import ArrayLike

from src.errors import TooLargeError
from src.measures import as_atoms

MAX_ORDER = 10
SUM_CHUNK = 4096

MuEvaluator = Callable[[list[np.ndarray]], float]


def _kernel(u: ArrayLike) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError('u must be a square matrix')
    return u


def _check_order(n: int, what: str = 'order') -> None:
    if n > MAX_ORDER:
        raise TooLargeError(f'{what} {n} exceeds the cap of {MAX_ORDER}')


def _blocks(u: np.ndarray, measures: Sequence[ArrayLike]) -> list:
    blocks = []
    for nu in measures:
        atoms = as_atoms(nu)
        if atoms.shape != (u.shape[0],):
            raise ValueError(
                f'measure has {atoms.size} atoms, kernel has {u.shape[0]}'
            )
        blocks.append(atoms[:, None] * u)
    return blocks


def _trace_of_product(blocks: Sequence[np.ndarray]) -> float:
    product = blocks[0]
    for block in blocks[1:]:
        product = product @ block
    return float(np.trace(product))


def _pairwise_total(terms: Iterator[float]) -> float:
    """Chunked pairwise summation; stable for a fixed term order."""
    partials = [
        np.sum(np.fromiter(chunk, dtype=float))
        for chunk in itertools.batched(terms, SUM_CHUNK)
    ]
    return float(np.sum(partials)) if partials else 0.0


@dataclass(frozen=True)
class CycleWeight:
    permutation: tuple[int, ...]

    @cached_property
    def cycles(self) -> tuple[tuple[int, ...], ...]:
        """Cycles in canonical form, each starting at its smallest index."""
        seen = [False] * len(self.permutation)
        cycles = []
        for start in range(len(self.permutation)):
            if seen[start]:
                continue
            cycle = []
            j = start
            while not seen[j]:
                seen[j] = True
                cycle.append(j)
                j = self.permutation[j]
            cycles.append(tuple(cycle))
        return tuple(cycles)

    @property
    def cycle_count(self) -> int:
        return len(self.cycles)

    @property
    def fixed_point_free(self) -> bool:
        return all(j != p for j, p in enumerate(self.permutation))


def permutations(n: int, *, fixed_point_free: bool = False):
    """Permutations of range(n) in lexicographic one-line order."""
    for perm in itertools.permutations(range(n)):
        weight = CycleWeight(perm)
        if fixed_point_free and not weight.fixed_point_free:
            continue
        yield weight


def derangement_count(n: int) -> int:
    """|P'_n|, the number of fixed-point-free permutations of [1, n]."""
    previous, count = 1, 0
    if n == 0:
        return previous
    for k in range(2, n + 1):
        previous, count = count, (k - 1) * (count + previous)
    return count


def cyclic_integral(u: ArrayLike, measures: Sequence[ArrayLike]) -> float:
    """Integral of prod u(x_j, x_{j+1}) prod dnu_j(x_j), x_{n+1} = x_1."""
    if not measures:
        raise ValueError('cyclic_integral needs at least one measure')
    return _trace_of_product(_blocks(_kernel(u), measures))


def _permutation_sum(
    n: int,
    alpha: float,
    cycle_value: Callable[[tuple[int, ...]], float],
    *,
    fixed_point_free: bool,
) -> float:
    cache: dict[tuple[int, ...], float] = {}

    def value(cycle):
        if cycle not in cache:
            cache[cycle] = cycle_value(cycle)
        return cache[cycle]

    def terms():
        for weight in permutations(n, fixed_point_free=fixed_point_free):
            term = alpha**weight.cycle_count
            for cycle in weight.cycles:
                term *= value(cycle)
            yield term

    return _pairwise_total(terms())


def alpha_permanental_moment(
    u: ArrayLike, measures: Sequence[ArrayLike], alpha: float
) -> float:
    """
    E prod_j psi(nu_j) for the alpha-permanental field with kernel u.

    Sums alpha^{c(pi)} times the product of cyclic integrals of the cycles
    of pi over fixed-point-free permutations pi.
    """
    if alpha <= 0:
        raise ValueError('alpha must be positive')
    n = len(measures)
    _check_order(n)
    if n == 0:
        return 1.0
    if n == 1:
        return 0.0
    u = _kernel(u)
    blocks = _blocks(u, measures)

    def cycle_value(cycle):
        return _trace_of_product([blocks[j] for j in cycle])

    total = _permutation_sum(n, alpha, cycle_value, fixed_point_free=True)
    ic(n, alpha, total)
    return total


def permanental_process_moment(
    u: ArrayLike, points: Sequence[int], alpha: float
) -> float:
    """Sum over every permutation of alpha^{c(pi)} prod u(x_j, x_pi(j))."""
    if alpha <= 0:
        raise ValueError('alpha must be positive')
    n = len(points)
    _check_order(n)
    if n == 0:
        return 1.0
    u = _kernel(u)
    points = [int(x) for x in points]

    def cycle_value(cycle):
        value = 1.0
        for j, k in zip(cycle, cycle[1:] + cycle[:1]):
            value *= u[points[j], points[k]]
        return value

    return _permutation_sum(n, alpha, cycle_value, fixed_point_free=False)


def brute_force_alpha_moment(
    u: ArrayLike, measures: Sequence[ArrayLike], alpha: float
) -> float:
    """Direct summation over states and permutations, O(n! |S|^n)."""
    u = _kernel(u)
    atoms = [as_atoms(nu) for nu in measures]
    n, size = len(atoms), len(u)
    _check_order(n)
    derangements = [
        (weight.permutation, weight.cycle_count)
        for weight in permutations(n, fixed_point_free=True)
    ]
    total = 0.0 if n else 1.0
    for xs in itertools.product(range(size), repeat=n):
        mass = math.prod(atoms[j][xs[j]] for j in range(n))
        if mass == 0.0:
            continue
        for perm, cycles in derangements:
            kernel = math.prod(u[xs[j], xs[perm[j]]] for j in range(n))
            total += alpha**cycles * mass * kernel
    return total


def _ordered_products(
    blocks: list[np.ndarray], size: int
) -> dict[int, np.ndarray]:
    """F(mask) = sum over orderings of the blocks in mask of their product."""
    table = {0: np.eye(size)}
    for mask in range(1, 1 << len(blocks)):
        total = np.zeros((size, size))
        for i, block in enumerate(blocks):
            if mask & (1 << i):
                total += table[mask & ~(1 << i)] @ block
        table[mask] = total
    return table


def mu_moment(
    u: ArrayLike,
    measures: Sequence[ArrayLike],
    *,
    method: str = 'dp',
    form: str = 'symmetric',
) -> float:
    """
    mu(prod_j L^{nu_j}_inf) = (1/k) sum over permutations of the cyclic
    integral with permuted measures.

    ``form='anchored'`` fixes the last measure and sums over orderings of
    the others. ``method='enumerate'`` walks the permutations explicitly.
    """
    k = len(measures)
    if k == 0:
        raise ValueError('mu has infinite total mass; give at least one')
    _check_order(k)
    if method not in {'dp', 'enumerate'}:
        raise ValueError(f'Unknown method: {method}')
    if form not in {'symmetric', 'anchored'}:
        raise ValueError(f'Unknown form: {form}')
    u = _kernel(u)
    blocks = _blocks(u, measures)

    if method == 'enumerate':
        if form == 'symmetric':
            orders = itertools.permutations(range(k))
            scale = 1.0 / k
        else:
            orders = (
                (*rest, k - 1)
                for rest in itertools.permutations(range(k - 1))
            )
            scale = 1.0
        return scale * _pairwise_total(
            _trace_of_product([blocks[i] for i in order]) for order in orders
        )

    if form == 'symmetric':
        table = _ordered_products(blocks, len(u))
        return float(np.trace(table[(1 << k) - 1])) / k
    table = _ordered_products(blocks[:-1], len(u))
    return float(np.trace(table[(1 << (k - 1)) - 1] @ blocks[-1]))


def qxy_moment(
    u: ArrayLike, x: int, y: int, measures: Sequence[ArrayLike]
) -> float:
    """Q^{x,y}(prod_j L^{nu_j}_inf): u-chains from x to y through the nu_j."""
    u = _kernel(u)
    k = len(measures)
    _check_order(k)
    if k == 0:
        return float(u[x, y])
    table = _ordered_products(_blocks(u, measures), len(u))
    return float((u @ table[(1 << k) - 1])[x, y])


@dataclass(frozen=True)
class MomentGroup:
    measures: tuple[np.ndarray, ...]
    centered: bool = False

    def __post_init__(self):
        if not self.measures:
            raise ValueError('A moment group needs at least one measure')
        object.__setattr__(
            self, 'measures', tuple(as_atoms(nu) for nu in self.measures)
        )


@dataclass(frozen=True)
class MomentSpec:
    groups: tuple[MomentGroup, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.groups:
            raise ValueError('A moment spec needs at least one group')
        object.__setattr__(self, 'groups', tuple(self.groups))

    @property
    def factor_count(self) -> int:
        return sum(len(group.measures) for group in self.groups)


def set_partitions(items: Sequence) -> Iterator[list[list]]:
    """Every set partition of ``items``, blocks in first-element order."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in set_partitions(rest):
        yield [[first], *partition]
        for i in range(len(partition)):
            yield [
                *partition[:i],
                [first, *partition[i]],
                *partition[i + 1 :],
            ]


def poisson_mixed_moment(
    u: ArrayLike,
    alpha: float,
    spec: MomentSpec,
    *,
    method: str = 'partition',
    mu: MuEvaluator | None = None,
) -> float:
    """
    E prod_g X_g for X_g = sum over soup loops of prod_{nu in g} L^nu_inf,
    centered groups having their mean removed.

    ``partition`` sums alpha mu(block) over set partitions of the groups,
    skipping partitions with a singleton centered block. ``expand``
    writes every centered factor as raw minus mean and uses the
    uncentered partition rule. ``mu`` replaces the loop measure moment,
    e.g. by its lifetime-truncated version.
    """
    if alpha <= 0:
        raise ValueError('alpha must be positive')
    if method not in {'partition', 'expand'}:
        raise ValueError(f'Unknown method: {method}')
    _check_order(spec.factor_count, 'factor count')
    if mu is None:
        kernel = _kernel(u)

        def mu(measures):
            return mu_moment(kernel, measures)

    cumulants: dict[frozenset[int], float] = {}

    def cumulant(block) -> float:
        key = frozenset(block)
        if key not in cumulants:
            measures = [
                nu for g in sorted(key) for nu in spec.groups[g].measures
            ]
            cumulants[key] = alpha * mu(measures)
        return cumulants[key]

    def raw_moment(indices, skip_centered):
        total = 0.0
        for partition in set_partitions(list(indices)):
            if skip_centered and any(
                len(block) == 1 and spec.groups[block[0]].centered
                for block in partition
            ):
                continue
            total += math.prod(cumulant(block) for block in partition)
        return total

    indices = range(len(spec.groups))
    if method == 'partition':
        return raw_moment(indices, skip_centered=True)

    centered = [g for g in indices if spec.groups[g].centered]
    total = 0.0
    for r in range(len(centered) + 1):
        for subtracted in itertools.combinations(centered, r):
            kept = [g for g in indices if g not in subtracted]
            means = math.prod(cumulant([g]) for g in subtracted)
            total += (-1) ** r * means * raw_moment(kept, skip_centered=False)
    return total


def q_rho_phi_moment(
    u: ArrayLike,
    rho: ArrayLike,
    phi: ArrayLike,
    measures: Sequence[ArrayLike],
) -> float:
    """Q^rho_phi(prod L^{nu_j}) = mu(L^rho L^phi prod L^{nu_j})."""
    rho, phi = as_atoms(rho), as_atoms(phi)
    if (rho < 0).any() or (phi < 0).any():
        raise ValueError('rho and phi must be nonnegative measures')
    return mu_moment(u, [rho, phi, *measures])


@dataclass(frozen=True)
class MomentGrowth:
    orders: tuple[int, ...]
    values: tuple[float, ...]
    constant: float
    intercept: float


def moment_growth(
    u: ArrayLike,
    rho: ArrayLike,
    phi: ArrayLike,
    nu: ArrayLike,
    n_max: int = 6,
) -> MomentGrowth:
    """Q^rho_phi((L^nu)^n) / n! for n = 1..n_max and its growth constant."""
    if n_max < 2:
        raise ValueError('n_max must be at least 2 to fit a growth rate')
    _check_order(n_max + 2, 'factor count')
    orders = tuple(range(1, n_max + 1))
    values = tuple(
        q_rho_phi_moment(u, rho, phi, [nu] * n) / math.factorial(n)
        for n in orders
    )
    ns = np.array(orders, dtype=float)
    magnitudes = np.abs(values)
    keep = magnitudes > 0.0
    if keep.sum() < 2:  # noqa: PLR2004
        return MomentGrowth(orders, values, 0.0, -math.inf)
    slope, intercept = np.polyfit(ns[keep], np.log(magnitudes[keep]), 1)
    ic(orders, values, slope)
    return MomentGrowth(orders, values, float(np.exp(slope)), float(intercept))
