"""
Splittable seed streams and chunked Monte Carlo execution.

Work is cut into chunks of a fixed size and every chunk owns a child of
``SeedSequence(seed)``, so the numbers produced depend on the seed and the
chunk size only. Threads just change who runs a chunk.
"""

import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TypeVar

import numpy as np

from src.config import DEFAULT_CHUNK_SIZE

T = TypeVar('T')


@dataclass(frozen=True)
class ChunkPlan:
    seed: int
    chunk_size: int
    sizes: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def generators(self) -> list[np.random.Generator]:
        children = np.random.SeedSequence(self.seed).spawn(len(self.sizes))
        return [np.random.default_rng(child) for child in children]


def plan_chunks(
    seed: int, total: int, chunk_size: int = DEFAULT_CHUNK_SIZE
) -> ChunkPlan:
    if total <= 0:
        raise ValueError('total must be positive')
    if chunk_size <= 0:
        raise ValueError('chunk_size must be positive')
    full, rest = divmod(total, chunk_size)
    sizes = (chunk_size,) * full + ((rest,) if rest else ())
    return ChunkPlan(seed=int(seed), chunk_size=chunk_size, sizes=sizes)


def map_chunks(
    fn: Callable[[np.random.Generator, int], T],
    plan: ChunkPlan,
    threads: int = 1,
) -> list[T]:
    """Run ``fn(rng, size)`` for every chunk; results in chunk order."""
    jobs = list(zip(plan.generators(), plan.sizes))
    if threads <= 1 or len(jobs) == 1:
        return [fn(rng, size) for rng, size in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def z_score(estimate: float, exact: float, stderr: float) -> float:
    if stderr > 0:
        return (estimate - exact) / stderr
    return 0.0 if math.isclose(estimate, exact, abs_tol=1e-12) else math.inf
