"""Reference chains shared by the CLI suites and the tests."""

import numpy as np

from src.markov import MarkovModel, build_model

K4_SEED = 20240611


def k2_model() -> MarkovModel:
    """Two states, unit jump rates both ways, unit killing, m = (1, 1)."""
    return build_model(
        rates=[[0.0, 1.0], [1.0, 0.0]],
        kill=[1.0, 1.0],
        m=[1.0, 1.0],
        states=['a', 'b'],
    )


def pure_death_model(n: int = 2) -> MarkovModel:
    return build_model(
        rates=np.zeros((n, n)),
        kill=np.ones(n),
        m=np.ones(n),
        states=[chr(ord('a') + i) for i in range(n)],
    )


def random_model(n: int, seed: int) -> MarkovModel:
    """
    Seeded random chain on n states.

    Killing is topped up so that m Q <= 0 componentwise, hence the dual
    chain is substochastic and the build emits no duality warning.
    """
    rng = np.random.default_rng(seed)
    rates = rng.uniform(0.2, 1.5, size=(n, n))
    np.fill_diagonal(rates, 0.0)
    m = rng.uniform(0.5, 1.5, size=n)
    inflow = (m @ rates) / m
    deficit = np.clip(inflow - rates.sum(axis=1), 0.0, None)
    kill = deficit + rng.uniform(0.2, 0.6, size=n)
    return build_model(
        rates=rates,
        kill=kill,
        m=m,
        states=[f's{i}' for i in range(n)],
    )


def k4_model() -> MarkovModel:
    return random_model(4, K4_SEED)
