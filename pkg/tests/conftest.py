import numpy as np
import pytest
from fastapi.testclient import TestClient
from sqlalchemy.pool import StaticPool
from sqlmodel import Session, SQLModel, create_engine

from src.api import app
from src.db import get_session
from src.fixtures import k2_model, k4_model, pure_death_model
from src.levy import LatticeLevyKernel, rw_exponent, stable_exponent


@pytest.fixture(name='k2')
def k2_fixture():
    """Two-state chain with u = (1/3)[[2, 1], [1, 2]]."""
    return k2_model()


@pytest.fixture(name='k4')
def k4_fixture():
    return k4_model()


@pytest.fixture(name='death')
def death_fixture():
    return pure_death_model(2)


@pytest.fixture(name='rng')
def rng_fixture():
    return np.random.default_rng(12345)


@pytest.fixture(name='rw32')
def rw32_fixture():
    """Nearest-neighbour walk on Z_32 with unit killing."""
    return LatticeLevyKernel(1, 32, 1.0, rw_exponent(1, 32), 'rw')


@pytest.fixture(name='stable64')
def stable64_fixture():
    return LatticeLevyKernel(
        1, 64, 1.0, stable_exponent(1, 64, 1.5), 'stable_surrogate'
    )


@pytest.fixture(name='session')
def session_fixture():
    """Create a test database session."""
    engine = create_engine(
        'sqlite:///:memory:',
        connect_args={'check_same_thread': False},
        poolclass=StaticPool,
    )
    SQLModel.metadata.create_all(engine)

    with Session(engine) as session:
        yield session


@pytest.fixture(name='client')
def client_fixture(session: Session):
    """Create test client with database session."""

    def get_session_override():
        return session

    app.dependency_overrides[get_session] = get_session_override
    client = TestClient(app)
    yield client
    app.dependency_overrides.clear()
