import numpy as np
import pytest
from hypothesis import settings

from thermocontrol.control import ControlBudget, PhasePoint
from thermocontrol.gas import GasKind, GasSpec

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def ideal():
    return GasSpec(GasKind.IDEAL, n=3, R=1)


@pytest.fixture(scope="session")
def budget():
    return ControlBudget(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_phase_point(rng, q1=(0.3, 3.0), q2=(-1.0, 1.0), lam=(-2.0, 2.0)) -> PhasePoint:
    return PhasePoint(rng.uniform(*q1), rng.uniform(*q2), rng.uniform(*lam), rng.uniform(*lam))


def random_measurement_arrays(rng, k=None, d=None):
    """Random base probabilities, values and an interior target."""
    k = int(rng.integers(2, 11)) if k is None else k
    d = int(rng.integers(1, 4)) if d is None else d
    d = min(d, k - 1)
    q = rng.uniform(0.2, 1.0, size=k)
    q /= q.sum()
    X = rng.normal(size=(k, d))
    w = rng.dirichlet(np.ones(k))
    return q, X, w @ X
