import pytest

from mrca_lab.laws import StationaryLaw
from mrca_lab.mechanism import MechanismSpec

SEED = 0xC0FFEE


@pytest.fixture(scope="session")
def quad_spec():
    return MechanismSpec.quadratic(beta=1.0, theta=1.0)


@pytest.fixture(scope="session")
def quad_law(quad_spec):
    return StationaryLaw.from_spec(quad_spec)


@pytest.fixture(scope="session")
def stable_spec():
    return MechanismSpec.stable(alpha=1.0, c0=1.0, alpha0=0.5)


@pytest.fixture(scope="session")
def stable_law(stable_spec):
    return StationaryLaw.from_spec(stable_spec)


@pytest.fixture(scope="session")
def custom_spec():
    return MechanismSpec.custom(alpha=1.0, beta=1.0, atoms=[(1.0, 1.0), (0.5, 3.0)])


@pytest.fixture(scope="session")
def custom_law(custom_spec):
    return StationaryLaw.from_spec(custom_spec)
