import numpy as np
import pytest

from lattice_tools import SQUARE_3X3, SquareLatticeInstance, enumerate_classes


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def classes():
    return enumerate_classes()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ferromagnet():
    return SquareLatticeInstance.ferromagnetic(SQUARE_3X3)


@pytest.fixture
def random_instance(rng):
    """
    Random ±1 couplers and fields on the 3×3 lattice
    """
    def make():
        couplers = tuple(int(value) for value in rng.choice([-1, 1], size=SQUARE_3X3.n_edges))
        fields = tuple(int(value) for value in rng.choice([-1, 1], size=SQUARE_3X3.n_sites))
        return SquareLatticeInstance(couplers=couplers, fields=fields)
    return make
