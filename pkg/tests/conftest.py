import numpy as np
import pytest

from rankspec.blockmodel import BlockModelSpec, Membership
from rankspec.distributions import Exponential, Normal, Uniform


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale reproductions (deselect with -m 'not slow')")


@pytest.fixture(autouse=True, scope="session")
def serial_quiet_runs():
    patch = pytest.MonkeyPatch()
    patch.setenv("RANKSPEC_THREADS", "1")
    patch.setenv("RANKSPEC_PROGRESS", "0")
    yield
    patch.undo()


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)


@pytest.fixture
def uniform_exponential_spec():
    """Two blocks of 20: Uniform(0, 1) within, Exponential(1) between."""
    return BlockModelSpec(
        Membership.from_block_sizes([20, 20]),
        {(1, 1): Uniform(0.0, 1.0), (1, 2): Exponential(1.0), (2, 2): Uniform(0.0, 1.0)},
    )


@pytest.fixture
def normal_spec():
    """Two balanced blocks of 60 with well separated normal means."""
    return BlockModelSpec(
        Membership.from_block_sizes([60, 60]),
        {(1, 1): Normal(4.0, 1.0), (1, 2): Normal(0.0, 1.0), (2, 2): Normal(4.0, 1.0)},
    )
