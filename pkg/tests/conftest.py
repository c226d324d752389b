import numpy as np
import pytest

from conceptlab.config import load_config
from conceptlab.oracle import AnalyticOracle
from conceptlab.schedule import make_schedule


@pytest.fixture(scope="session")
def fixture_a():
    return load_config("fixture_a")


@pytest.fixture(scope="session")
def schedule_100():
    return make_schedule(100)


@pytest.fixture(scope="session")
def oracle_a(fixture_a, schedule_100):
    return AnalyticOracle(fixture_a.world, fixture_a.table, schedule_100)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
