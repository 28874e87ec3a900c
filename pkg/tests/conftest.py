import pytest

from rmcorr.config import get_settings
from rmcorr.qcore import Partition, make_state


@pytest.fixture(autouse=True)
def fresh_settings():
    """Re-read RMCORR_* variables for every test"""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def ghz3():
    return make_state("ghz", 3)


@pytest.fixture
def bell():
    return make_state("bell", 2)


@pytest.fixture
def singletons3():
    return Partition.singletons(range(3))
