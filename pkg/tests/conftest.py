import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nhsquare.config import RunConfig, build_setup

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def default_setup():
    return build_setup(RunConfig.load())


@pytest.fixture(scope="session")
def block_setup():
    return build_setup(RunConfig.load(overrides=['b={"type": "block"}']))


@pytest.fixture(scope="session")
def cantor_setup():
    return build_setup(RunConfig.load(overrides=['measure={"builtin": "cantor", "depth": 6}']))


@pytest.fixture(params=["one", "block"])
def any_b_setup(request, default_setup, block_setup):
    return default_setup if request.param == "one" else block_setup


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
