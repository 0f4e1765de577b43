import os

import numpy as np
import pytest

from semiclassical.kernels import KernelQuadConfig, QuantumProfile, TestFunction
from semiclassical.potential import gaussian, normalize


@pytest.fixture(scope="session")
def hat():
    return normalize(gaussian())


@pytest.fixture(scope="session")
def bump():
    return TestFunction.bump(1.5, 1.0)


@pytest.fixture(scope="session")
def qfd(hat):
    return QuantumProfile(hat, -1, 0.25)


@pytest.fixture(scope="session")
def kcfg():
    return KernelQuadConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True, scope="session")
def _cache_env(tmp_path_factory):
    # tensor caches go to a per-session directory unless the caller set one
    if "SEMICLASSICAL_CACHE_DIR" not in os.environ:
        os.environ["SEMICLASSICAL_CACHE_DIR"] = str(tmp_path_factory.mktemp("tensor-cache"))
    yield
