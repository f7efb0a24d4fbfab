import numpy as np
import pytest

from cliffordstack.balancing import StackConfig
from cliffordstack.surface import SurfaceAtlas


@pytest.fixture(scope="session")
def atlas_2116():
    return SurfaceAtlas(StackConfig(N=2, k=1, l=1, m=6))


@pytest.fixture(scope="session")
def atlas_3126():
    return SurfaceAtlas(StackConfig(N=3, k=1, l=2, m=6))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
