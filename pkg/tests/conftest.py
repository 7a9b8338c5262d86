import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from torsmink.geometry import box, regular_polygon  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def square():
    return box(-1.0, 1.0, -1.0, 1.0)


@pytest.fixture
def hexagon():
    return regular_polygon(6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
