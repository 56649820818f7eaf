import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wcmdp import build_counterexample


@pytest.fixture(scope="session")
def counterexample_03():
    return build_counterexample(0.3)


@pytest.fixture(scope="session")
def counterexample_05():
    return build_counterexample(0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
