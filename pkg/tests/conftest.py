import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_refs(rng, N, count=None, hi=255):
    shape = (4 * N + 1,) if count is None else (count, 4 * N + 1)
    return rng.integers(0, hi + 1, size=shape)
