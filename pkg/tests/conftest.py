import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from spikekern.sparse import CsrMatrix  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _sequential_kernels():
    from spikekern.sparse import set_threads

    set_threads(1)
    yield
    set_threads(1)
