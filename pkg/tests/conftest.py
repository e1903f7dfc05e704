import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Make repo root importable when pytest runs from anywhere.
REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT))

os.environ.setdefault("HBLAB_PROGRESS", "0")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def complex_normal():
    return crandn
