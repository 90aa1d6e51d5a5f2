from pathlib import Path

import numpy as np
import pytest

from mdlsae.core_math import make_rng

MNIST_DIR = Path(__file__).resolve().parents[1] / "data" / "mnist"


@pytest.fixture
def two_direction_data():
    """1000 + 500 samples from two fixed orthogonal directions, positive weights."""
    rng = make_rng(7)
    dirs = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)

    def draw(n):
        return rng.uniform(0.1, 1.0, size=(n, 2)) @ dirs

    return draw(1000), draw(500)


@pytest.fixture(scope="session")
def mnist_dir():
    if not (MNIST_DIR / "train-images-idx3-ubyte.gz").exists():
        pytest.fail(f"MNIST IDX files missing from {MNIST_DIR}")
    return MNIST_DIR
