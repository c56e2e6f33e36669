import numpy as np
import pytest

from revseg.dataio import generate_synthetic


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory):
    """Small deterministic corpus shared by read-only tests: 8 images,
    64x64, K=3, seed 7 (6 train / 1 val / 1 test)."""
    root = tmp_path_factory.mktemp("corpus")
    generate_synthetic(seed=7, count=8, size=64, num_classes=3, out_dir=str(root))
    return str(root)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
