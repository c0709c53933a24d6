import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gfss import _kernels
from gfss.core import ClassPartition, FeatureMap
from gfss.inference import GfssTask


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # keep jit compilation out of the timed acceptance criteria
    _kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_prob_rows(rng, n, k):
    """Dirichlet-ish simplex rows via normalized exponentials."""
    raw = rng.exponential(size=(n, k))
    return raw / raw.sum(axis=1, keepdims=True)


def tiny_task(rng, d=6, n_base=2, n_novel=2, grid=(3, 4), shots=2):
    """Hand-rolled miniature episode, independent of the generator."""
    part = ClassPartition(n_base=n_base, n_novel=n_novel)
    n = grid[0] * grid[1]
    support = []
    for s in range(shots):
        feats = FeatureMap(rng.normal(size=(n, d)).astype(np.float32), *grid)
        mask = np.zeros(n, dtype=np.uint8)
        for c in range(n_novel):
            mask[(s + c) % n] = part.novel_start + c
        support.append((feats, mask))
    query = FeatureMap(rng.normal(size=(n, d)).astype(np.float32), *grid)
    labels = rng.integers(0, part.n_classes, size=n).astype(np.uint8)
    return GfssTask(support=tuple(support), query=query, partition=part, query_labels=labels)
