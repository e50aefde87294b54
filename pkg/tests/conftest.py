"""Shared fixtures: tiny hand-checkable graphs and a small synthetic dataset."""

import numpy as np
import pytest

from core.graph import LabelVector, build_graph
from core.synth import SynthSpec, generate_labeled_graph


def random_graph(n, p, seed):
    """Erdos-Renyi style symmetric graph; used where a brute-force oracle is compared."""
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return build_graph(np.argwhere(upper), n, symmetrize=True)


@pytest.fixture
def path3():
    return build_graph([(0, 1), (1, 2)], 3, symmetrize=True)


@pytest.fixture
def triangle():
    return build_graph([(0, 1), (1, 2), (0, 2)], 3, symmetrize=True)


@pytest.fixture
def star():
    """Center 0 with leaves 1..4."""
    return build_graph([(0, v) for v in range(1, 5)], 5, symmetrize=True)


@pytest.fixture
def star_labels():
    # leaves 1, 2 share class 0 with the center; 3, 4 are class 1
    return LabelVector.fully_known([0, 0, 0, 1, 1])


@pytest.fixture(scope="session")
def small_dataset():
    spec = SynthSpec(
        num_nodes=400,
        num_classes=2,
        target_ratio=0.6,
        mean_degree=6.0,
        feature_dim=8,
        class_separation=3.0,
        seed=7,
    )
    return generate_labeled_graph(spec)
