"""Test configuration and fixtures."""

import numpy as np
import pytest

from hsim_dml.dataio import HierarchySpec, generate_hierarchical
from hsim_dml.losses import EmbeddingBatch


@pytest.fixture
def rng():
    """Seeded generator for random test instances."""
    return np.random.default_rng(20240611)


@pytest.fixture
def small_spec():
    """Four classes in two superclasses, small enough for end-to-end runs."""
    return HierarchySpec(superclasses=2, subclasses_per_super=2, samples_per_class=12, dim=8)


@pytest.fixture
def small_dataset(small_spec):
    return generate_hierarchical(small_spec, seed=3)


@pytest.fixture
def tiny_config(tmp_path):
    """Experiment configuration that trains in well under a second."""
    return {
        "name": "tiny",
        "seed": 7,
        "dataset": {"superclasses": 2, "subclasses_per_super": 2, "samples_per_class": 12, "dim": 8},
        "noise": {"ratio": 0.2},
        "train": {
            "epochs": 2,
            "classes_per_batch": 2,
            "samples_per_class": 3,
            "hidden_widths": [16],
            "output_dim": 8,
            "lr": 0.01,
        },
        "eval": {"k_values": [1, 2], "dump_queries": [0, 1], "dump_top_k": 2},
        "output_dir": str(tmp_path / "run"),
    }


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    """Point tool and HTTP runs at a temporary output root."""
    root = tmp_path / "runs"
    monkeypatch.setenv("HSIM_OUTPUT_ROOT", str(root))
    return root


def make_batch(rng, n_classes=3, per_class=2, dim=4, with_augs=True, scale=1.0):
    """Random batch; with augmentations, the first sample of every class gets one view."""
    labels = np.repeat(np.arange(n_classes), per_class)
    n = labels.size
    z = rng.normal(0.0, scale, size=(n, dim))
    parents = np.full(n, -1)
    if with_augs:
        anchors = np.arange(0, n, per_class)
        z = np.concatenate([z, z[anchors] + rng.normal(0.0, 0.3 * scale, size=(anchors.size, dim))])
        labels = np.concatenate([labels, labels[anchors]])
        parents = np.concatenate([parents, anchors])
    return EmbeddingBatch(z, labels.astype(np.int64), parents.astype(np.int64))


@pytest.fixture
def batch_factory():
    """Factory for random embedding batches."""
    return make_batch
