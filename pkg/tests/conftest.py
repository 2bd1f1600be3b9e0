"""Shared scene builders for the test suite."""

import numpy as np
import pytest

from cloudinst.core import OffsetField, Scene


def make_scene(
    coords,
    sem_labels,
    inst_ids,
    n_classes=4,
    stuff_classes=frozenset({0}),
    sem_scores="onehot",
    colors=None,
):
    """Construct a small scene; sem_scores 'onehot' derives scores from labels."""
    coords = np.asarray(coords, dtype=np.float32)
    sem_labels = np.asarray(sem_labels, dtype=np.int32)
    inst_ids = np.asarray(inst_ids, dtype=np.int32)
    n = coords.shape[0]
    if colors is None:
        colors = np.full((n, 3), 200, dtype=np.int64)
    if isinstance(sem_scores, str) and sem_scores == "onehot":
        scores = np.zeros((n, n_classes), dtype=np.float32)
        labeled = sem_labels >= 0
        scores[np.flatnonzero(labeled), sem_labels[labeled]] = 1.0
        unl = ~labeled
        scores[unl] = 1.0 / n_classes
    else:
        scores = sem_scores
    return Scene(
        n_classes=n_classes,
        coords=coords,
        colors=colors,
        sem_labels=sem_labels,
        inst_ids=inst_ids,
        stuff_classes=stuff_classes,
        sem_scores=scores,
    )


def two_object_scene(gap=0.5, n_per_object=60, spacing=0.01, class_a=1, class_b=1, seed=0):
    """Two small dense point blocks along x, separated by ``gap`` (surface gap)."""
    rng = np.random.default_rng(seed)
    side = int(np.ceil(np.sqrt(n_per_object)))
    xs, ys = np.meshgrid(np.arange(side) * spacing, np.arange(side) * spacing)
    base = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)])[:n_per_object]
    base = base + rng.uniform(-1e-4, 1e-4, base.shape)
    width = (side - 1) * spacing
    a = base.copy()
    b = base.copy()
    b[:, 0] += width + gap
    coords = np.concatenate([a, b]).astype(np.float32)
    n = coords.shape[0]
    labels = np.concatenate(
        [np.full(n_per_object, class_a), np.full(n_per_object, class_b)]
    ).astype(np.int32)
    insts = np.concatenate(
        [np.zeros(n_per_object), np.ones(n_per_object)]
    ).astype(np.int32)
    return make_scene(coords, labels, insts)


def random_cluster_inputs(seed, n_max=300, n_classes=3):
    """Random coords/labels for clustering fuzz; label -1 and stuff id 0 included."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, n_max))
    coords = rng.uniform(0, 0.4, (n, 3)).astype(np.float32)
    labels = rng.integers(-1, n_classes, n).astype(np.int32)
    return coords, labels


@pytest.fixture
def simple_scene():
    # two instances of class 1 plus stuff floor points of class 0
    coords = [
        [0.0, 0.0, 0.0], [0.02, 0.0, 0.0], [0.04, 0.0, 0.0],
        [1.0, 0.0, 0.0], [1.02, 0.0, 0.0],
        [0.5, 0.5, 0.0], [0.52, 0.5, 0.0],
    ]
    labels = [1, 1, 1, 1, 1, 0, 0]
    insts = [0, 0, 0, 1, 1, -1, -1]
    return make_scene(coords, labels, insts)


@pytest.fixture
def zero_offsets(simple_scene):
    return OffsetField(np.zeros((simple_scene.n_points, 3)))
