import numpy as np
import pytest

from cloudinst.clustering import (
    ClusterParams,
    cluster_dual_set,
    cluster_single_set,
    connected_components_oracle,
)
from cloudinst.core import Source
from cloudinst.losses import offset_targets

from conftest import random_cluster_inputs, two_object_scene


def clusters_as_sets(clusters):
    return {(c.class_id, c.source, tuple(c.point_idx.tolist())) for c in clusters}


def test_two_close_same_label_points_form_one_cluster():
    coords = np.array([[0, 0, 0], [0.02, 0, 0]], dtype=np.float32)
    labels = np.array([1, 1], dtype=np.int32)
    out = cluster_single_set(coords, labels, set(), ClusterParams(0.03, 1), Source.ORIGINAL)
    assert len(out) == 1
    assert out[0].point_idx.tolist() == [0, 1]
    assert out[0].class_id == 1
    assert out[0].source is Source.ORIGINAL


def test_different_labels_never_group():
    coords = np.array([[0, 0, 0], [0.02, 0, 0]], dtype=np.float32)
    labels = np.array([1, 2], dtype=np.int32)
    # singletons survive only above the size threshold; at min_points=2 none do
    out = cluster_single_set(coords, labels, set(), ClusterParams(0.03, 2), Source.ORIGINAL)
    assert out == []
    # and no size-2 cluster exists at any threshold
    out = cluster_single_set(coords, labels, set(), ClusterParams(0.03, 1), Source.ORIGINAL)
    assert all(c.size != 2 for c in out)


def test_bfs_transitivity_joins_chain():
    coords = np.array([[0, 0, 0], [0.025, 0, 0], [0.05, 0, 0]], dtype=np.float32)
    labels = np.ones(3, dtype=np.int32)
    out = cluster_single_set(coords, labels, set(), ClusterParams(0.03, 1), Source.ORIGINAL)
    assert len(out) == 1
    assert out[0].point_idx.tolist() == [0, 1, 2]


def test_stuff_and_unlabeled_points_never_cluster():
    coords = np.zeros((4, 3), dtype=np.float32)
    labels = np.array([0, 0, -1, -1], dtype=np.int32)
    out = cluster_single_set(coords, labels, {0}, ClusterParams(0.03, 1), Source.ORIGINAL)
    assert out == []


def test_size_filter_is_strict():
    # a 50-point cluster is discarded when min_points is 50
    coords = np.zeros((50, 3), dtype=np.float32)
    coords[:, 0] = np.arange(50) * 0.001
    labels = np.ones(50, dtype=np.int32)
    assert cluster_single_set(coords, labels, set(), ClusterParams(0.03, 50), Source.ORIGINAL) == []
    out = cluster_single_set(coords, labels, set(), ClusterParams(0.03, 49), Source.ORIGINAL)
    assert len(out) == 1


def test_oracle_empty_and_all_stuff():
    empty = np.zeros((0, 3), dtype=np.float32)
    assert connected_components_oracle(empty, np.zeros(0, np.int32), {0}, ClusterParams()) == []
    coords = np.zeros((5, 3), dtype=np.float32)
    labels = np.zeros(5, dtype=np.int32)
    assert connected_components_oracle(coords, labels, {0}, ClusterParams(0.03, 1)) == []


@pytest.mark.parametrize("seed", range(30))
def test_grid_equals_oracle_fuzz(seed):
    coords, labels = random_cluster_inputs(seed)
    for radius in (0.02, 0.05):
        for min_points in (1, 4):
            params = ClusterParams(radius=radius, min_points=min_points)
            got = cluster_single_set(coords, labels, {0}, params, Source.ORIGINAL)
            want = connected_components_oracle(coords, labels, {0}, params)
            assert clusters_as_sets(got) == clusters_as_sets(want)


def test_output_canonical_order_and_invariants():
    coords, labels = random_cluster_inputs(99, n_max=250)
    params = ClusterParams(radius=0.05, min_points=2)
    out = cluster_single_set(coords, labels, {0}, params, Source.ORIGINAL)
    mins = [c.min_index for c in out]
    assert mins == sorted(mins)
    seen = set()
    for c in out:
        members = c.point_idx.tolist()
        assert members == sorted(members)
        assert not (set(members) & seen)
        seen |= set(members)
        assert np.all(labels[c.point_idx] == c.class_id)
        assert c.class_id != 0 and c.class_id != -1


def test_permutation_invariance():
    coords, labels = random_cluster_inputs(7, n_max=200)
    params = ClusterParams(radius=0.05, min_points=2)
    base = cluster_single_set(coords, labels, {0}, params, Source.ORIGINAL)
    rng = np.random.default_rng(0)
    perm = rng.permutation(coords.shape[0])
    permuted = cluster_single_set(coords[perm], labels[perm], {0}, params, Source.ORIGINAL)
    remapped = {
        (c.class_id, tuple(sorted(perm[c.point_idx].tolist()))) for c in permuted
    }
    assert remapped == {(c.class_id, tuple(c.point_idx.tolist())) for c in base}


def test_min_points_monotonicity():
    coords, labels = random_cluster_inputs(11, n_max=300)
    counts = []
    for mp in (1, 2, 5, 10, 20):
        out = cluster_single_set(coords, labels, {0}, ClusterParams(0.05, mp), Source.ORIGINAL)
        counts.append(len(out))
    assert counts == sorted(counts, reverse=True)


def test_zero_offsets_doubles_clusters(simple_scene, zero_offsets):
    params = ClusterParams(radius=0.03, min_points=1)
    single = cluster_single_set(
        simple_scene.coords, simple_scene.sem_labels, simple_scene.stuff_classes,
        params, Source.ORIGINAL,
    )
    dual = cluster_dual_set(simple_scene, zero_offsets, params)
    assert len(dual) == 2 * len(single)
    p = [c for c in dual if c.source is Source.ORIGINAL]
    q = [c for c in dual if c.source is Source.SHIFTED]
    assert len(p) == len(q) == len(single)
    for cp, cq in zip(p, q):
        assert np.array_equal(cp.point_idx, cq.point_idx)
        assert cp.class_id == cq.class_id


def test_adjacent_objects_merge_in_p_separate_in_q():
    # two same-class objects 0.02 m apart: original coordinates merge them,
    # shifted coordinates pull each onto its own centroid
    scene = two_object_scene(gap=0.02, n_per_object=64, spacing=0.01)
    offsets = offset_targets(scene)
    params = ClusterParams(radius=0.03, min_points=10)
    p = cluster_single_set(
        scene.coords, scene.sem_labels, scene.stuff_classes, params, Source.ORIGINAL
    )
    q = cluster_single_set(
        np.asarray(scene.coords, dtype=np.float64) + offsets.offsets,
        scene.sem_labels, scene.stuff_classes, params, Source.SHIFTED,
    )
    assert len(p) == 1 and p[0].size == scene.n_points
    assert len(q) == 2
    dual = cluster_dual_set(scene, offsets, params)
    assert len(dual) == len(p) + len(q)


def test_dual_set_thread_invariance(simple_scene, zero_offsets):
    params = ClusterParams(radius=0.03, min_points=1)
    serial = cluster_dual_set(simple_scene, zero_offsets, params, max_workers=1)
    threaded = cluster_dual_set(simple_scene, zero_offsets, params, max_workers=2)
    assert clusters_as_sets(serial) == clusters_as_sets(threaded)
    assert [c.source for c in serial] == [c.source for c in threaded]


def test_length_mismatch_rejected():
    with pytest.raises(ValueError, match="labels"):
        cluster_single_set(
            np.zeros((3, 3), dtype=np.float32), np.zeros(2, np.int32), set(),
            ClusterParams(), Source.ORIGINAL,
        )


def test_params_validation():
    with pytest.raises(ValueError):
        ClusterParams(radius=0.0)
    with pytest.raises(ValueError):
        ClusterParams(min_points=0)
