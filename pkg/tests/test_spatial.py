import numpy as np
import pytest

from cloudinst.spatial import (
    ball_query,
    brute_force_query,
    build_index,
    radius_squared,
)


def test_single_point_index():
    idx = build_index(np.array([[1.0, 2.0, 3.0]], dtype=np.float32), 0.03)
    assert idx.n_points == 1
    assert idx.n_cells == 1
    ((key, members),) = idx.cells.items()
    assert members.tolist() == [0]


def test_far_points_land_in_distinct_cells():
    coords = np.array([[0, 0, 0], [10, 0, 0]], dtype=np.float32)
    idx = build_index(coords, 0.03)
    assert idx.n_cells == 2


def test_every_point_in_exactly_one_cell():
    rng = np.random.default_rng(0)
    coords = rng.uniform(0, 2, (10_000, 3)).astype(np.float32)
    idx = build_index(coords, 0.05)
    seen = np.concatenate([m for m in idx.cells.values()])
    assert seen.size == 10_000
    assert np.array_equal(np.sort(seen), np.arange(10_000))


def test_isolated_point_returns_itself():
    coords = np.array([[0, 0, 0], [5, 5, 5]], dtype=np.float32)
    idx = build_index(coords, 0.03)
    assert ball_query(idx, 0, 0.03).tolist() == [0]


def test_collinear_chain_geometry():
    coords = np.array([[0, 0, 0], [0.02, 0, 0], [0.04, 0, 0]], dtype=np.float32)
    idx = build_index(coords, 0.03)
    assert ball_query(idx, 1, 0.03).tolist() == [0, 1, 2]
    assert ball_query(idx, 0, 0.03).tolist() == [0, 1]


def test_exact_radius_distance_excluded():
    r = 0.03
    coords = np.array([[0, 0, 0], [np.float32(r), 0, 0]], dtype=np.float32)
    d2 = (coords[1, 0] - coords[0, 0]) ** 2
    assert d2 == radius_squared(r)  # exactly on the boundary
    idx = build_index(coords, r)
    assert ball_query(idx, 0, r).tolist() == [0]
    assert brute_force_query(coords, 0, r).tolist() == [0]


def test_grid_matches_brute_force_fuzz():
    rng = np.random.default_rng(1)
    coords = rng.uniform(0, 1, (5000, 3)).astype(np.float32)
    idx = build_index(coords, 0.05)
    for center in rng.integers(0, 5000, 500):
        a = ball_query(idx, int(center), 0.05)
        b = brute_force_query(coords, int(center), 0.05)
        assert np.array_equal(a, b)


def test_query_invariant_under_permutation():
    rng = np.random.default_rng(2)
    coords = rng.uniform(0, 0.3, (400, 3)).astype(np.float32)
    perm = rng.permutation(400)
    idx_a = build_index(coords, 0.05)
    idx_b = build_index(coords[perm], 0.05)
    inv = np.empty(400, dtype=np.int64)
    inv[perm] = np.arange(400)
    for center in range(0, 400, 37):
        a = ball_query(idx_a, center, 0.05)
        b = ball_query(idx_b, int(inv[center]), 0.05)
        assert np.array_equal(a, np.sort(perm[b]))


def test_build_index_validation():
    with pytest.raises(ValueError, match="positive"):
        build_index(np.zeros((1, 3), dtype=np.float32), 0.0)
    with pytest.raises(ValueError, match="non-finite"):
        build_index(np.array([[np.nan, 0, 0]], dtype=np.float32), 0.1)
    with pytest.raises(ValueError, match="shape"):
        build_index(np.zeros((3, 2), dtype=np.float32), 0.1)


def test_radius_mismatch_rejected():
    idx = build_index(np.zeros((1, 3), dtype=np.float32), 0.03)
    with pytest.raises(ValueError, match="does not match"):
        ball_query(idx, 0, 0.05)


def test_empty_index_is_valid():
    idx = build_index(np.zeros((0, 3), dtype=np.float32), 0.03)
    assert idx.n_points == 0
    assert idx.n_cells == 0
    assert idx.cells == {}


def test_center_index_bounds():
    idx = build_index(np.zeros((2, 3), dtype=np.float32), 0.03)
    with pytest.raises(IndexError):
        ball_query(idx, 5, 0.03)
    with pytest.raises(IndexError):
        brute_force_query(np.zeros((2, 3), dtype=np.float32), -1, 0.03)


def test_float64_input_cast_consistently():
    rng = np.random.default_rng(3)
    coords64 = rng.uniform(0, 1, (1000, 3))
    idx = build_index(coords64, 0.06)
    for center in (0, 17, 999):
        a = ball_query(idx, center, 0.06)
        b = brute_force_query(coords64, center, 0.06)
        assert np.array_equal(a, b)
