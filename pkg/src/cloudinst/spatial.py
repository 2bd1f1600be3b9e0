"""Uniform-grid spatial index for exact fixed-radius neighbor queries.

For queries the cell size equals the query radius, so a ball query only has
to look at the 27 cells around the center.  Distance tests are done on
float32 values with a strict ``<`` against r*r, written as the same
expression everywhere (including the brute-force oracle) so the two routes
agree bit-for-bit.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

_KEY_BITS = 21  # per-axis cell key budget inside a packed int64
_KEY_LIMIT = (1 << _KEY_BITS) - 2

_QUERY_DELTAS = np.array(
    [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)],
    dtype=np.int64,
)


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Componentwise float32 squared distance, identical in every caller."""
    dx = a[..., 0] - b[..., 0]
    dy = a[..., 1] - b[..., 1]
    dz = a[..., 2] - b[..., 2]
    return dx * dx + dy * dy + dz * dz


def radius_squared(radius: float) -> np.float32:
    r = np.float32(radius)
    return r * r


def _pack(keys: np.ndarray) -> np.ndarray:
    # bias by +1 so neighbor lookups at key -1 stay valid (and unmatched)
    return (
        ((keys[..., 0] + 1) << (2 * _KEY_BITS))
        | ((keys[..., 1] + 1) << _KEY_BITS)
        | (keys[..., 2] + 1)
    )


class GridIndex:
    """Immutable uniform grid over a fixed coordinate set.

    Construction is O(N); every point lands in exactly one cell with key
    floor((coord - origin) / cell_size).
    """

    def __init__(self, coords: np.ndarray, cell_size: float):
        if not np.isfinite(cell_size) or cell_size <= 0.0:
            raise ValueError(f"cell size must be positive and finite, got {cell_size}")
        coords = np.asarray(coords, dtype=np.float32)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError("coords must have shape (n_points, 3)")
        if coords.size and not np.all(np.isfinite(coords)):
            idx = int(np.flatnonzero(~np.isfinite(coords).all(axis=1))[0])
            raise ValueError(f"non-finite coordinate at point {idx}")
        coords = np.ascontiguousarray(coords)
        coords.setflags(write=False)

        self.cell_size = float(cell_size)
        self.coords = coords
        n = coords.shape[0]
        if n:
            origin = coords.min(axis=0)
        else:
            origin = np.zeros(3, dtype=np.float32)
        origin.setflags(write=False)
        self.origin = origin

        if n:
            keys = np.floor(
                (coords.astype(np.float64) - origin.astype(np.float64)) / self.cell_size
            ).astype(np.int64)
            if keys.max() > _KEY_LIMIT:
                raise ValueError(
                    "coordinate span too large for this cell size "
                    f"(more than {_KEY_LIMIT} cells on one axis)"
                )
        else:
            keys = np.zeros((0, 3), dtype=np.int64)
        self._keys = keys
        codes = _pack(keys)
        self._point_codes = codes
        order = np.argsort(codes, kind="stable")
        if n:
            uniq, starts, counts = np.unique(
                codes[order], return_index=True, return_counts=True
            )
        else:
            uniq = starts = counts = np.empty(0, dtype=np.int64)
        self._order = order
        self._cell_codes = uniq
        self._cell_starts = starts.astype(np.int64)
        self._cell_counts = counts.astype(np.int64)
        self._cell_keys = keys[order[self._cell_starts]] if n else keys

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    @property
    def n_cells(self) -> int:
        return self._cell_codes.size

    @cached_property
    def cells(self) -> dict[tuple[int, int, int], np.ndarray]:
        """Cell key -> sorted member indices (built on first access)."""
        out = {}
        for c in range(self.n_cells):
            lo = self._cell_starts[c]
            members = np.sort(self._order[lo : lo + self._cell_counts[c]])
            members.setflags(write=False)
            key = self._cell_keys[c]
            out[(int(key[0]), int(key[1]), int(key[2]))] = members
        return out

    def _cell_lookup(self, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map packed codes to (start, count) pairs; missing cells get count 0."""
        if self.n_cells == 0:
            zero = np.zeros(codes.shape, dtype=np.int64)
            return zero, zero.copy()
        pos = np.searchsorted(self._cell_codes, codes)
        pos_c = np.minimum(pos, self.n_cells - 1)
        hit = self._cell_codes[pos_c] == codes
        starts = np.where(hit, self._cell_starts[pos_c], 0)
        counts = np.where(hit, self._cell_counts[pos_c], 0)
        return starts, counts

    def neighbor_cell_pairs(self, delta: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray]:
        """Positions (a, b) of existing cell pairs with key_b = key_a + delta."""
        if self.n_cells == 0:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty.copy()
        codes = _pack(self._cell_keys + np.asarray(delta, dtype=np.int64))
        pos = np.searchsorted(self._cell_codes, codes)
        pos_c = np.minimum(pos, self.n_cells - 1)
        hit = self._cell_codes[pos_c] == codes
        a = np.flatnonzero(hit)
        return a, pos_c[a]


def build_index(coords: np.ndarray, radius: float) -> GridIndex:
    """Index a coordinate set for fixed-radius queries at ``radius``."""
    return GridIndex(coords, radius)


def ball_query(index: GridIndex, center_idx: int, radius: float) -> np.ndarray:
    """All point indices strictly within ``radius`` of the center point.

    Includes the center itself; output sorted ascending.  Only the 27 cells
    around the center are examined, which covers every candidate because the
    cell size equals the radius.
    """
    if radius != index.cell_size:
        raise ValueError(
            f"query radius {radius} does not match index cell size {index.cell_size}"
        )
    if center_idx < 0 or center_idx >= index.n_points:
        raise IndexError(f"center index {center_idx} out of range")
    codes = _pack(index._keys[center_idx][None, :] + _QUERY_DELTAS)
    starts, counts = index._cell_lookup(codes)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    take = np.repeat(starts, counts) + (
        np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
    )
    cand = index._order[take]
    d2 = squared_distances(index.coords[cand], index.coords[center_idx])
    return np.sort(cand[d2 < radius_squared(radius)])


def brute_force_query(coords: np.ndarray, center_idx: int, radius: float) -> np.ndarray:
    """O(N) oracle for ball_query: same predicate, no index."""
    coords = np.asarray(coords, dtype=np.float32)
    if center_idx < 0 or center_idx >= coords.shape[0]:
        raise IndexError(f"center index {center_idx} out of range")
    d2 = squared_distances(coords, coords[center_idx])
    return np.flatnonzero(d2 < radius_squared(radius)).astype(np.int64)
