"""Label-constrained radius clustering on one coordinate set, and the
dual-set driver that pools clusters found in original and shifted space.

A cluster is a maximal group of same-label points connected by hops of
length strictly less than the radius; stuff-class and unlabeled points never
participate.  Groups at or below the minimum point count are discarded.

The production path labels connected components incrementally over grid
candidate pairs, with two shortcuts that matter when shifted points pile up
around instance centroids: same-label points sharing a fine sub-cell (side
r/sqrt(3), so provably within r of each other) are pre-merged in one pass,
and coarse cell pairs whose points already share one component are skipped
without enumerating their pairs.  The testing oracle below does the same
thing the slow, obvious way (all O(N^2) pairs through union-find), so the
two can be compared exactly.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .core import Cluster, OffsetField, Scene, Source, check_offsets, shifted_coords
from .spatial import GridIndex, radius_squared, squared_distances

# enumerate each unordered cell pair once: the zero offset plus half of the
# non-zero offsets in {-1, 0, 1}^3
_COARSE_DELTAS = [(0, 0, 0)] + [
    (a, b, c)
    for a in (-1, 0, 1)
    for b in (-1, 0, 1)
    for c in (-1, 0, 1)
    if (a, b, c) > (0, 0, 0)
]

# sub-cell side such that any two points sharing a sub-cell are strictly
# within the clustering radius (diagonal = r / 1.0001)
_FINE_FACTOR = 1.0 / (math.sqrt(3.0) * 1.0001)

_MAX_CHUNK = 4_000_000
_MERGE_EVERY = 150_000  # accumulated edges that trigger a component merge


@dataclass(frozen=True)
class ClusterParams:
    """Clustering radius (meters) and minimum cluster point count.

    Clusters are kept only when their size is strictly greater than
    ``min_points``.
    """

    radius: float = 0.03
    min_points: int = 50

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius <= 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.min_points < 1:
            raise ValueError(f"min_points must be >= 1, got {self.min_points}")


def _stuff_array(stuff_classes) -> np.ndarray:
    return np.fromiter(sorted(int(c) for c in stuff_classes), dtype=np.int32)


def _active_mask(sem_labels: np.ndarray, stuff_classes) -> np.ndarray:
    active = sem_labels >= 0
    stuff = _stuff_array(stuff_classes)
    if stuff.size:
        active &= ~np.isin(sem_labels, stuff)
    return active


def _merge_edges(comp: np.ndarray, edges_a: np.ndarray, edges_b: np.ndarray) -> np.ndarray:
    """Fold a batch of edges into the running component labels."""
    n = comp.size
    graph = sp.coo_matrix(
        (np.ones(edges_a.size, dtype=np.int8), (comp[edges_a], comp[edges_b])),
        shape=(n, n),
    )
    labels = connected_components(graph, directed=False)[1]
    return labels[comp]


def _clusters_from_components(
    comp: np.ndarray,
    global_idx: np.ndarray,
    sem_labels: np.ndarray,
    min_points: int,
    source: Source,
) -> list[Cluster]:
    """Group points by component id, size-filter, and order canonically."""
    if comp.size == 0:
        return []
    counts = np.bincount(comp)
    keep = counts[comp] > min_points
    sel = np.flatnonzero(keep)
    if sel.size == 0:
        return []
    order = sel[np.argsort(comp[sel], kind="stable")]
    bounds = np.flatnonzero(np.diff(comp[order], prepend=-1))
    bounds = np.append(bounds, order.size)
    clusters = []
    for k in range(bounds.size - 1):
        members = global_idx[order[bounds[k] : bounds[k + 1]]]
        clusters.append(
            Cluster(
                point_idx=members,
                class_id=int(sem_labels[members[0]]),
                source=source,
            )
        )
    clusters.sort(key=lambda c: c.min_index)
    return clusters


def _fine_chain_edges(
    coords: np.ndarray, labels: np.ndarray, radius: float
) -> tuple[np.ndarray, np.ndarray]:
    """Edges linking consecutive same-label points that share a fine sub-cell.

    Every such pair is within radius by construction, so these unions are
    always sound; they make dense piles (shifted points around a centroid)
    one component before any pair enumeration happens.
    """
    fine = GridIndex(coords, radius * _FINE_FACTOR)
    order = np.lexsort((labels, fine._point_codes))
    codes_s = fine._point_codes[order]
    labels_s = labels[order]
    link = (codes_s[1:] == codes_s[:-1]) & (labels_s[1:] == labels_s[:-1])
    return order[:-1][link], order[1:][link]


def cluster_single_set(
    coords: np.ndarray,
    sem_labels: np.ndarray,
    stuff_classes,
    params: ClusterParams,
    source: Source,
    timings: dict | None = None,
) -> list[Cluster]:
    """Cluster one coordinate set (original or shifted).

    Output clusters are disjoint, label-homogeneous, sorted by their minimum
    member index, with members sorted ascending; the result is independent
    of input point order up to this canonical form.
    """
    coords = np.asarray(coords)
    sem_labels = np.asarray(sem_labels, dtype=np.int32)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValueError("coords must have shape (n_points, 3)")
    if sem_labels.shape != (coords.shape[0],):
        raise ValueError(
            f"got {coords.shape[0]} coordinates but {sem_labels.shape[0]} labels"
        )

    active_idx = np.flatnonzero(_active_mask(sem_labels, stuff_classes))
    n_active = active_idx.size
    t_bq = 0.0
    t_cl = 0.0

    t0 = time.perf_counter()
    index = GridIndex(coords[active_idx], params.radius)
    labels_a = sem_labels[active_idx]
    r2 = radius_squared(params.radius)
    chain_a, chain_b = _fine_chain_edges(index.coords, labels_a, params.radius)
    t_bq += time.perf_counter() - t0

    t0 = time.perf_counter()
    comp = np.arange(n_active, dtype=np.int64)
    if chain_a.size:
        comp = _merge_edges(comp, chain_a, chain_b)
    t_cl += time.perf_counter() - t0

    starts = index._cell_starts
    counts = index._cell_counts
    order = index._order
    pts = index.coords
    for delta in _COARSE_DELTAS:
        t0 = time.perf_counter()
        same_cell = delta == (0, 0, 0)
        if same_cell:
            va = vb = np.flatnonzero(counts > 1)
        else:
            va, vb = index.neighbor_cell_pairs(delta)
        if va.size == 0:
            t_bq += time.perf_counter() - t0
            continue
        # skip cell pairs already inside a single shared component; re-prune
        # the remaining pairs after every merge so dense regions stop paying
        # for enumeration as soon as they become one component
        def prune(va, vb):
            comp_sorted = comp[order]
            cmin = np.minimum.reduceat(comp_sorted, starts)
            cmax = np.maximum.reduceat(comp_sorted, starts)
            mixed = ~(
                (cmin[va] == cmax[va]) & (cmin[vb] == cmax[vb]) & (cmin[va] == cmin[vb])
            )
            return va[mixed], vb[mixed]

        va, vb = prune(va, vb)
        t_bq += time.perf_counter() - t0
        pend_a: list[np.ndarray] = []
        pend_b: list[np.ndarray] = []
        pending = 0
        while va.size:
            t0 = time.perf_counter()
            pair_counts = counts[va] * counts[vb]
            cum = np.concatenate(([0], np.cumsum(pair_counts)))
            hi = int(np.searchsorted(cum, _MAX_CHUNK, side="right")) - 1
            hi = min(max(hi, 1), va.size)
            block = int(cum[hi])
            cnt = pair_counts[:hi]
            q = np.arange(block, dtype=np.int64) - np.repeat(cum[:hi], cnt)
            sb = np.repeat(counts[vb[:hi]], cnt)
            i = order[np.repeat(starts[va[:hi]], cnt) + q // sb]
            j = order[np.repeat(starts[vb[:hi]], cnt) + q % sb]
            va, vb = va[hi:], vb[hi:]
            if same_cell:
                keep = i < j
                i, j = i[keep], j[keep]
            m = labels_a[i] == labels_a[j]
            i, j = i[m], j[m]
            m = comp[i] != comp[j]
            i, j = i[m], j[m]
            if i.size:
                d2 = squared_distances(pts[i], pts[j])
                close = d2 < r2
                if close.any():
                    pend_a.append(i[close])
                    pend_b.append(j[close])
                    pending += int(close.sum())
            t_bq += time.perf_counter() - t0
            if pending and (pending >= _MERGE_EVERY or not va.size):
                t0 = time.perf_counter()
                comp = _merge_edges(
                    comp, np.concatenate(pend_a), np.concatenate(pend_b)
                )
                pend_a.clear()
                pend_b.clear()
                pending = 0
                t_cl += time.perf_counter() - t0
                t0 = time.perf_counter()
                if va.size:
                    va, vb = prune(va, vb)
                t_bq += time.perf_counter() - t0

    t0 = time.perf_counter()
    clusters = _clusters_from_components(
        comp, active_idx, sem_labels, params.min_points, source
    )
    t_cl += time.perf_counter() - t0
    if timings is not None:
        timings["ball_query"] = timings.get("ball_query", 0.0) + t_bq
        timings["components"] = timings.get("components", 0.0) + t_cl
    return clusters


class _UnionFind:
    """Plain union-find with path compression, for the testing oracle."""

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def connected_components_oracle(
    coords: np.ndarray,
    sem_labels: np.ndarray,
    stuff_classes,
    params: ClusterParams,
    source: Source = Source.ORIGINAL,
) -> list[Cluster]:
    """Reference clustering: union-find over every point pair.

    Same contract as cluster_single_set, O(N^2); exists so the grid path can
    be checked exactly against an independent implementation.
    """
    coords = np.asarray(coords, dtype=np.float32)
    sem_labels = np.asarray(sem_labels, dtype=np.int32)
    if sem_labels.shape != (coords.shape[0],):
        raise ValueError(
            f"got {coords.shape[0]} coordinates but {sem_labels.shape[0]} labels"
        )
    active_idx = np.flatnonzero(_active_mask(sem_labels, stuff_classes))
    n = active_idx.size
    pts = coords[active_idx]
    labels_a = sem_labels[active_idx]
    r2 = radius_squared(params.radius)

    uf = _UnionFind(n)
    block = 512
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        d2 = squared_distances(pts[lo:hi, None, :], pts[None, :, :])
        mask = (d2 < r2) & (labels_a[lo:hi, None] == labels_a[None, :])
        rows, cols = np.nonzero(mask)
        rows = rows + lo
        upper = rows < cols
        for a, b in zip(rows[upper].tolist(), cols[upper].tolist()):
            uf.union(a, b)

    groups: dict[int, list[int]] = {}
    for a in range(n):
        groups.setdefault(uf.find(a), []).append(a)
    clusters = []
    for members in groups.values():
        if len(members) <= params.min_points:
            continue
        global_members = active_idx[np.array(members, dtype=np.int64)]
        clusters.append(
            Cluster(
                point_idx=np.sort(global_members),
                class_id=int(sem_labels[global_members[0]]),
                source=source,
            )
        )
    clusters.sort(key=lambda c: c.min_index)
    return clusters


def cluster_dual_set(
    scene: Scene,
    offsets: OffsetField,
    params: ClusterParams,
    max_workers: int = 1,
    timings: dict | None = None,
) -> list[Cluster]:
    """Cluster both coordinate sets and pool the results.

    Runs the same algorithm on the original coordinates and on the
    offset-shifted ones; the two cluster lists are concatenated without
    deduplication (overlaps are resolved later by scored NMS).
    """
    check_offsets(scene, offsets)
    q = shifted_coords(scene, offsets)
    t_p: dict = {}
    t_q: dict = {}

    def run_p():
        return cluster_single_set(
            scene.coords, scene.sem_labels, scene.stuff_classes, params,
            Source.ORIGINAL, timings=t_p,
        )

    def run_q():
        return cluster_single_set(
            q, scene.sem_labels, scene.stuff_classes, params,
            Source.SHIFTED, timings=t_q,
        )

    if max_workers != 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            fut_p = pool.submit(run_p)
            fut_q = pool.submit(run_q)
            clusters_p = fut_p.result()
            clusters_q = fut_q.result()
    else:
        clusters_p = run_p()
        clusters_q = run_q()

    if timings is not None:
        timings["bq_p"] = t_p.get("ball_query", 0.0)
        timings["cl_p"] = t_p.get("components", 0.0)
        timings["bq_q"] = t_q.get("ball_query", 0.0)
        timings["cl_q"] = t_q.get("components", 0.0)
    return clusters_p + clusters_q
