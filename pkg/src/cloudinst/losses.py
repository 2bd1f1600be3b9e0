"""Training-loss kernels for the offset and semantic branches, the combined
total, analytic gradients with a finite-difference checker, and the
point-to-centroid distance histogram.

All reductions accumulate in float64 regardless of input precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import OffsetField, Scene, check_offsets

LOG_EPS = 1e-12  # clamp inside log() for cross entropy
DIR_EPS = 1e-8  # offsets or targets shorter than this skip the direction term


@dataclass(frozen=True)
class LossReport:
    """The four loss terms and their unweighted sum."""

    l_sem: float
    l_offset_reg: float
    l_offset_dir: float
    l_score: float
    total: float
    grad_available: dict = field(
        default_factory=lambda: {
            "l_sem": False,
            "l_offset_reg": True,
            "l_offset_dir": True,
            "l_score": True,
        }
    )


def instance_centroids(scene: Scene) -> np.ndarray:
    """Mean coordinate of each instance, shape (n_instances, 3), float64."""
    m = scene.n_instances
    if m == 0:
        raise ValueError("scene has no instances")
    on_inst = scene.inst_ids >= 0
    ids = scene.inst_ids[on_inst].astype(np.int64)
    pts = scene.coords[on_inst].astype(np.float64)
    sums = np.zeros((m, 3), dtype=np.float64)
    np.add.at(sums, ids, pts)
    counts = np.bincount(ids, minlength=m).astype(np.float64)
    return sums / counts[:, None]


def offset_targets(scene: Scene) -> OffsetField:
    """Ideal offsets: centroid minus position on instances, zero elsewhere."""
    targets = np.zeros((scene.n_points, 3), dtype=np.float64)
    if scene.n_instances:
        centroids = instance_centroids(scene)
        on_inst = scene.inst_ids >= 0
        targets[on_inst] = (
            centroids[scene.inst_ids[on_inst]] - scene.coords[on_inst].astype(np.float64)
        )
    return OffsetField(targets)


def semantic_loss(sem_scores: np.ndarray, gt_labels: np.ndarray) -> float:
    """Mean cross entropy of probability rows against labels.

    Points labeled -1 are excluded from the mean.
    """
    scores = np.asarray(sem_scores, dtype=np.float64)
    labels = np.asarray(gt_labels)
    if scores.ndim != 2 or labels.shape != (scores.shape[0],):
        raise ValueError("sem_scores must be (n, n_classes) with one label per row")
    labeled = np.flatnonzero(labels >= 0)
    if labeled.size == 0:
        raise ValueError("no labeled points")
    p = scores[labeled, labels[labeled]]
    return float(-np.log(np.maximum(p, LOG_EPS)).mean() + 0.0)


def _instance_mask_and_targets(scene: Scene) -> tuple[np.ndarray, np.ndarray]:
    mask = scene.inst_ids >= 0
    if not mask.any():
        raise ValueError("scene has no instance points")
    return mask, offset_targets(scene).offsets


def offset_regression_loss(pred: OffsetField, scene: Scene) -> float:
    """Mean L1 norm of the offset residual over instance points."""
    check_offsets(scene, pred)
    mask, targets = _instance_mask_and_targets(scene)
    res = pred.offsets[mask] - targets[mask]
    return float(np.abs(res).sum(axis=1).mean())


def offset_regression_grad(pred: OffsetField, scene: Scene) -> np.ndarray:
    """d(offset_regression_loss)/d(offsets), shape (n_points, 3).

    Uses the sign subgradient; exact wherever no residual component is zero.
    """
    check_offsets(scene, pred)
    mask, targets = _instance_mask_and_targets(scene)
    grad = np.zeros((scene.n_points, 3), dtype=np.float64)
    grad[mask] = np.sign(pred.offsets[mask] - targets[mask]) / mask.sum()
    return grad


def offset_direction_loss(pred: OffsetField, scene: Scene) -> float:
    """Negative mean cosine between predicted offsets and centroid directions.

    -1 when every offset points straight at its centroid, +1 when opposite.
    Points where either vector is shorter than DIR_EPS contribute 0 (the
    cosine is undefined there), but still count in the mean's denominator.
    """
    check_offsets(scene, pred)
    mask, targets = _instance_mask_and_targets(scene)
    o = pred.offsets[mask]
    t = targets[mask]
    no = np.linalg.norm(o, axis=1)
    nt = np.linalg.norm(t, axis=1)
    valid = (no >= DIR_EPS) & (nt >= DIR_EPS)
    cos = np.zeros(o.shape[0], dtype=np.float64)
    cos[valid] = (o[valid] * t[valid]).sum(axis=1) / (no[valid] * nt[valid])
    return float(-cos.mean())


def offset_direction_grad(pred: OffsetField, scene: Scene) -> np.ndarray:
    """d(offset_direction_loss)/d(offsets), zero on guarded points."""
    check_offsets(scene, pred)
    mask, targets = _instance_mask_and_targets(scene)
    o = pred.offsets[mask]
    t = targets[mask]
    no = np.linalg.norm(o, axis=1)
    nt = np.linalg.norm(t, axis=1)
    valid = (no >= DIR_EPS) & (nt >= DIR_EPS)
    g = np.zeros_like(o)
    ov, tv = o[valid], t[valid]
    nov = no[valid][:, None]
    that = tv / nt[valid][:, None]
    dot = (ov * that).sum(axis=1, keepdims=True)
    g[valid] = -(that / nov - dot * ov / nov**3) / mask.sum()
    grad = np.zeros((scene.n_points, 3), dtype=np.float64)
    grad[mask] = g
    return grad


def total_loss(
    l_sem: float, l_offset_reg: float, l_offset_dir: float, l_score: float
) -> LossReport:
    """Unweighted sum of the four training terms."""
    parts = (l_sem, l_offset_reg, l_offset_dir, l_score)
    if not all(np.isfinite(v) for v in parts):
        raise ValueError(f"non-finite loss term in {parts}")
    return LossReport(
        l_sem=float(l_sem),
        l_offset_reg=float(l_offset_reg),
        l_offset_dir=float(l_offset_dir),
        l_score=float(l_score),
        total=float(l_sem + l_offset_reg + l_offset_dir + l_score),
    )


def gradient_check(func, x0: np.ndarray, step: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``func(x)`` must return ``(value, grad)``.  The relative error of
    component k is |ga - gn| / max(1, |ga|, |gn|); the max over components is
    returned.  Evaluation happens in float64.
    """
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    _, grad = func(x0)
    grad = np.asarray(grad, dtype=np.float64).ravel()
    if grad.shape != x0.shape:
        raise ValueError("gradient shape does not match parameter shape")
    num = np.empty_like(x0)
    for k in range(x0.size):
        xp = x0.copy()
        xp[k] += step
        fp = func(xp)[0]
        xm = x0.copy()
        xm[k] -= step
        fm = func(xm)[0]
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite loss evaluation at component {k}")
        num[k] = (fp - fm) / (2.0 * step)
    denom = np.maximum(1.0, np.maximum(np.abs(grad), np.abs(num)))
    return float((np.abs(grad - num) / denom).max())


def distance_histogram(
    scene: Scene, bin_width: float = 0.1, max_dist: float = 2.0
) -> np.ndarray:
    """Normalized histogram of point-to-centroid distances over instance points.

    Regular bins of ``bin_width`` cover [0, max_dist); everything at or
    beyond ``max_dist`` lands in one overflow bin at the end.  Fractions sum
    to 1.
    """
    if bin_width <= 0 or max_dist <= 0:
        raise ValueError("bin_width and max_dist must be positive")
    mask, targets = _instance_mask_and_targets(scene)
    d = np.linalg.norm(targets[mask], axis=1)
    n_regular = int(np.floor(max_dist / bin_width + 1e-9))
    idx = np.minimum((d / bin_width).astype(np.int64), n_regular)
    counts = np.bincount(idx, minlength=n_regular + 1).astype(np.float64)
    return counts / counts.sum()
