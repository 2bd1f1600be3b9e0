"""Cluster quality scoring.

Three interchangeable scorers rank candidate clusters for NMS:

* ORACLE  — the best mask IoU against ground truth (cheating upper bound),
* SEMPROB — mean semantic probability of the cluster's class over members,
* MODEL   — a small feedforward net (tanh hidden layer, sigmoid output) over
  handcrafted per-cluster descriptors, trained with soft-label BCE.

Soft score targets come from the best IoU through a clamped linear ramp
between a low and a high threshold.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .core import (
    Cluster,
    FormatError,
    GroundTruthInstance,
    OffsetField,
    Scene,
    check_offsets,
)
from .losses import gradient_check

SCORE_EPS = 1e-7  # clamp inside the BCE
SOFT_LOW = 0.25
SOFT_HIGH = 0.75
DESCRIPTOR_DIM = 8


class Scorer(enum.Enum):
    ORACLE = "oracle"
    SEMPROB = "semprob"
    MODEL = "model"


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two sorted, duplicate-free index sets."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.size == 0 and b.size == 0:
        raise ValueError("IoU of two empty sets is undefined")
    inter = np.intersect1d(a, b, assume_unique=True).size
    return inter / (a.size + b.size - inter)


def pairwise_iou(
    masks_a: list[np.ndarray], masks_b: list[np.ndarray], n_points: int
) -> np.ndarray:
    """Dense (len_a, len_b) IoU matrix via sparse incidence multiplication."""
    if not masks_a or not masks_b:
        return np.zeros((len(masks_a), len(masks_b)), dtype=np.float64)

    def incidence(masks):
        idx = np.concatenate(masks)
        ptr = np.concatenate(([0], np.cumsum([m.size for m in masks])))
        data = np.ones(idx.size, dtype=np.float64)
        return sp.csr_matrix((data, idx, ptr), shape=(len(masks), n_points))

    ia = incidence(masks_a)
    ib = incidence(masks_b)
    inter = np.asarray((ia @ ib.T).todense())
    sa = np.array([m.size for m in masks_a], dtype=np.float64)
    sb = np.array([m.size for m in masks_b], dtype=np.float64)
    union = sa[:, None] + sb[None, :] - inter
    return inter / union


def best_iou(cluster: Cluster, gt: list[GroundTruthInstance]) -> float:
    """Largest IoU of the cluster against any ground-truth instance.

    The max runs over every instance regardless of class.
    """
    if not gt:
        raise ValueError("no ground-truth instances")
    return max(iou(cluster.point_idx, g.point_idx) for g in gt)


def best_ious(
    clusters: list[Cluster], gt: list[GroundTruthInstance], n_points: int
) -> np.ndarray:
    """Vectorized best_iou for a cluster list."""
    if not gt:
        raise ValueError("no ground-truth instances")
    if not clusters:
        return np.zeros(0, dtype=np.float64)
    mat = pairwise_iou(
        [c.point_idx for c in clusters], [g.point_idx for g in gt], n_points
    )
    return mat.max(axis=1)


def soft_label(
    iou_val: float, low: float = SOFT_LOW, high: float = SOFT_HIGH
) -> float:
    """Score target from an IoU: 0 below ``low``, 1 above ``high``, linear between."""
    if not 0.0 <= iou_val <= 1.0:
        raise ValueError(f"IoU {iou_val} outside [0, 1]")
    if not low < high:
        raise ValueError("low threshold must be below high threshold")
    if iou_val < low:
        return 0.0
    if iou_val > high:
        return 1.0
    return (iou_val - low) / (high - low)


def soft_labels(
    ious: np.ndarray, low: float = SOFT_LOW, high: float = SOFT_HIGH
) -> np.ndarray:
    ious = np.asarray(ious, dtype=np.float64)
    if ious.size and (ious.min() < 0.0 or ious.max() > 1.0):
        raise ValueError("IoU outside [0, 1]")
    if not low < high:
        raise ValueError("low threshold must be below high threshold")
    return np.clip((ious - low) / (high - low), 0.0, 1.0)


@dataclass(frozen=True)
class ScoreTargets:
    """Per-cluster best IoU plus the derived soft score labels."""

    iou: np.ndarray
    soft: np.ndarray
    low: float = SOFT_LOW
    high: float = SOFT_HIGH

    def __post_init__(self):
        iou_arr = np.asarray(self.iou, dtype=np.float64)
        soft = np.asarray(self.soft, dtype=np.float64)
        if not np.array_equal(soft, soft_labels(iou_arr, self.low, self.high)):
            raise ValueError("soft labels do not match the IoU ramp")
        object.__setattr__(self, "iou", iou_arr)
        object.__setattr__(self, "soft", soft)

    @classmethod
    def from_ious(
        cls, ious: np.ndarray, low: float = SOFT_LOW, high: float = SOFT_HIGH
    ) -> "ScoreTargets":
        ious = np.asarray(ious, dtype=np.float64)
        return cls(iou=ious, soft=soft_labels(ious, low, high), low=low, high=high)


def score_loss(pred_scores: np.ndarray, targets: ScoreTargets) -> float:
    """Mean binary cross entropy between predicted scores and soft labels."""
    s = np.asarray(pred_scores, dtype=np.float64)
    t = targets.soft
    if s.shape != t.shape:
        raise ValueError("score/target length mismatch")
    if s.size == 0:
        raise ValueError("no clusters to score")
    s = np.clip(s, SCORE_EPS, 1.0 - SCORE_EPS)
    return float(-(t * np.log(s) + (1.0 - t) * np.log(1.0 - s)).mean())


def cluster_descriptor(
    cluster: Cluster, scene: Scene, offsets: OffsetField
) -> np.ndarray:
    """Handcrafted 8-dim descriptor of a cluster.

    [log point count, bbox extent x/y/z in original space, mean and stdev of
    member distance to the cluster's shifted-space centroid, mean semantic
    probability of the cluster's class (1.0 when scores are absent), source
    flag].  Shifted-space compactness is the informative part: a cluster that
    merges two objects shows a bimodal shifted cloud and a large spread.
    Every entry is invariant under global translation of the scene.
    """
    check_offsets(scene, offsets)
    idx = cluster.point_idx
    p = scene.coords[idx].astype(np.float64)
    q = p + offsets.offsets[idx]
    extent = p.max(axis=0) - p.min(axis=0)
    dq = np.linalg.norm(q - q.mean(axis=0), axis=1)
    if scene.sem_scores is not None:
        mean_prob = float(scene.sem_scores[idx, cluster.class_id].mean(dtype=np.float64))
    else:
        mean_prob = 1.0
    return np.array(
        [
            np.log(float(idx.size)),
            extent[0],
            extent[1],
            extent[2],
            dq.mean(),
            dq.std(),
            mean_prob,
            float(cluster.source.value),
        ],
        dtype=np.float64,
    )


def cluster_descriptors(
    clusters: list[Cluster], scene: Scene, offsets: OffsetField
) -> np.ndarray:
    return np.array(
        [cluster_descriptor(c, scene, offsets) for c in clusters], dtype=np.float64
    ).reshape(len(clusters), DESCRIPTOR_DIM)


@dataclass(frozen=True)
class ScorerModel:
    """Descriptor normalization plus one tanh hidden layer and a sigmoid output."""

    mean: np.ndarray
    std: np.ndarray
    w1: np.ndarray  # (hidden, DESCRIPTOR_DIM)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        d = mean.size
        h = b1.size
        if std.shape != (d,) or w1.shape != (h, d) or w2.shape != (h,):
            raise ValueError("inconsistent scorer model shapes")
        for arr in (mean, std, w1, b1, w2):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite scorer model weights")
        if not np.isfinite(self.b2):
            raise ValueError("non-finite scorer model weights")
        if np.any(std < 1e-8):
            raise ValueError("normalization stdev entries must be >= 1e-8")
        for arr in (mean, std, w1, b1, w2):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", float(self.b2))

    @property
    def descriptor_dim(self) -> int:
        return self.mean.size

    @property
    def hidden(self) -> int:
        return self.b1.size

    @classmethod
    def default(cls, hidden: int = 16, seed: int = 0) -> "ScorerModel":
        """Untrained model with identity normalization and small seeded weights."""
        rng = np.random.default_rng(seed)
        d = DESCRIPTOR_DIM
        return cls(
            mean=np.zeros(d),
            std=np.ones(d),
            w1=rng.uniform(-0.5, 0.5, (hidden, d)),
            b1=np.zeros(hidden),
            w2=rng.uniform(-0.5, 0.5, hidden),
            b2=0.0,
        )

    def scores(self, descriptors: np.ndarray) -> np.ndarray:
        """Sigmoid network output for raw (unnormalized) descriptors."""
        x = (np.asarray(descriptors, dtype=np.float64) - self.mean) / self.std
        hidden = np.tanh(x @ self.w1.T + self.b1)
        z = hidden @ self.w2 + self.b2
        return 1.0 / (1.0 + np.exp(-z))


def save_scorer(model: ScorerModel, path) -> None:
    fmt = "%.17g"
    lines = [f"SCORER1 {model.descriptor_dim} {model.hidden}"]
    lines.append(" ".join(fmt % v for v in model.mean))
    lines.append(" ".join(fmt % v for v in model.std))
    for row in model.w1:
        lines.append(" ".join(fmt % v for v in row))
    lines.append(" ".join(fmt % v for v in model.b1))
    lines.append(" ".join(fmt % v for v in model.w2))
    lines.append(fmt % model.b2)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def load_scorer(path) -> ScorerModel:
    lines = [l for l in Path(path).read_text(encoding="ascii").split("\n") if l.strip()]
    if not lines:
        raise FormatError("line 1: empty scorer file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "SCORER1":
        raise FormatError("line 1: malformed header, expected 'SCORER1 <dim> <hidden>'")
    try:
        d, h = int(head[1]), int(head[2])
    except ValueError:
        raise FormatError("line 1: dimensions are not integers") from None
    expect = 1 + 2 + h + 3
    if len(lines) != expect:
        raise FormatError(f"expected {expect} lines for a {d}x{h} scorer, got {len(lines)}")

    def row(k: int, n: int) -> np.ndarray:
        toks = lines[k].split()
        if len(toks) != n:
            raise FormatError(f"line {k + 1}: expected {n} values, got {len(toks)}")
        try:
            return np.array([float(t) for t in toks], dtype=np.float64)
        except ValueError:
            raise FormatError(f"line {k + 1}: non-numeric value") from None

    mean = row(1, d)
    std = row(2, d)
    w1 = np.stack([row(3 + i, d) for i in range(h)])
    b1 = row(3 + h, h)
    w2 = row(4 + h, h)
    b2 = float(row(5 + h, 1)[0])
    try:
        return ScorerModel(mean=mean, std=std, w1=w1, b1=b1, w2=w2, b2=b2)
    except ValueError as err:
        raise FormatError(str(err)) from err


def score_clusters(
    clusters: list[Cluster],
    scene: Scene,
    offsets: OffsetField,
    scorer: Scorer,
    model: ScorerModel | None = None,
    gt: list[GroundTruthInstance] | None = None,
) -> np.ndarray:
    """Score each cluster in [0, 1] with the selected scorer."""
    scorer = Scorer(scorer)
    if not clusters:
        return np.zeros(0, dtype=np.float64)
    if scorer is Scorer.ORACLE:
        if not gt:
            raise ValueError("oracle scoring needs ground-truth instances")
        return best_ious(clusters, gt, scene.n_points)
    if scorer is Scorer.SEMPROB:
        if scene.sem_scores is None:
            raise ValueError("semantic-probability scoring needs sem_scores")
        return np.array(
            [
                float(scene.sem_scores[c.point_idx, c.class_id].mean(dtype=np.float64))
                for c in clusters
            ],
            dtype=np.float64,
        )
    if model is None:
        raise ValueError("model scoring needs a trained ScorerModel")
    return model.scores(cluster_descriptors(clusters, scene, offsets))


def _pack_params(w1, b1, w2, b2) -> np.ndarray:
    return np.concatenate([w1.ravel(), b1, w2, [b2]])


def _unpack_params(theta: np.ndarray, hidden: int, dim: int):
    w1 = theta[: hidden * dim].reshape(hidden, dim)
    b1 = theta[hidden * dim : hidden * dim + hidden]
    w2 = theta[hidden * dim + hidden : hidden * dim + 2 * hidden]
    b2 = theta[-1]
    return w1, b1, w2, b2


def scorer_objective(
    theta: np.ndarray, x_norm: np.ndarray, targets: np.ndarray, hidden: int
) -> tuple[float, np.ndarray]:
    """Soft-label BCE over normalized descriptors, with its analytic gradient.

    Standard backprop through sigmoid(w2 . tanh(W1 x + b1) + b2); the
    BCE-through-sigmoid derivative collapses to (score - target).
    """
    dim = x_norm.shape[1]
    w1, b1, w2, b2 = _unpack_params(theta, hidden, dim)
    m = x_norm.shape[0]
    pre = x_norm @ w1.T + b1
    h = np.tanh(pre)
    z = h @ w2 + b2
    s = 1.0 / (1.0 + np.exp(-z))
    sc = np.clip(s, SCORE_EPS, 1.0 - SCORE_EPS)
    loss = float(-(targets * np.log(sc) + (1.0 - targets) * np.log(1.0 - sc)).mean())
    dz = (s - targets) / m
    gw2 = h.T @ dz
    gb2 = dz.sum()
    dh = dz[:, None] * w2[None, :] * (1.0 - h * h)
    gw1 = dh.T @ x_norm
    gb1 = dh.sum(axis=0)
    return loss, _pack_params(gw1, gb1, gw2, gb2)


@dataclass(frozen=True)
class ScorerTraining:
    """Result of train_scorer: the model plus loss bookkeeping."""

    model: ScorerModel
    initial_loss: float
    final_loss: float
    grad_error: float
    n_clusters: int


def harvest_training_set(
    corpus,
    cluster_params=None,
    low: float = SOFT_LOW,
    high: float = SOFT_HIGH,
) -> tuple[np.ndarray, np.ndarray]:
    """Descriptors and soft labels from dual-set clustering of a corpus.

    ``corpus`` is an iterable of (scene, offsets) pairs; scenes must carry
    ground-truth instances.
    """
    from .clustering import ClusterParams, cluster_dual_set
    from .core import ground_truth_instances

    if cluster_params is None:
        cluster_params = ClusterParams()
    xs = []
    ys = []
    for scene, offsets in corpus:
        clusters = cluster_dual_set(scene, offsets, cluster_params)
        if not clusters:
            continue
        gt = ground_truth_instances(scene)
        if not gt:
            raise ValueError("training scene has no ground-truth instances")
        xs.append(cluster_descriptors(clusters, scene, offsets))
        ys.append(soft_labels(best_ious(clusters, gt, scene.n_points), low, high))
    if not xs:
        raise ValueError("corpus produced no clusters to train on")
    return np.concatenate(xs), np.concatenate(ys)


def train_scorer(
    corpus,
    hidden: int = 16,
    lr: float = 0.5,
    epochs: int = 400,
    seed: int = 0,
    cluster_params=None,
    low: float = SOFT_LOW,
    high: float = SOFT_HIGH,
    grad_tolerance: float = 1e-5,
) -> ScorerTraining:
    """Full-batch gradient descent on the soft-label BCE.

    Deterministic given the seed.  The analytic gradient is verified against
    central differences at the initial weights before any step is taken.
    """
    x, y = harvest_training_set(corpus, cluster_params, low, high)
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), 1e-8)
    x_norm = (x - mean) / std
    dim = x.shape[1]

    rng = np.random.default_rng(seed)
    theta = np.concatenate(
        [
            rng.uniform(-0.5, 0.5, hidden * dim),
            np.zeros(hidden),
            rng.uniform(-0.5, 0.5, hidden),
            [0.0],
        ]
    )

    check_n = min(x_norm.shape[0], 64)
    grad_error = gradient_check(
        lambda t: scorer_objective(t, x_norm[:check_n], y[:check_n], hidden), theta
    )
    if grad_error > grad_tolerance:
        raise ValueError(
            f"scorer gradient check failed: {grad_error:.3e} > {grad_tolerance:.0e}"
        )

    initial_loss, _ = scorer_objective(theta, x_norm, y, hidden)
    loss = initial_loss
    for _ in range(epochs):
        loss, grad = scorer_objective(theta, x_norm, y, hidden)
        if not np.isfinite(loss):
            raise ValueError("training diverged to a non-finite loss")
        theta = theta - lr * grad
    loss, _ = scorer_objective(theta, x_norm, y, hidden)
    w1, b1, w2, b2 = _unpack_params(theta, hidden, dim)
    model = ScorerModel(mean=mean, std=std, w1=w1, b1=b1, w2=w2, b2=float(b2))
    return ScorerTraining(
        model=model,
        initial_loss=float(initial_loss),
        final_loss=float(loss),
        grad_error=float(grad_error),
        n_clusters=int(x.shape[0]),
    )
