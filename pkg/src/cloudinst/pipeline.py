"""Score-ranked non-maximum suppression and the end-to-end inference driver
from (scene, offsets) to instance predictions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterParams, cluster_dual_set, cluster_single_set
from .core import (
    Cluster,
    InstancePrediction,
    OffsetField,
    Scene,
    Source,
    check_offsets,
    ground_truth_instances,
    shifted_coords,
)
from .scoring import Scorer, ScorerModel, pairwise_iou, score_clusters


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for the full clustering -> scoring -> NMS pipeline.

    ``cluster_sets`` selects which coordinate sets feed clustering: "both"
    (the default), or "p"/"q" alone for ablations.
    """

    cluster_params: ClusterParams = field(default_factory=ClusterParams)
    scorer: Scorer = Scorer.MODEL
    nms_iou: float = 0.3
    min_score: float | None = None
    cluster_sets: str = "both"

    def __post_init__(self):
        object.__setattr__(self, "scorer", Scorer(self.scorer))
        if not 0.0 < self.nms_iou <= 1.0:
            raise ValueError(f"nms_iou must be in (0, 1], got {self.nms_iou}")
        if self.min_score is not None and not 0.0 <= self.min_score <= 1.0:
            raise ValueError(f"min_score must be in [0, 1], got {self.min_score}")
        if self.cluster_sets not in ("p", "q", "both"):
            raise ValueError(f"cluster_sets must be 'p', 'q' or 'both', got {self.cluster_sets!r}")


def nms(clusters: list[Cluster], scores: np.ndarray, iou_thresh: float) -> list[int]:
    """Greedy non-maximum suppression over scored clusters.

    Clusters are visited in descending score (ties: ORIGINAL source first,
    then lower minimum point index); a cluster is kept only if its IoU with
    every already-kept cluster stays below ``iou_thresh``.  Returns indices
    into ``clusters`` in kept order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(clusters),):
        raise ValueError(
            f"got {len(clusters)} clusters but {scores.size} scores"
        )
    if not clusters:
        return []
    order = sorted(
        range(len(clusters)),
        key=lambda k: (-scores[k], clusters[k].source.value, clusters[k].min_index),
    )
    n_points = int(max(c.point_idx[-1] for c in clusters)) + 1
    ious = pairwise_iou(
        [c.point_idx for c in clusters], [c.point_idx for c in clusters], n_points
    )
    kept: list[int] = []
    for k in order:
        if not kept or bool((ious[k, kept] < iou_thresh).all()):
            kept.append(k)
    return kept


def run_pipeline(
    scene: Scene,
    offsets: OffsetField,
    config: PipelineConfig,
    model: ScorerModel | None = None,
    max_workers: int = 1,
    timings: dict | None = None,
) -> list[InstancePrediction]:
    """Cluster, score, suppress, and emit final instance predictions.

    Each prediction carries its cluster's semantic class and the score it
    won NMS with.  Deterministic for fixed inputs and config.
    """
    check_offsets(scene, offsets)
    if config.cluster_sets == "both":
        clusters = cluster_dual_set(
            scene, offsets, config.cluster_params,
            max_workers=max_workers, timings=timings,
        )
    else:
        sub: dict = {}
        if config.cluster_sets == "p":
            clusters = cluster_single_set(
                scene.coords, scene.sem_labels, scene.stuff_classes,
                config.cluster_params, Source.ORIGINAL, timings=sub,
            )
            suffix = "p"
        else:
            clusters = cluster_single_set(
                shifted_coords(scene, offsets), scene.sem_labels,
                scene.stuff_classes, config.cluster_params, Source.SHIFTED,
                timings=sub,
            )
            suffix = "q"
        if timings is not None:
            timings[f"bq_{suffix}"] = sub.get("ball_query", 0.0)
            timings[f"cl_{suffix}"] = sub.get("components", 0.0)

    gt = None
    if config.scorer is Scorer.ORACLE:
        gt = ground_truth_instances(scene)
        if not gt:
            raise ValueError("oracle scoring needs a scene with instances")

    t0 = time.perf_counter()
    scores = score_clusters(clusters, scene, offsets, config.scorer, model=model, gt=gt)
    if timings is not None:
        timings["scoring"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    kept = nms(clusters, scores, config.nms_iou)
    if timings is not None:
        timings["nms"] = time.perf_counter() - t0

    preds = []
    for k in kept:
        if config.min_score is not None and scores[k] < config.min_score:
            continue
        preds.append(
            InstancePrediction(
                point_idx=clusters[k].point_idx,
                class_id=clusters[k].class_id,
                score=float(np.clip(scores[k], 0.0, 1.0)),
            )
        )
    return preds
