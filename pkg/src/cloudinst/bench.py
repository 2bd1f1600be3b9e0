"""Wall-clock benchmark of the inference pipeline, broken down by stage:
ball query and component labeling on each coordinate set, scoring, and NMS.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .core import OffsetField, Scene
from .pipeline import PipelineConfig, run_pipeline
from .scoring import ScorerModel

STAGES = ("bq_p", "cl_p", "bq_q", "cl_q", "scoring", "nms")


@dataclass(frozen=True)
class BenchResult:
    """Per-stage mean times (ms) over the measured repeats."""

    stage_ms: dict
    total_ms: float
    repeats: int
    n_points: int
    n_predictions: int

    def row(self) -> list[float]:
        return [self.stage_ms.get(s, 0.0) for s in STAGES]


def run_bench(
    scene: Scene,
    offsets: OffsetField,
    config: PipelineConfig,
    model: ScorerModel | None = None,
    repeats: int = 3,
    max_workers: int = 1,
) -> BenchResult:
    """Run the pipeline ``repeats`` times (after one unmeasured warm-up) and
    average per-stage wall times from a monotonic clock.

    In multi-threaded runs the two clustering passes overlap, so the sum of
    stage times can exceed the total.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    run_pipeline(scene, offsets, config, model=model, max_workers=max_workers)

    sums = {s: 0.0 for s in STAGES}
    total = 0.0
    n_preds = 0
    for _ in range(repeats):
        timings: dict = {}
        t0 = time.perf_counter()
        preds = run_pipeline(
            scene, offsets, config, model=model,
            max_workers=max_workers, timings=timings,
        )
        total += time.perf_counter() - t0
        n_preds = len(preds)
        for s in STAGES:
            sums[s] += timings.get(s, 0.0)
    return BenchResult(
        stage_ms={s: 1000.0 * sums[s] / repeats for s in STAGES},
        total_ms=1000.0 * total / repeats,
        repeats=repeats,
        n_points=scene.n_points,
        n_predictions=n_preds,
    )
