"""Command-line interface: generate, cluster, evaluate, bench, gradcheck,
train-scorer.

Exit codes: 0 success, 1 usage error, 2 validation or runtime error.
Diagnostics go to stderr; results go to stdout or to --out files.  The
parsed argparse namespace is the run's configuration; every numeric default
matches the library defaults (radius 0.03, min points 50, NMS IoU 0.3, soft
thresholds 0.25/0.75, precision/recall score filter 0.2).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .clustering import ClusterParams
from .core import FormatError, OffsetField, Scene, SceneError
from .evaluation import PR_SCORE_FILTER, evaluate
from .formats import (
    load_offsets,
    load_predictions,
    load_scene,
    predictions_text,
    save_offsets,
    save_predictions,
    save_scene,
)
from .losses import (
    gradient_check,
    offset_direction_grad,
    offset_direction_loss,
    offset_regression_grad,
    offset_regression_loss,
)
from .pipeline import PipelineConfig, run_pipeline
from .scoring import (
    SOFT_HIGH,
    SOFT_LOW,
    Scorer,
    ScorerModel,
    load_scorer,
    save_scorer,
    scorer_objective,
    train_scorer,
)
from .synth import GenConfig, generate_sample


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="cloudinst", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command")

    g = sub.add_parser("generate", help="write a synthetic scene (.sc1) and offsets (.off1)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="scene output path (.sc1)")
    g.add_argument("--offsets-out", default=None, help="offset output path (default: scene path with .off1)")
    g.add_argument("--n-objects", type=int, default=6)
    g.add_argument("--room", type=float, nargs=3, default=[5.0, 5.0, 2.5], metavar=("LX", "LY", "LZ"))
    g.add_argument("--density", type=float, default=3000.0)
    g.add_argument("--stuff-density", type=float, default=60.0)
    g.add_argument("--min-gap", type=float, default=0.15)
    g.add_argument("--same-class-gap", type=float, default=None)
    g.add_argument("--p-sem", type=float, default=0.0)
    g.add_argument("--temperature", type=float, default=0.0)
    g.add_argument("--sigma0", type=float, default=0.0)
    g.add_argument("--beta", type=float, default=0.0)

    c = sub.add_parser("cluster", help="run clustering + scoring + NMS, write predictions (.pred1)")
    c.add_argument("--scene", required=True)
    c.add_argument("--offsets", required=True)
    c.add_argument("--set", choices=["p", "q", "both"], default="both", dest="sets")
    c.add_argument("--scorer", choices=[s.value for s in Scorer], default="oracle")
    c.add_argument("--model", default=None, help="scorer model path (required for --scorer model)")
    c.add_argument("--radius", type=float, default=0.03)
    c.add_argument("--min-points", type=int, default=50)
    c.add_argument("--nms-iou", type=float, default=0.3)
    c.add_argument("--min-score", type=float, default=None)
    c.add_argument("--threads", type=int, default=1, help="0 = all cores")
    c.add_argument("--out", default=None, help="predictions path (default: stdout)")

    e = sub.add_parser("evaluate", help="score predictions against a scene's ground truth")
    e.add_argument("--scene", required=True)
    e.add_argument("--preds", required=True)
    e.add_argument("--score-filter", type=float, default=PR_SCORE_FILTER)
    e.add_argument("--tsv", action="store_true")

    b = sub.add_parser("bench", help="time the pipeline stages on a scene")
    b.add_argument("--scene", required=True)
    b.add_argument("--offsets", required=True)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--threads", type=int, default=1, help="0 = all cores")
    b.add_argument("--scorer", choices=[s.value for s in Scorer], default="model")
    b.add_argument("--model", default=None)
    b.add_argument("--radius", type=float, default=0.03)
    b.add_argument("--min-points", type=int, default=50)
    b.add_argument("--nms-iou", type=float, default=0.3)
    b.add_argument("--tsv", action="store_true")

    gc = sub.add_parser("gradcheck", help="verify analytic loss gradients against central differences")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--tolerance", type=float, default=1e-5)

    t = sub.add_parser("train-scorer", help="train the cluster scorer on scene/offset file pairs")
    t.add_argument("scenes", nargs="+", help=".sc1 paths; offsets are read from matching .off1 files")
    t.add_argument("--out", required=True, help="model output path")
    t.add_argument("--hidden", type=int, default=16)
    t.add_argument("--lr", type=float, default=0.5)
    t.add_argument("--epochs", type=int, default=400)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--radius", type=float, default=0.03)
    t.add_argument("--min-points", type=int, default=50)
    t.add_argument("--soft-low", type=float, default=SOFT_LOW)
    t.add_argument("--soft-high", type=float, default=SOFT_HIGH)
    return p


def _offsets_path(scene_path: str, explicit: str | None) -> Path:
    if explicit is not None:
        return Path(explicit)
    return Path(scene_path).with_suffix(".off1")


def _workers(threads: int) -> int:
    if threads < 0:
        raise ValueError("--threads must be >= 0")
    return 2 if threads == 0 else threads


def _load_pair(scene_path: str, offsets_path: str) -> tuple[Scene, OffsetField]:
    scene = load_scene(scene_path)
    offsets = load_offsets(offsets_path)
    if offsets.n_points != scene.n_points:
        raise SceneError(
            f"offset file has {offsets.n_points} points, scene has {scene.n_points}"
        )
    return scene, offsets


def _cmd_generate(args) -> int:
    config = GenConfig(
        seed=args.seed,
        room=tuple(args.room),
        n_objects=args.n_objects,
        density=args.density,
        stuff_density=args.stuff_density,
        min_gap=args.min_gap,
        same_class_gap=args.same_class_gap,
        p_sem=args.p_sem,
        sem_temperature=args.temperature,
        sigma0=args.sigma0,
        beta=args.beta,
    )
    _, observed, offsets = generate_sample(config)
    save_scene(observed, args.out)
    save_offsets(offsets, _offsets_path(args.out, args.offsets_out))
    print(f"wrote {observed.n_points} points, {observed.n_instances} instances to {args.out}")
    return 0


def _pipeline_config(args, sets: str) -> PipelineConfig:
    return PipelineConfig(
        cluster_params=ClusterParams(radius=args.radius, min_points=args.min_points),
        scorer=Scorer(args.scorer),
        nms_iou=args.nms_iou,
        min_score=getattr(args, "min_score", None),
        cluster_sets=sets,
    )


def _resolve_model(args, allow_default: bool = False) -> ScorerModel | None:
    if args.scorer != "model":
        if args.model is not None:
            raise SceneError("--model is only valid with --scorer model")
        return None
    if args.model is None:
        if allow_default:
            return ScorerModel.default()
        raise SceneError("--scorer model requires --model <path>")
    return load_scorer(args.model)


def _check_scorer_inputs(scene: Scene, scorer: str) -> None:
    if scorer == "oracle" and scene.n_instances == 0:
        raise SceneError("--scorer oracle needs a scene with ground-truth instances")
    if scorer == "semprob" and scene.sem_scores is None:
        raise SceneError("--scorer semprob needs a scene with semantic scores")


def _cmd_cluster(args) -> int:
    scene, offsets = _load_pair(args.scene, args.offsets)
    _check_scorer_inputs(scene, args.scorer)
    model = _resolve_model(args)
    preds = run_pipeline(
        scene, offsets, _pipeline_config(args, args.sets),
        model=model, max_workers=_workers(args.threads),
    )
    if args.out is not None:
        save_predictions(preds, args.out)
        print(f"wrote {len(preds)} predictions to {args.out}")
    else:
        sys.stdout.write(predictions_text(preds))
    return 0


def _cmd_evaluate(args) -> int:
    scene = load_scene(args.scene)
    preds = load_predictions(args.preds)
    result = evaluate(preds, scene, score_filter=args.score_filter)
    sep = "\t" if args.tsv else "  "
    header = sep.join(["class", "AP", "AP50", "AP25", "Prec50", "Rec50"])
    print(header)
    for c in result.classes:
        print(
            sep.join(
                [str(c)]
                + [
                    f"{v:.4f}"
                    for v in (
                        result.ap_classwise[c],
                        result.ap50_classwise[c],
                        result.ap25_classwise[c],
                        result.prec50_classwise[c],
                        result.rec50_classwise[c],
                    )
                ]
            )
        )
    print(
        sep.join(
            ["mean"]
            + [
                f"{v:.4f}"
                for v in (result.map, result.ap50, result.ap25, result.mprec50, result.mrec50)
            ]
        )
    )
    return 0


def _cmd_bench(args) -> int:
    scene, offsets = _load_pair(args.scene, args.offsets)
    _check_scorer_inputs(scene, args.scorer)
    model = _resolve_model(args, allow_default=True)
    result = bench_mod.run_bench(
        scene, offsets, _pipeline_config(args, "both"), model=model,
        repeats=args.repeats, max_workers=_workers(args.threads),
    )
    sep = "\t" if args.tsv else "  "
    print(sep.join(["stage"] + list(bench_mod.STAGES) + ["total"]))
    print(
        sep.join(
            ["ms"]
            + [f"{v:.2f}" for v in result.row()]
            + [f"{result.total_ms:.2f}"]
        )
    )
    print(
        f"points={result.n_points} predictions={result.n_predictions} "
        f"repeats={result.repeats}",
        file=sys.stderr,
    )
    return 0


def _cmd_gradcheck(args) -> int:
    from .synth import generate_scene

    scene, _ = generate_scene(
        GenConfig(
            seed=args.seed, n_objects=3, density=150.0, stuff_density=0.0,
            min_object_points=40,
        )
    )
    rng = np.random.default_rng(args.seed)
    n = scene.n_points

    # keep every residual component well away from the L1 kink at zero and
    # every offset well away from the direction-loss epsilon guard
    from .losses import offset_targets

    residual = rng.uniform(0.01, 0.3, (n, 3)) * rng.choice([-1.0, 1.0], (n, 3))
    base = offset_targets(scene).offsets + residual

    def reg_obj(x):
        field = OffsetField(x.reshape(n, 3))
        return (
            offset_regression_loss(field, scene),
            offset_regression_grad(field, scene).ravel(),
        )

    def dir_obj(x):
        field = OffsetField(x.reshape(n, 3))
        return (
            offset_direction_loss(field, scene),
            offset_direction_grad(field, scene).ravel(),
        )

    x, y = _gradcheck_scorer_data(rng)
    errors = {
        "offset_regression": gradient_check(reg_obj, base.ravel()),
        "offset_direction": gradient_check(dir_obj, base.ravel()),
        "score_bce": gradient_check(
            lambda t: scorer_objective(t, x, y, 8),
            rng.uniform(-0.5, 0.5, 8 * x.shape[1] + 2 * 8 + 1),
        ),
    }
    failed = False
    for name, err in errors.items():
        status = "ok" if err <= args.tolerance else "FAIL"
        print(f"{name}: max relative error {err:.3e} [{status}]")
        failed = failed or err > args.tolerance
    return 2 if failed else 0


def _gradcheck_scorer_data(rng) -> tuple[np.ndarray, np.ndarray]:
    x = rng.standard_normal((40, 8))
    y = rng.uniform(0.0, 1.0, 40)
    return x, y


def _cmd_train_scorer(args) -> int:
    corpus = []
    for scene_path in args.scenes:
        scene, offsets = _load_pair(scene_path, str(_offsets_path(scene_path, None)))
        corpus.append((scene, offsets))
    result = train_scorer(
        corpus,
        hidden=args.hidden,
        lr=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        cluster_params=ClusterParams(radius=args.radius, min_points=args.min_points),
        low=args.soft_low,
        high=args.soft_high,
    )
    save_scorer(result.model, args.out)
    print(
        f"trained on {result.n_clusters} clusters; "
        f"loss {result.initial_loss:.4f} -> {result.final_loss:.4f}; "
        f"gradient check {result.grad_error:.2e}; wrote {args.out}"
    )
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "cluster": _cmd_cluster,
    "evaluate": _cmd_evaluate,
    "bench": _cmd_bench,
    "gradcheck": _cmd_gradcheck,
    "train-scorer": _cmd_train_scorer,
}


def dispatch(argv: list[str]) -> int:
    """Parse and run; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (SceneError, FormatError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
