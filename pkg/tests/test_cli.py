import numpy as np

from cloudinst.cli import dispatch
from cloudinst.formats import load_predictions, load_scene
from cloudinst.scoring import load_scorer


def run(capsys, *argv):
    code = dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


GEN_ARGS = [
    "--n-objects", "3", "--density", "700", "--stuff-density", "15",
    "--room", "4", "4", "2.5",
]


def gen_scene(capsys, tmp_path, name="a", seed="7", extra=()):
    out = tmp_path / f"{name}.sc1"
    code, _, err = run(
        capsys, "generate", "--seed", seed, "--out", str(out), *GEN_ARGS, *extra
    )
    assert code == 0, err
    return out, out.with_suffix(".off1")


def test_no_arguments_prints_usage_and_exits_1(capsys):
    code, out, err = run(capsys)
    assert code == 1
    assert "usage" in err.lower()


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(capsys, "generate", "--bogus", "1", "--out", "x.sc1")
    assert code == 1
    assert "error" in err.lower()


def test_generate_is_deterministic(capsys, tmp_path):
    a, a_off = gen_scene(capsys, tmp_path, "a")
    b, b_off = gen_scene(capsys, tmp_path, "b")
    assert a.read_bytes() == b.read_bytes()
    assert a_off.read_bytes() == b_off.read_bytes()
    c, _ = gen_scene(capsys, tmp_path, "c", seed="8")
    assert a.read_bytes() != c.read_bytes()


def test_cluster_writes_predictions_and_stdout(capsys, tmp_path):
    scene, offsets = gen_scene(capsys, tmp_path)
    preds_path = tmp_path / "p.pred1"
    code, _, err = run(
        capsys, "cluster", "--scene", str(scene), "--offsets", str(offsets),
        "--scorer", "oracle", "--min-points", "40", "--min-score", "0.5",
        "--out", str(preds_path),
    )
    assert code == 0, err
    preds = load_predictions(preds_path)
    assert len(preds) == 3
    code, out, _ = run(
        capsys, "cluster", "--scene", str(scene), "--offsets", str(offsets),
        "--scorer", "oracle", "--min-points", "40",
    )
    assert code == 0
    assert out.startswith("PRED1 ")


def test_cluster_oracle_without_instances_rejected(capsys, tmp_path):
    scene, offsets = gen_scene(capsys, tmp_path, "noisy", extra=["--p-sem", "1"])
    # p_sem=1 flips every object point out of its instance: no ground truth
    assert load_scene(scene).n_instances == 0
    code, _, err = run(
        capsys, "cluster", "--scene", str(scene), "--offsets", str(offsets),
        "--scorer", "oracle",
    )
    assert code == 2
    assert "oracle" in err


def test_cluster_model_requires_model_file(capsys, tmp_path):
    scene, offsets = gen_scene(capsys, tmp_path)
    code, _, err = run(
        capsys, "cluster", "--scene", str(scene), "--offsets", str(offsets),
        "--scorer", "model",
    )
    assert code == 2
    assert "--model" in err


def test_evaluate_table_and_tsv(capsys, tmp_path):
    scene, offsets = gen_scene(capsys, tmp_path)
    preds_path = tmp_path / "p.pred1"
    code, _, _ = run(
        capsys, "cluster", "--scene", str(scene), "--offsets", str(offsets),
        "--scorer", "oracle", "--min-points", "40", "--out", str(preds_path),
    )
    assert code == 0
    code, out, _ = run(
        capsys, "evaluate", "--scene", str(scene), "--preds", str(preds_path)
    )
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0].split() == ["class", "AP", "AP50", "AP25", "Prec50", "Rec50"]
    assert lines[-1].split()[0] == "mean"
    assert all(v == "1.0000" for v in lines[-1].split()[1:])

    code, tsv, _ = run(
        capsys, "evaluate", "--scene", str(scene), "--preds", str(preds_path), "--tsv"
    )
    assert code == 0
    assert "\t" in tsv.split("\n")[0]


def test_cli_workflow_bit_identical_across_runs(capsys, tmp_path):
    scene, offsets = gen_scene(capsys, tmp_path)
    outputs = []
    for name in ("p1.pred1", "p2.pred1"):
        path = tmp_path / name
        code, _, _ = run(
            capsys, "cluster", "--scene", str(scene), "--offsets", str(offsets),
            "--scorer", "oracle", "--min-points", "40",
            "--threads", "1" if name == "p1.pred1" else "2",
            "--out", str(path),
        )
        assert code == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]  # thread count does not change results

    evals = []
    for _ in range(2):
        code, out, _ = run(
            capsys, "evaluate", "--scene", str(scene), "--preds", str(tmp_path / "p1.pred1")
        )
        assert code == 0
        evals.append(out)
    assert evals[0] == evals[1]


def test_p_vs_both_ablation_improves_ap50(capsys, tmp_path):
    # adjacency corpus: original-set clustering merges pairs, dual set fixes it
    ap50 = {}
    for sets in ("p", "both"):
        vals = []
        for seed in ("21", "22", "23"):
            scene, offsets = gen_scene(
                capsys, tmp_path, f"adj{seed}", seed=seed,
                extra=["--same-class-gap", "0.02", "--n-objects", "4",
                       "--density", "2500"],
            )
            preds_path = tmp_path / f"{sets}{seed}.pred1"
            code, _, err = run(
                capsys, "cluster", "--scene", str(scene), "--offsets", str(offsets),
                "--scorer", "oracle", "--set", sets, "--out", str(preds_path),
            )
            assert code == 0, err
            code, out, _ = run(
                capsys, "evaluate", "--scene", str(scene), "--preds", str(preds_path),
                "--tsv",
            )
            assert code == 0
            vals.append(float(out.strip().split("\n")[-1].split("\t")[2]))
        ap50[sets] = float(np.mean(vals))
    assert ap50["both"] > ap50["p"]


def test_bench_reports_six_stages(capsys, tmp_path):
    scene, offsets = gen_scene(capsys, tmp_path)
    code, out, err = run(
        capsys, "bench", "--scene", str(scene), "--offsets", str(offsets),
        "--repeats", "1", "--tsv",
    )
    assert code == 0, err
    head, row = out.strip().split("\n")
    stages = head.split("\t")[1:]
    assert stages == ["bq_p", "cl_p", "bq_q", "cl_q", "scoring", "nms", "total"]
    values = [float(v) for v in row.split("\t")[1:]]
    assert all(v >= 0.0 for v in values)
    # serial stage times sum to no more than the wall total plus jitter
    assert sum(values[:-1]) <= values[-1] * 1.25 + 5.0


def test_gradcheck_passes(capsys):
    code, out, err = run(capsys, "gradcheck", "--seed", "0")
    assert code == 0, err
    assert out.count("[ok]") == 3


def test_train_scorer_writes_loadable_model(capsys, tmp_path):
    scenes = []
    for seed in ("31", "32"):
        scene, _ = gen_scene(capsys, tmp_path, f"t{seed}", seed=seed,
                             extra=["--sigma0", "0.01"])
        scenes.append(str(scene))
    model_path = tmp_path / "m.scorer"
    code, out, err = run(
        capsys, "train-scorer", *scenes, "--out", str(model_path),
        "--min-points", "40", "--epochs", "50",
    )
    assert code == 0, err
    model = load_scorer(model_path)
    assert model.hidden == 16
    assert "loss" in out


def test_missing_file_is_runtime_error(capsys, tmp_path):
    code, _, err = run(
        capsys, "cluster", "--scene", str(tmp_path / "nope.sc1"),
        "--offsets", str(tmp_path / "nope.off1"),
    )
    assert code == 2
    assert "error" in err
