import json
from pathlib import Path

import pytest

from localhealth.cli import main

TINY_CONFIG = {
    "seed": 5,
    "years": [2015, 2016, 2017, 2018, 2019],
    "synth.n_bgs": 16,
    "synth.tweets_per_cell": [20, 40],
    "encoder.dim": 64,
    "train.epochs": 3,
    "seeds": [0, 1],
}


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """synth -> ingest -> encode -> train -> evaluate -> sweep, all through main()."""
    root = tmp_path_factory.mktemp("cli")
    config_path = root / "config.json"
    config = dict(TINY_CONFIG)
    config["bg_table"] = str(root / "synth/bg_table.csv")
    config["archive"] = str(root / "synth/tweets.jsonl")
    config["outcomes"] = str(root / "synth/outcomes.csv")
    config["counts"] = str(root / "synth/counts.csv")
    config_path.write_text(json.dumps(config), "utf-8")
    common = ["--config", str(config_path)]

    assert main(["synth", "--out", str(root / "synth"), *common]) == 0
    assert main(["ingest", "--out", str(root / "ingest"), *common]) == 0
    assert main(["stats", "--out", str(root / "stats"), *common]) == 0
    assert main(["encode", "--out", str(root / "encode"), *common]) == 0
    assert main(["train", "--out", str(root / "train"), *common]) == 0
    assert main(["evaluate", "--experiment", "northeast", "--out", str(root / "eval"), *common]) == 0
    assert main(["sweep", "--set", "4", "--out", str(root / "sweep"), *common]) == 0
    return root


def test_pipeline_outputs(pipeline_dir):
    root = pipeline_dir
    assert (root / "synth/tweets.jsonl").exists()
    ingest = json.loads((root / "ingest/ingest_report.json").read_text())
    dropped = len(ingest["dropped_empty_cell"]) + len(ingest["dropped_missing_outcome"])
    assert ingest["retained_bgs"] + dropped == 16
    assert ingest["entries"] == ingest["retained_bgs"] * 5
    assert (root / "stats/correlations_matrix.csv").exists()
    assert (root / "stats/distributions.csv").exists()
    assert (root / "encode/embeddings.lteb").stat().st_size > 0
    assert (root / "encode/samples.manifest.jsonl").exists()
    checkpoint = json.loads((root / "train/checkpoint.json").read_text())
    assert checkpoint["dim"] == 64
    assert (root / "eval/report_northeastholdout/metrics.csv").exists()


def test_every_run_writes_manifest_and_snapshot(pipeline_dir):
    for sub in ("synth", "ingest", "stats", "encode", "train", "eval", "sweep"):
        out = pipeline_dir / sub
        manifest = json.loads((out / "manifest.json").read_text())
        assert (out / manifest["config_snapshot"]).exists()
        snapshot = json.loads((out / "config.snapshot.json").read_text())
        assert "command" in snapshot
        for name in manifest["files"]:
            assert (out / name).exists()


def test_sweep_emits_five_condition_plot_data(pipeline_dir):
    sweep = (pipeline_dir / "sweep/report_set4/sweep.csv").read_text().splitlines()
    assert len(sweep) == 1 + 5  # header + one row per availability window
    years = sorted(int(line.split(",")[2]) for line in sweep[1:])
    assert years == [2015, 2016, 2017, 2018, 2019]
    assert (pipeline_dir / "sweep/report_set4/set4_sweep.png").stat().st_size > 0


def test_trace_has_per_epoch_rows(pipeline_dir):
    trace = (pipeline_dir / "train/trace.csv").read_text().splitlines()
    assert trace[0] == "epoch,train_mse,val_f1"
    assert len(trace) == 1 + TINY_CONFIG["train.epochs"]


def test_synth_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert main([
            "synth", "--out", str(tmp_path / sub), "--n-bgs", "6", "--seed", "9",
        ]) == 0
    assert (tmp_path / "a/tweets.jsonl").read_bytes() == (tmp_path / "b/tweets.jsonl").read_bytes()
    assert (tmp_path / "a/outcomes.csv").read_bytes() == (tmp_path / "b/outcomes.csv").read_bytes()


def test_stats_on_empty_dataset_exits_1(pipeline_dir, tmp_path):
    empty_outcomes = tmp_path / "outcomes.csv"
    empty_outcomes.write_text("bg_id,year,value,unit\n", "utf-8")
    code = main([
        "stats", "--out", str(tmp_path / "st"),
        "--bg-table", str(pipeline_dir / "synth/bg_table.csv"),
        "--archive", str(pipeline_dir / "synth/tweets.jsonl"),
        "--outcomes", str(empty_outcomes),
        "--counts", str(pipeline_dir / "synth/counts.csv"),
    ])
    assert code == 1


def test_unknown_flag_exits_1(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "x"), "--frobnicate"]) == 1


def test_missing_file_exits_1(tmp_path):
    assert main([
        "ingest", "--out", str(tmp_path / "x"),
        "--bg-table", "/definitely/not/here.csv",
        "--archive", "/nope.jsonl", "--outcomes", "/nope.csv", "--counts", "/nope.csv",
    ]) == 1


def test_missing_required_path_exits_1(tmp_path):
    assert main(["ingest", "--out", str(tmp_path / "x")]) == 1


def test_ci_profile_caps_epochs_and_seeds(pipeline_dir, tmp_path):
    out = tmp_path / "ci"
    code = main([
        "evaluate", "--experiment", "northeast", "--out", str(out),
        "--bg-table", str(pipeline_dir / "synth/bg_table.csv"),
        "--archive", str(pipeline_dir / "synth/tweets.jsonl"),
        "--outcomes", str(pipeline_dir / "synth/outcomes.csv"),
        "--counts", str(pipeline_dir / "synth/counts.csv"),
        "--profile", "ci", "--epochs", "1600", "--seeds", "0,1,2,3,4,5,6,7,8,9",
        "--dim", "64",
    ])
    assert code == 0
    snapshot = json.loads((out / "config.snapshot.json").read_text())
    assert snapshot["train.epochs"] == 200
    assert snapshot["seeds"] == [0, 1, 2]
    metrics = (out / "report_northeastholdout/metrics.csv").read_text().splitlines()
    assert len(metrics) == 1 + 3  # header + one row per capped seed


def test_bundled_config_parses():
    bundled = Path(__file__).resolve().parents[1] / "configs/ci-200bg.json"
    config = json.loads(bundled.read_text())
    assert config["synth.n_bgs"] == 200
    assert config["encoder.dim"] == 256
    assert config["profile"] == "ci"
