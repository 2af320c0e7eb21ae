import hashlib

import numpy as np
import pytest

from localhealth.encoding import EncoderSpec
from localhealth.experiments import (
    EncoderSource,
    ExperimentConfig,
    ExperimentReport,
    ReportRow,
    aggregate_rows,
    compute_cell_vectors,
    emit_report,
    read_report,
    run_experiment,
)
from localhealth.lteb import LtebRecord, write_embeddings
from localhealth.optim import TrainConfig

FAST_TRAIN = TrainConfig(epochs=3, batch=256)
HASH64 = EncoderSource("hash-64", EncoderSpec("Hashing", 64))


def fast_config(seeds=(0, 1), **kwargs):
    return ExperimentConfig(train=FAST_TRAIN, seeds=seeds, **kwargs)


def test_unknown_experiment_rejected(small_dataset):
    with pytest.raises(ValueError):
        run_experiment("Set9", small_dataset, [HASH64], fast_config())
    with pytest.raises(ValueError):
        run_experiment("Set1", small_dataset, [], fast_config())


def test_set3_has_four_availability_conditions(small_dataset):
    report = run_experiment("Set3", small_dataset, [HASH64], fast_config())
    xs = sorted({pt.first_year for pt in report.sweep})
    assert xs == [2015, 2016, 2017, 2018]
    assert len(report.aggregates) == 4
    assert len(report.rows) == 4 * 2  # conditions x seeds


def test_set4_has_five_availability_conditions(small_dataset):
    seeds = tuple(range(10))
    report = run_experiment("Set4", small_dataset, [HASH64], fast_config(seeds=seeds))
    xs = sorted({pt.first_year for pt in report.sweep})
    assert xs == [2015, 2016, 2017, 2018, 2019]
    assert len(report.rows) == 5 * 10  # five availability scenarios x ten seeds per model
    assert len(report.aggregates) == 5
    for agg in report.aggregates:
        assert agg.min_f1 <= agg.mean_f1 <= agg.max_f1
    for pt in report.sweep:
        group = [r.macro_f1 for r in report.rows if r.condition == f"{pt.series}|{pt.first_year}"]
        assert len(group) == 10
        assert abs(pt.mean_f1 - np.mean(group)) < 1e-12


def test_set1_condition_roster(small_dataset):
    report = run_experiment("Set1", small_dataset, [HASH64], fast_config(seeds=(0,)))
    conditions = {r.condition for r in report.rows}
    expected = {
        "majority", "adi-only", "logreg-General", "svm-General",
        "count-MH", "count-FI", "count-MH+FI",
        "count-MH+ADI", "count-FI+ADI", "count-MH+FI+ADI",
        "text-MH", "text-FI", "text-MH+FI", "text-General",
        "text-MH+ADI", "text-FI+ADI", "text-MH+FI+ADI", "text-General+ADI",
    }
    assert conditions == expected
    assert not report.sweep
    majority = [r for r in report.rows if r.condition == "majority"]
    assert all(0 <= r.macro_f1 <= 1 and 0 <= r.accuracy <= 100 for r in report.rows)
    assert len(majority) == 1


def test_set2_iterates_encoders(small_dataset):
    sources = [
        EncoderSource("hash-64", EncoderSpec("Hashing", 64)),
        EncoderSource("hash-128", EncoderSpec("Hashing", 128)),
    ]
    report = run_experiment("Set2", small_dataset, sources, fast_config(seeds=(0,)))
    assert {r.condition for r in report.rows} == {"hash-64", "hash-128"}


def test_northeast_holdout(small_dataset):
    report = run_experiment("NortheastHoldout", small_dataset, [HASH64], fast_config(seeds=(0,)))
    assert len(report.rows) == 1
    assert 0.0 <= report.rows[0].macro_f1 <= 1.0


def test_seed_workers_equivalence(small_dataset):
    serial = run_experiment("NortheastHoldout", small_dataset, [HASH64], fast_config(seeds=(0, 1)))
    threaded = run_experiment(
        "NortheastHoldout", small_dataset, [HASH64], fast_config(seeds=(0, 1), workers=2)
    )
    assert [(r.condition, r.seed, r.macro_f1) for r in serial.rows] == [
        (r.condition, r.seed, r.macro_f1) for r in threaded.rows
    ]


def test_emit_and_read_report_round_trip(tmp_path, small_dataset):
    report = run_experiment("Set3", small_dataset, [HASH64], fast_config())
    files = emit_report(report, tmp_path)
    names = {f.name for f in files}
    assert {"metrics.csv", "aggregates.csv", "sweep.csv", "summary.txt"} <= names
    png = [f for f in files if f.suffix == ".png"]
    assert len(png) == 1 and png[0].stat().st_size > 0

    back = read_report(tmp_path, "Set3")
    assert [(r.condition, r.seed, r.macro_f1, r.accuracy) for r in back.rows] == [
        (r.condition, r.seed, r.macro_f1, r.accuracy) for r in report.rows
    ]
    assert [(a.condition, a.mean_f1, a.min_f1, a.max_f1) for a in back.aggregates] == [
        (a.condition, a.mean_f1, a.min_f1, a.max_f1) for a in report.aggregates
    ]
    assert [(p.series, p.first_year, p.mean_f1) for p in back.sweep] == [
        (p.series, p.first_year, p.mean_f1) for p in report.sweep
    ]


def test_emit_empty_report_headers_only(tmp_path):
    report = ExperimentReport(experiment_id="Set1")
    emit_report(report, tmp_path)
    metrics = (tmp_path / "metrics.csv").read_text().splitlines()
    assert metrics == ["experiment_id,condition,seed,macro_f1,accuracy"]
    aggregates = (tmp_path / "aggregates.csv").read_text().splitlines()
    assert len(aggregates) == 1


def test_aggregate_rows():
    rows = [
        ReportRow("a", 0, 0.5, 50.0), ReportRow("a", 1, 0.7, 60.0), ReportRow("b", 0, 0.9, 90.0),
    ]
    aggs = {a.condition: a for a in aggregate_rows(rows)}
    assert abs(aggs["a"].mean_f1 - 0.6) < 1e-12
    assert aggs["a"].min_f1 == 0.5 and aggs["a"].max_f1 == 0.7
    assert aggs["b"].mean_f1 == 0.9


def test_external_embeddings_path(tmp_path, small_dataset):
    # missing file is reported by name
    missing = EncoderSource(
        "ext", EncoderSpec("ExternalFile", 768), lteb_path=str(tmp_path / "absent.lteb")
    )
    with pytest.raises(FileNotFoundError, match="absent.lteb"):
        compute_cell_vectors(small_dataset, ("General",), missing)

    # a file missing one cell is also named
    digest = hashlib.sha256(b"x").hexdigest()
    some_key = next(iter(small_dataset.entries))
    records = [LtebRecord(some_key[0], some_key[1], "General", digest, np.ones((2, 16), np.float32))]
    path = tmp_path / "partial.lteb"
    write_embeddings(path, records, dim=16)
    mismatched = EncoderSource("ext32", EncoderSpec("ExternalFile", 32), lteb_path=str(path))
    with pytest.raises(ValueError, match="dim"):
        compute_cell_vectors(small_dataset, ("General",), mismatched)
    partial = EncoderSource("ext16", EncoderSpec("ExternalFile", 16), lteb_path=str(path))
    with pytest.raises(KeyError, match="missing cell"):
        compute_cell_vectors(small_dataset, ("General",), partial)
