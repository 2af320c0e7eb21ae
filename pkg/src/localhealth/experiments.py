"""Experiment suites: input-information ablation, encoder comparison,
data-availability sweeps, spatial extrapolation, and the region holdout.

Every condition is run across the configured seeds and reported as per-seed
rows plus mean/min/max aggregates; availability sweeps additionally carry
plot series (x = first training year, y = F1 band).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, SplitAssignment, availability_window, forecasting_split, holdout_region_split, normalized_counts, spatial_split
from .encoding import EncoderSpec, aggregate, combine_categories, hash_encode_cell, sample_tweets
from .head import forward_batch
from .lteb import load_embeddings
from .metrics import accuracy, macro_f1, predict_risk_by_year
from .optim import TrainConfig
from .train import SupervisedArrays, fit_classifier, fit_count_lr, train_head

EXPERIMENT_IDS = ("Set1", "Set2", "Set3", "Set4", "NortheastHoldout")

TEXT_CONDITIONS = (("MH",), ("FI",), ("MH", "FI"), ("General",))
COUNT_CONDITIONS = (("MH",), ("FI",), ("MH", "FI"))


@dataclass(frozen=True)
class EncoderSource:
    """One way of producing per-tweet embeddings: built-in hashing or an LTEB file."""

    label: str
    spec: EncoderSpec
    lteb_path: str | None = None
    manifest_path: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    train: TrainConfig = TrainConfig()
    seeds: tuple[int, ...] = tuple(range(10))
    encode_seed: int = 0
    tweet_cap: int = 4000
    rule: str = "label_threshold"
    split_seed: int = 0
    workers: int = 1


@dataclass
class ReportRow:
    condition: str
    seed: int
    macro_f1: float
    accuracy: float


@dataclass
class ConditionAggregate:
    condition: str
    mean_f1: float
    min_f1: float
    max_f1: float
    mean_acc: float
    min_acc: float
    max_acc: float


@dataclass
class SweepPoint:
    series: str
    first_year: int
    mean_f1: float
    min_f1: float
    max_f1: float


@dataclass
class ExperimentReport:
    experiment_id: str
    rows: list[ReportRow] = field(default_factory=list)
    aggregates: list[ConditionAggregate] = field(default_factory=list)
    sweep: list[SweepPoint] = field(default_factory=list)


def aggregate_rows(rows: list[ReportRow]) -> list[ConditionAggregate]:
    by_condition: dict[str, list[ReportRow]] = {}
    for row in rows:
        by_condition.setdefault(row.condition, []).append(row)
    out = []
    for condition, group in by_condition.items():
        f1s = np.array([r.macro_f1 for r in group])
        accs = np.array([r.accuracy for r in group])
        out.append(
            ConditionAggregate(
                condition=condition,
                mean_f1=float(f1s.mean()), min_f1=float(f1s.min()), max_f1=float(f1s.max()),
                mean_acc=float(accs.mean()), min_acc=float(accs.min()), max_acc=float(accs.max()),
            )
        )
    return out


def compute_category_vectors(
    dataset: Dataset,
    category: str,
    source: EncoderSource,
    cap: int = 4000,
    encode_seed: int = 0,
):
    """Aggregated vector per (bg, year) cell for one category."""
    external = None
    if source.lteb_path is not None:
        digests = None
        if source.manifest_path is not None:
            from .encoding import read_manifest

            _, digests = read_manifest(source.manifest_path)
        try:
            external = load_embeddings(source.lteb_path, digests)
        except FileNotFoundError as exc:
            raise FileNotFoundError(
                f"encoder {source.label!r} needs embedding file {source.lteb_path}"
            ) from exc

    vectors = {}
    for (bg_id, year), entry in dataset.entries.items():
        if external is not None:
            key = (bg_id, year, category)
            if key not in external:
                raise KeyError(
                    f"embedding file {source.lteb_path} is missing cell {key} "
                    f"for encoder {source.label!r}"
                )
            matrix = external[key]
            if matrix.vectors.shape[1] != source.spec.dim:
                raise ValueError(
                    f"embedding file {source.lteb_path} has dim {matrix.vectors.shape[1]}, "
                    f"encoder {source.label!r} declares {source.spec.dim}"
                )
        else:
            subset, _ = sample_tweets(entry.tweets[category], cap=cap, seed=encode_seed)
            matrix = hash_encode_cell(subset, source.spec)
        vectors[(bg_id, year)] = aggregate(matrix)
    return vectors


def combine_vector_maps(maps: list[dict]) -> dict[tuple[str, int], np.ndarray]:
    """Sum category vector maps cell-wise (the multi-category input construction)."""
    combined = {}
    for key in maps[0]:
        agg = maps[0][key]
        for other in maps[1:]:
            agg = combine_categories(agg, other[key])
        combined[key] = agg.v_bar
    return combined


def compute_cell_vectors(
    dataset: Dataset,
    categories: tuple[str, ...],
    source: EncoderSource,
    cap: int = 4000,
    encode_seed: int = 0,
) -> dict[tuple[str, int], np.ndarray]:
    """Aggregated embedding per (bg, year) for a category set (summed across categories)."""
    return combine_vector_maps(
        [compute_category_vectors(dataset, c, source, cap, encode_seed) for c in categories]
    )


def assemble_arrays(
    dataset: Dataset,
    keys: list[tuple[str, int]],
    features: dict[tuple[str, int], np.ndarray],
) -> SupervisedArrays:
    return SupervisedArrays(
        keys=keys,
        x=np.stack([features[k] for k in keys]),
        adi=np.array([dataset.bgs[b].adi_norm for b, _ in keys]),
        g=np.array([dataset.entries[k].g for k in keys]),
        r=np.array([dataset.entries[k].r for k in keys], dtype=int),
        years=np.array([y for _, y in keys], dtype=int),
    )


def count_features(dataset: Dataset, keys, categories: tuple[str, ...], with_adi: bool) -> np.ndarray:
    rows = []
    for key in keys:
        counts = normalized_counts(dataset.entries[key])
        row = [counts[c] for c in categories]
        if with_adi:
            row.append(dataset.bgs[key[0]].adi_norm)
        rows.append(row)
    return np.array(rows)


def _head_rows(
    condition: str,
    train_arr: SupervisedArrays,
    val_arr: SupervisedArrays,
    test_arr: SupervisedArrays,
    thresholds,
    config: ExperimentConfig,
    use_adi: bool,
) -> list[ReportRow]:
    def run_seed(seed: int) -> ReportRow:
        result = train_head(
            train_arr, val_arr, thresholds,
            config.train.with_overrides(seed=seed),
            use_adi=use_adi, rule=config.rule,
        )
        ghat, _ = forward_batch(test_arr.x, test_arr.adi, result.params, use_adi)
        preds = predict_risk_by_year(ghat, test_arr.years, thresholds, rule=config.rule)
        return ReportRow(condition, seed, macro_f1(preds, test_arr.r), accuracy(preds, test_arr.r))

    # seeds are independent runs over read-only features; order is restored on collect
    if config.workers > 1 and len(config.seeds) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(run_seed, config.seeds))
    return [run_seed(seed) for seed in config.seeds]


def _regression_rows(
    condition: str,
    dataset: Dataset,
    split: SplitAssignment,
    categories: tuple[str, ...],
    with_adi: bool,
    config: ExperimentConfig,
    adi_only: bool = False,
) -> list[ReportRow]:
    """Count-based (or ADI-only) least squares, fit on the whole dev split."""
    dev_keys = split.entries_in("Train") + split.entries_in("Val")
    test_keys = split.entries_in("Test")
    thresholds = dataset.thresholds
    if adi_only:
        x_dev = np.array([[dataset.bgs[b].adi_norm] for b, _ in dev_keys])
        x_test = np.array([[dataset.bgs[b].adi_norm] for b, _ in test_keys])
    else:
        x_dev = count_features(dataset, dev_keys, categories, with_adi)
        x_test = count_features(dataset, test_keys, categories, with_adi)
    y_dev = np.array([dataset.entries[k].g for k in dev_keys])
    model = fit_count_lr(x_dev, y_dev)
    ghat = model.predict(x_test)
    years = np.array([y for _, y in test_keys], dtype=int)
    labels = np.array([dataset.entries[k].r for k in test_keys], dtype=int)
    preds = predict_risk_by_year(ghat, years, thresholds, rule=config.rule)
    f1, acc = macro_f1(preds, labels), accuracy(preds, labels)
    return [ReportRow(condition, seed, f1, acc) for seed in config.seeds]


def _classifier_rows(
    condition: str,
    kind: str,
    features: dict[tuple[str, int], np.ndarray],
    dataset: Dataset,
    split: SplitAssignment,
    config: ExperimentConfig,
) -> list[ReportRow]:
    train_arr = assemble_arrays(dataset, split.entries_in("Train"), features)
    val_arr = assemble_arrays(dataset, split.entries_in("Val"), features)
    test_arr = assemble_arrays(dataset, split.entries_in("Test"), features)
    rows = []
    for seed in config.seeds:
        clf = fit_classifier(
            kind, train_arr.x, train_arr.r,
            config=config.train.with_overrides(seed=seed),
            val_features=val_arr.x, val_labels=val_arr.r,
        )
        preds = clf.predict(test_arr.x)
        rows.append(ReportRow(condition, seed, macro_f1(preds, test_arr.r), accuracy(preds, test_arr.r)))
    return rows


def _majority_rows(condition: str, dataset: Dataset, split: SplitAssignment, config) -> list[ReportRow]:
    test_keys = split.entries_in("Test")
    labels = np.array([dataset.entries[k].r for k in test_keys], dtype=int)
    preds = np.zeros_like(labels)
    f1, acc = macro_f1(preds, labels), accuracy(preds, labels)
    return [ReportRow(condition, seed, f1, acc) for seed in config.seeds]


def _split_arrays(dataset, split, features):
    return (
        assemble_arrays(dataset, split.entries_in("Train"), features),
        assemble_arrays(dataset, split.entries_in("Val"), features),
        assemble_arrays(dataset, split.entries_in("Test"), features),
    )


def run_experiment(
    experiment_id: str,
    dataset: Dataset,
    encoder_sources: list[EncoderSource],
    config: ExperimentConfig,
) -> ExperimentReport:
    if experiment_id not in EXPERIMENT_IDS:
        raise ValueError(f"unknown experiment {experiment_id!r}; expected one of {EXPERIMENT_IDS}")
    if not encoder_sources:
        raise ValueError("need at least one encoder source")
    report = ExperimentReport(experiment_id=experiment_id)
    thresholds = dataset.thresholds

    if experiment_id == "Set1":
        split = forecasting_split(dataset, config.split_seed)
        source = encoder_sources[0]
        report.rows += _majority_rows("majority", dataset, split, config)
        report.rows += _regression_rows("adi-only", dataset, split, (), False, config, adi_only=True)
        by_category = {
            c: compute_category_vectors(dataset, c, source, config.tweet_cap, config.encode_seed)
            for c in ("MH", "FI", "General")
        }
        general = combine_vector_maps([by_category["General"]])
        report.rows += _classifier_rows("logreg-General", "LogReg", general, dataset, split, config)
        report.rows += _classifier_rows("svm-General", "SVM", general, dataset, split, config)
        for categories in COUNT_CONDITIONS:
            name = "+".join(categories)
            for with_adi in (False, True):
                label = f"count-{name}" + ("+ADI" if with_adi else "")
                report.rows += _regression_rows(label, dataset, split, categories, with_adi, config)
        for categories in TEXT_CONDITIONS:
            features = combine_vector_maps([by_category[c] for c in categories])
            train_arr, val_arr, test_arr = _split_arrays(dataset, split, features)
            name = "+".join(categories)
            for use_adi in (False, True):
                label = f"text-{name}" + ("+ADI" if use_adi else "")
                report.rows += _head_rows(label, train_arr, val_arr, test_arr, thresholds, config, use_adi)

    elif experiment_id == "Set2":
        split = forecasting_split(dataset, config.split_seed)
        for source in encoder_sources:
            features = compute_cell_vectors(dataset, ("General",), source, config.tweet_cap, config.encode_seed)
            train_arr, val_arr, test_arr = _split_arrays(dataset, split, features)
            report.rows += _head_rows(source.label, train_arr, val_arr, test_arr, thresholds, config, True)

    elif experiment_id in ("Set3", "Set4"):
        if experiment_id == "Set3":
            base_split = forecasting_split(dataset, config.split_seed)
            first_years = [y for y in dataset.years if y < max(dataset.years)]
        else:
            base_split = spatial_split(dataset, config.split_seed)
            first_years = list(dataset.years)
        for source in encoder_sources:
            features = compute_cell_vectors(dataset, ("General",), source, config.tweet_cap, config.encode_seed)
            for first_year in first_years:
                split = availability_window(base_split, first_year)
                train_arr, val_arr, test_arr = _split_arrays(dataset, split, features)
                label = f"{source.label}|{first_year}"
                report.rows += _head_rows(label, train_arr, val_arr, test_arr, thresholds, config, True)
        report.sweep = _sweep_points(report.rows)

    else:  # NortheastHoldout
        split = holdout_region_split(dataset, "Northeast", config.split_seed)
        source = encoder_sources[0]
        features = compute_cell_vectors(dataset, ("General",), source, config.tweet_cap, config.encode_seed)
        train_arr, val_arr, test_arr = _split_arrays(dataset, split, features)
        report.rows += _head_rows(source.label, train_arr, val_arr, test_arr, thresholds, config, True)

    report.aggregates = aggregate_rows(report.rows)
    return report


def _sweep_points(rows: list[ReportRow]) -> list[SweepPoint]:
    grouped: dict[tuple[str, int], list[float]] = {}
    for row in rows:
        series, first_year = row.condition.rsplit("|", 1)
        grouped.setdefault((series, int(first_year)), []).append(row.macro_f1)
    points = []
    for (series, first_year), f1s in sorted(grouped.items()):
        arr = np.array(f1s)
        points.append(SweepPoint(series, first_year, float(arr.mean()), float(arr.min()), float(arr.max())))
    return points


def emit_report(report: ExperimentReport, out_dir: str | Path) -> list[Path]:
    """Write metric tables, sweep plot data, figures, and a plain-text summary.

    Returns the list of files produced.  CSV floats use repr() so a round
    trip through read_report reproduces the in-memory report exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["experiment_id", "condition", "seed", "macro_f1", "accuracy"])
        for row in report.rows:
            writer.writerow([report.experiment_id, row.condition, row.seed, repr(row.macro_f1), repr(row.accuracy)])
    written.append(metrics_path)

    agg_path = out / "aggregates.csv"
    with open(agg_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([
            "experiment_id", "condition", "mean_f1", "min_f1", "max_f1",
            "mean_acc", "min_acc", "max_acc",
        ])
        for agg in report.aggregates:
            writer.writerow([
                report.experiment_id, agg.condition, repr(agg.mean_f1), repr(agg.min_f1),
                repr(agg.max_f1), repr(agg.mean_acc), repr(agg.min_acc), repr(agg.max_acc),
            ])
    written.append(agg_path)

    if report.sweep:
        sweep_path = out / "sweep.csv"
        with open(sweep_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["experiment_id", "series", "first_year", "mean_f1", "min_f1", "max_f1"])
            for pt in report.sweep:
                writer.writerow([
                    report.experiment_id, pt.series, pt.first_year,
                    repr(pt.mean_f1), repr(pt.min_f1), repr(pt.max_f1),
                ])
        written.append(sweep_path)

    written.append(_render_figure(report, out))

    summary_path = out / "summary.txt"
    lines = [f"experiment: {report.experiment_id}", f"rows: {len(report.rows)}", ""]
    for agg in sorted(report.aggregates, key=lambda a: -a.mean_f1):
        lines.append(
            f"{agg.condition:<28s} F1 {agg.mean_f1:.4f} [{agg.min_f1:.4f}, {agg.max_f1:.4f}]"
            f"  acc {agg.mean_acc:.2f}%"
        )
    summary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(summary_path)
    return written


def _render_figure(report: ExperimentReport, out: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if report.sweep:
        fig, ax = plt.subplots(figsize=(6, 4))
        series_names = sorted({pt.series for pt in report.sweep})
        for name in series_names:
            pts = sorted([p for p in report.sweep if p.series == name], key=lambda p: p.first_year)
            xs = [p.first_year for p in pts]
            ax.plot(xs, [p.mean_f1 for p in pts], marker="o", label=name)
            ax.fill_between(xs, [p.min_f1 for p in pts], [p.max_f1 for p in pts], alpha=0.2)
        ax.set_xlabel("first training year")
        ax.set_ylabel("macro-F1")
        ax.set_xticks(sorted({p.first_year for p in report.sweep}))
        ax.legend()
        ax.set_title(f"{report.experiment_id}: data availability sweep")
        path = out / f"{report.experiment_id.lower()}_sweep.png"
    else:
        fig, ax = plt.subplots(figsize=(7, max(2.5, 0.35 * max(len(report.aggregates), 1) + 1)))
        aggs = sorted(report.aggregates, key=lambda a: a.mean_f1)
        names = [a.condition for a in aggs]
        means = [a.mean_f1 for a in aggs]
        err_low = [max(a.mean_f1 - a.min_f1, 0.0) for a in aggs]
        err_high = [max(a.max_f1 - a.mean_f1, 0.0) for a in aggs]
        ax.barh(names, means, xerr=[err_low, err_high], color="#4878d0", height=0.6)
        ax.set_xlabel("macro-F1 (mean, min-max whiskers)")
        ax.set_title(f"{report.experiment_id}: condition comparison")
        path = out / f"{report.experiment_id.lower()}_conditions.png"
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def read_report(out_dir: str | Path, experiment_id: str) -> ExperimentReport:
    """Reconstruct a report from its emitted CSV files (round-trip oracle)."""
    out = Path(out_dir)
    report = ExperimentReport(experiment_id=experiment_id)
    with open(out / "metrics.csv", newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            report.rows.append(
                ReportRow(row["condition"], int(row["seed"]), float(row["macro_f1"]), float(row["accuracy"]))
            )
    with open(out / "aggregates.csv", newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            report.aggregates.append(
                ConditionAggregate(
                    row["condition"], float(row["mean_f1"]), float(row["min_f1"]), float(row["max_f1"]),
                    float(row["mean_acc"]), float(row["min_acc"]), float(row["max_acc"]),
                )
            )
    sweep_path = out / "sweep.csv"
    if sweep_path.exists():
        with open(sweep_path, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                report.sweep.append(
                    SweepPoint(
                        row["series"], int(row["first_year"]), float(row["mean_f1"]),
                        float(row["min_f1"]), float(row["max_f1"]),
                    )
                )
    return report
