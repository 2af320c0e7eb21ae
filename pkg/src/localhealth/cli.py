"""Command-line entry point for the surveillance pipeline.

Subcommands: sample-bgs, build-queries, synth, ingest, stats, encode, train,
evaluate, sweep, zeroshot.  Values resolve as defaults < config file < flags;
every run writes a manifest of produced files and the resolved configuration
snapshot under --out.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataio, geo, stats, synthgen, zeroshot
from .data import DEFAULT_YEARS, Dataset, build_dataset, forecasting_split
from .encoding import EncoderSpec, hash_encode_cell, sample_tweets, write_manifest
from .experiments import EncoderSource, ExperimentConfig, emit_report, run_experiment
from .lteb import FLAG_TOKEN_MEAN_POOLED, LtebRecord, write_embeddings
from .optim import TrainConfig
from .train import save_checkpoint, train_head
from .experiments import assemble_arrays, compute_cell_vectors

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class CliValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); route to exit code 1 instead
        raise CliValidationError(message)


def _diag(kind: str, detail: str) -> None:
    print(json.dumps({"error": kind, "detail": detail}), file=sys.stderr)
    print(f"localhealth: {kind} error: {detail}", file=sys.stderr)


class Run:
    """Resolved configuration plus output bookkeeping for one subcommand run."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config: dict = {}
        if args.config:
            path = Path(args.config)
            if not path.exists():
                raise CliValidationError(f"config file not found: {path}")
            self.config = json.loads(path.read_text("utf-8"))
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.snapshot: dict = {"command": args.command}
        self.files: list[Path] = []

    def get(self, key: str, flag_value, default):
        """Flag wins over config file wins over default; records the resolved value."""
        value = flag_value
        if value is None:
            value = self.config.get(key, default)
        self.snapshot[key] = value
        return value

    def path(self, key: str, flag_value, required: bool = True) -> Path | None:
        value = self.get(key, flag_value, None)
        if value is None:
            if required:
                raise CliValidationError(f"missing required path: --{key.replace('_', '-')}")
            return None
        path = Path(value)
        if not path.exists():
            raise CliValidationError(f"{key} file not found: {path}")
        return path

    def emit(self, name: str, writer) -> Path:
        path = self.out / name
        writer(path)
        self.files.append(path)
        return path

    def finish(self) -> None:
        snapshot_path = self.out / "config.snapshot.json"
        snapshot_path.write_text(json.dumps(self.snapshot, indent=2, default=str) + "\n", "utf-8")
        manifest = {
            "command": self.args.command,
            "files": sorted(str(p.relative_to(self.out)) for p in self.files),
            "config_snapshot": snapshot_path.name,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", "utf-8")


def _years(run: Run) -> tuple[int, ...]:
    raw = run.get("years", getattr(run.args, "years", None), list(DEFAULT_YEARS))
    if isinstance(raw, str):
        raw = [int(y) for y in raw.split(",")]
    return tuple(int(y) for y in raw)


def _seed(run: Run) -> int:
    return int(run.get("seed", run.args.seed, 0))


def _profile(run: Run) -> str:
    profile = run.get("profile", run.args.profile, "fidelity")
    if profile not in ("fidelity", "ci"):
        raise CliValidationError(f"unknown profile {profile!r}")
    return profile


def _train_config(run: Run, seed: int) -> TrainConfig:
    cfg = TrainConfig(
        epochs=int(run.get("train.epochs", getattr(run.args, "epochs", None), 1600)),
        batch=int(run.get("train.batch", None, 512)),
        peak_lr=float(run.get("train.peak_lr", None, 1e-3)),
        warmup_frac=float(run.get("train.warmup_frac", None, 0.2)),
        weight_decay=float(run.get("train.weight_decay", None, 0.1)),
        seed=seed,
    )
    if _profile(run) == "ci" and cfg.epochs > 200:
        cfg = cfg.with_overrides(epochs=200)
        run.snapshot["train.epochs"] = 200
    return cfg


def _eval_seeds(run: Run) -> tuple[int, ...]:
    raw = run.get("seeds", getattr(run.args, "seeds", None), list(range(10)))
    if isinstance(raw, str):
        raw = [int(s) for s in raw.split(",")]
    seeds = tuple(int(s) for s in raw)
    if _profile(run) == "ci" and len(seeds) > 3:
        seeds = seeds[:3]
        run.snapshot["seeds"] = list(seeds)
    return seeds


def _load_dataset(run: Run) -> Dataset:
    bg_path = run.path("bg_table", run.args.bg_table)
    archive_path = run.path("archive", run.args.archive)
    outcomes_path = run.path("outcomes", run.args.outcomes)
    counts_path = run.path("counts", run.args.counts)
    dataset = build_dataset(
        dataio.read_tweet_archive(archive_path),
        dataio.read_outcome_table(outcomes_path),
        dataio.read_count_table(counts_path),
        dataio.read_bg_table(bg_path),
        years=_years(run),
    )
    return dataset


def _encoder_sources(run: Run) -> list[EncoderSource]:
    """Encoder roster from config ("encoders": [...]) or a single hashing default."""
    default_dim = int(run.get("encoder.dim", getattr(run.args, "dim", None), 256))
    raw = run.config.get("encoders")
    if not raw:
        spec = EncoderSpec(kind="Hashing", dim=default_dim, identifier=f"hash-{default_dim}")
        return [EncoderSource(label=f"hash-{default_dim}", spec=spec)]
    sources = []
    for item in raw:
        kind = item.get("kind", "Hashing")
        dim = int(item.get("dim", default_dim))
        label = item.get("label", f"{kind.lower()}-{dim}")
        spec = EncoderSpec(kind=kind, dim=dim, seq_len=int(item.get("seq_len", 64)), identifier=label)
        sources.append(
            EncoderSource(
                label=label, spec=spec,
                lteb_path=item.get("lteb"), manifest_path=item.get("manifest"),
            )
        )
    run.snapshot["encoders"] = [s.label for s in sources]
    return sources


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample_bgs(run: Run) -> None:
    universe = dataio.read_bg_table(run.path("bg_table", run.args.bg_table))
    per_stratum = int(run.get("per_stratum", run.args.per_stratum, 25))
    sampled = geo.stratify_and_sample(universe, per_stratum, _seed(run))
    run.emit("sampled_bgs.csv", lambda p: dataio.write_bg_table(p, sampled))
    print(f"sampled {len(sampled)} block groups from universe of {len(universe)}")


def cmd_build_queries(run: Run) -> None:
    bgs = dataio.read_bg_table(run.path("bg_table", run.args.bg_table))
    keyword_path = run.get("keywords", run.args.keywords, None)
    table = geo.load_keyword_table(keyword_path)
    specs = [
        geo.build_query(bg, year, category, table)
        for bg in bgs
        for year in _years(run)
        for category in ("MH", "FI", "General")
    ]
    run.emit("queries.jsonl", lambda p: geo.write_query_specs(p, specs))
    print(f"wrote {len(specs)} query specs")


def cmd_synth(run: Run) -> None:
    seed = _seed(run)
    defaults = synthgen.SignalConfig()
    signal = synthgen.SignalConfig(
        n_bgs=int(run.get("synth.n_bgs", run.args.n_bgs, defaults.n_bgs)),
        years=_years(run),
        beta_text=float(run.get("synth.beta_text", run.args.beta_text, defaults.beta_text)),
        beta_adi=float(run.get("synth.beta_adi", run.args.beta_adi, defaults.beta_adi)),
        noise_sigma=float(run.get("synth.noise_sigma", run.args.noise_sigma, defaults.noise_sigma)),
        tweets_per_cell=tuple(run.get("synth.tweets_per_cell", None, list(defaults.tweets_per_cell))),
    )
    universe = synthgen.generate_universe(signal.n_bgs, seed)
    archive, outcomes, counts = synthgen.generate_corpus(universe, signal, seed)
    run.emit("bg_table.csv", lambda p: dataio.write_bg_table(p, universe))
    run.emit("tweets.jsonl", lambda p: dataio.write_tweet_archive(p, archive))
    run.emit("outcomes.csv", lambda p: dataio.write_outcome_table(p, outcomes))
    run.emit("counts.csv", lambda p: dataio.write_count_table(p, counts))
    print(f"synthesized {len(universe)} BGs, {len(archive)} tweets over years {signal.years}")


def cmd_ingest(run: Run) -> None:
    dataset = _load_dataset(run)
    diags = dataset.diagnostics
    report = {
        "retained_bgs": len(dataset.bgs),
        "entries": len(dataset.entries),
        "years": list(dataset.years),
        "dropped_missing_outcome": diags.dropped_missing_outcome,
        "dropped_empty_cell": diags.dropped_empty_cell,
        "duplicate_tweets": diags.duplicate_tweets,
        "unknown_bg": diags.unknown_bg,
        "out_of_window": diags.out_of_window,
        "thresholds": {y: t.tau for y, t in dataset.thresholds.items()},
    }
    run.emit("ingest_report.json", lambda p: p.write_text(json.dumps(report, indent=2) + "\n", "utf-8"))
    print(f"retained {len(dataset.bgs)} BGs / {len(dataset.entries)} entries")


def cmd_stats(run: Run) -> None:
    dataset = _load_dataset(run)
    if not dataset.bgs:
        raise CliValidationError("dataset is empty after cleaning; nothing to report")
    cells = stats.correlation_report(dataset)
    rows = stats.distribution_report(dataset)
    run.emit("correlations.csv", lambda p: stats.write_correlation_csv(p, cells))
    run.emit("correlations_matrix.csv", lambda p: stats.write_correlation_matrix_csv(p, cells))
    run.emit("distributions.csv", lambda p: stats.write_distribution_csv(p, rows))
    p75 = max(
        row.values[3] for row in rows if row.metric == "words_per_tweet"
    )
    seq_len = stats.derive_seq_len(int(np.ceil(p75)), 1.32)
    run.snapshot["suggested_seq_len"] = seq_len
    print(f"max words-per-tweet p75 = {p75:.0f}; suggested encoder sequence length = {seq_len}")


def cmd_encode(run: Run) -> None:
    dataset = _load_dataset(run)
    if not dataset.bgs:
        raise CliValidationError("dataset is empty after cleaning; nothing to encode")
    dim = int(run.get("encoder.dim", run.args.dim, 256))
    seq_len = int(run.get("encoder.seq_len", run.args.seq_len, 64))
    cap = int(run.get("encoder.cap", run.args.cap, 4000))
    spec = EncoderSpec(kind="Hashing", dim=dim, seq_len=seq_len, identifier=f"hash-{dim}")
    encode_seed = _seed(run)

    cells = []
    records = []
    for key in sorted(dataset.entries):
        entry = dataset.entries[key]
        for category in ("MH", "FI", "General"):
            subset, manifest_rows = sample_tweets(entry.tweets[category], cap=cap, seed=encode_seed)
            cells.append(((entry.bg_id, entry.year, category), manifest_rows))
            records.append((subset, (entry.bg_id, entry.year, category)))

    manifest_path = run.out / "samples.manifest.jsonl"
    digests = write_manifest(manifest_path, cells)
    run.files.append(manifest_path)

    lteb_records = []
    for subset, key in records:
        matrix = hash_encode_cell(subset, spec)
        lteb_records.append(
            LtebRecord(key[0], key[1], key[2], digests[key], matrix.vectors.astype(np.float32))
        )
    lteb_path = run.out / "embeddings.lteb"
    write_embeddings(lteb_path, lteb_records, dim=dim, flags=FLAG_TOKEN_MEAN_POOLED)
    run.files.append(lteb_path)
    print(f"encoded {len(lteb_records)} cells at dim {dim} (cap {cap})")


def cmd_train(run: Run) -> None:
    dataset = _load_dataset(run)
    seed = _seed(run)
    split = forecasting_split(dataset, seed)
    source = _encoder_sources(run)[0]
    categories = tuple(run.get("train.categories", run.args.categories, "General").split("+"))
    use_adi = bool(run.get("train.use_adi", None if run.args.use_adi is None else run.args.use_adi, True))
    features = compute_cell_vectors(dataset, categories, source, encode_seed=seed)
    train_arr = assemble_arrays(dataset, split.entries_in("Train"), features)
    val_arr = assemble_arrays(dataset, split.entries_in("Val"), features)
    config = _train_config(run, seed)
    result = train_head(train_arr, val_arr, dataset.thresholds, config, use_adi=use_adi)
    run.emit("checkpoint.json", lambda p: save_checkpoint(p, result, config, use_adi))

    def write_trace(path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("epoch,train_mse,val_f1\n")
            for stat in result.trace:
                f.write(f"{stat.epoch},{stat.train_mse!r},{stat.val_f1!r}\n")

    run.emit("trace.csv", write_trace)
    print(f"best epoch {result.best_epoch} with validation macro-F1 {result.best_val_f1:.4f}")


def _experiment_config(run: Run, seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        train=_train_config(run, seed),
        seeds=_eval_seeds(run),
        encode_seed=seed,
        rule=str(run.get("rule", None, "label_threshold")),
        split_seed=seed,
        workers=int(run.get("workers", run.args.workers, 1)),
    )


def cmd_evaluate(run: Run) -> None:
    experiment = {
        "set1": "Set1", "set2": "Set2", "northeast": "NortheastHoldout",
    }.get(run.args.experiment)
    if experiment is None:
        raise CliValidationError(f"unknown experiment {run.args.experiment!r}")
    dataset = _load_dataset(run)
    report = run_experiment(experiment, dataset, _encoder_sources(run), _experiment_config(run, _seed(run)))
    files = emit_report(report, run.out / f"report_{experiment.lower()}")
    run.files += files
    print(f"{experiment}: {len(report.rows)} rows, {len(report.aggregates)} conditions")


def cmd_sweep(run: Run) -> None:
    experiment = {"3": "Set3", "4": "Set4"}.get(str(run.args.set))
    if experiment is None:
        raise CliValidationError(f"--set must be 3 or 4, got {run.args.set!r}")
    dataset = _load_dataset(run)
    report = run_experiment(experiment, dataset, _encoder_sources(run), _experiment_config(run, _seed(run)))
    files = emit_report(report, run.out / f"report_{experiment.lower()}")
    run.files += files
    windows = sorted({pt.first_year for pt in report.sweep})
    print(f"{experiment}: sweep over first years {windows}")


def cmd_zeroshot(run: Run) -> None:
    dataset = _load_dataset(run)
    endpoint = run.get("zeroshot.endpoint", run.args.endpoint, None)
    model = run.get("zeroshot.model", run.args.model, None)
    if not endpoint or not model:
        raise CliValidationError("zeroshot requires --endpoint and --model (or config values)")
    year = int(run.get("zeroshot.year", run.args.year, max(dataset.years)))
    limit = run.get("zeroshot.limit", run.args.limit, None)
    client = zeroshot.HttpChatClient(endpoint=endpoint, model=model)
    bg_ids = dataset.bg_ids if limit is None else dataset.bg_ids[: int(limit)]
    seed = _seed(run)

    rows = []
    for bg_id in bg_ids:
        entry = dataset.entry(bg_id, year)
        packet = zeroshot.classify_bg(
            entry.tweets["General"], dataset.bgs[bg_id].adi, client, seed,
            max_in_flight=int(run.get("workers", run.args.workers, 8)),
        )
        counts = packet.counts
        rows.append((bg_id, year, counts["A"], counts["B"], counts["Unparseable"], packet.verdict, entry.r))

    def write_votes(path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("bg_id,year,n_a,n_b,n_unparseable,verdict,label\n")
            for row in rows:
                f.write(",".join(str(v) for v in row) + "\n")

    run.emit("votes.csv", write_votes)
    from .metrics import accuracy, macro_f1

    preds = np.array([r[5] for r in rows])
    labels = np.array([r[6] for r in rows])
    print(f"zero-shot macro-F1 {macro_f1(preds, labels):.4f}, accuracy {accuracy(preds, labels):.2f}%")


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="localhealth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
        p.add_argument("--profile", choices=["fidelity", "ci"], default=None)
        p.add_argument("--workers", type=int, default=None, help="worker pool size")

    def dataset_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--bg-table", dest="bg_table")
        p.add_argument("--archive")
        p.add_argument("--outcomes")
        p.add_argument("--counts")
        p.add_argument("--years", help="comma-separated years (default 2015..2019)")

    p = sub.add_parser("sample-bgs", help="stratified block-group sample from a universe table")
    common(p)
    p.add_argument("--bg-table", dest="bg_table", help="universe block-group CSV")
    p.add_argument("--per-stratum", dest="per_stratum", type=int, default=None)
    p.set_defaults(func=cmd_sample_bgs)

    p = sub.add_parser("build-queries", help="emit collection query specs for sampled BGs")
    common(p)
    p.add_argument("--bg-table", dest="bg_table")
    p.add_argument("--years")
    p.add_argument("--keywords", help="override the bundled keyword table")
    p.set_defaults(func=cmd_build_queries)

    p = sub.add_parser("synth", help="generate a synthetic universe and corpus")
    common(p)
    p.add_argument("--n-bgs", dest="n_bgs", type=int, default=None)
    p.add_argument("--years")
    p.add_argument("--beta-text", dest="beta_text", type=float, default=None)
    p.add_argument("--beta-adi", dest="beta_adi", type=float, default=None)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="build and validate the dataset; report cleaning results")
    common(p)
    dataset_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="correlation and distribution reports")
    common(p)
    dataset_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("encode", help="sample cells, write manifest and hashed embeddings")
    common(p)
    dataset_flags(p)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--seq-len", dest="seq_len", type=int, default=None)
    p.add_argument("--cap", type=int, default=None)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train one head on the forecasting split")
    common(p)
    dataset_flags(p)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--categories", default=None, help='e.g. "General" or "MH+FI"')
    p.add_argument("--use-adi", dest="use_adi", action="store_true", default=None)
    p.add_argument("--no-adi", dest="use_adi", action="store_false")
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run an experiment suite and emit its report")
    common(p)
    dataset_flags(p)
    p.add_argument("--experiment", required=True, choices=["set1", "set2", "northeast"])
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated training seeds")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="data-availability sweep (Set 3 or 4)")
    common(p)
    dataset_flags(p)
    p.add_argument("--set", required=True, choices=["3", "4"])
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seeds", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("zeroshot", help="vote-based zero-shot classification via a chat endpoint")
    common(p)
    dataset_flags(p)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--year", type=int, default=None)
    p.add_argument("--limit", type=int, default=None, help="classify only the first N BGs")
    p.set_defaults(func=cmd_zeroshot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliValidationError as exc:
        _diag("validation", str(exc))
        return EXIT_VALIDATION
    try:
        run = Run(args)
        args.func(run)
        run.finish()
        return EXIT_OK
    except (CliValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        _diag("validation", str(exc))
        return EXIT_VALIDATION
    except ValueError as exc:
        _diag("validation", str(exc))
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - boundary
        _diag("runtime", f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
