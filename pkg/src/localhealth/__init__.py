"""Neighborhood-level health surveillance from locally posted short texts.

The pipeline: stratified block-group sampling and query construction, corpus
assembly and cleaning against reported outcomes, correlation analysis,
frozen-embedding encoding and aggregation, a tiny convolutional regression
head with deprivation-index fusion, baselines, experiment suites, and a
zero-shot voting protocol.
"""

from .data import (
    BlockGroup,
    Dataset,
    DatasetEntry,
    RiskThreshold,
    SplitAssignment,
    TweetRecord,
    availability_window,
    build_dataset,
    forecasting_split,
    label_risk,
    normalized_counts,
    spatial_split,
)
from .encoding import (
    AggregatedVector,
    EmbeddingMatrix,
    EncoderSpec,
    aggregate,
    combine_categories,
    hash_encode,
    sample_tweets,
)
from .experiments import (
    EncoderSource,
    ExperimentConfig,
    ExperimentReport,
    emit_report,
    run_experiment,
)
from .geo import QuerySpec, build_query, collection_radius, load_keyword_table, stratify_and_sample
from .head import HeadParams, head_backward, head_forward, param_count
from .lteb import LtebRecord, load_embeddings, write_embeddings
from .metrics import accuracy, macro_f1, predict_risk, predict_risk_by_year
from .optim import OptimizerState, TrainConfig, adamw_step, lr_schedule
from .stats import correlation_report, derive_seq_len, distribution_report, pearson
from .synthgen import SignalConfig, generate_corpus, generate_universe
from .train import CountModel, fit_classifier, fit_count_lr, train_head
from .zeroshot import VotePacket, build_prompt, classify_bg, parse_response

__version__ = "0.1.0"

__all__ = [
    "AggregatedVector", "BlockGroup", "CountModel", "Dataset", "DatasetEntry",
    "EmbeddingMatrix", "EncoderSource", "EncoderSpec", "ExperimentConfig",
    "ExperimentReport", "HeadParams", "LtebRecord", "OptimizerState", "QuerySpec",
    "RiskThreshold", "SignalConfig", "SplitAssignment", "TrainConfig", "TweetRecord",
    "VotePacket", "accuracy", "adamw_step", "aggregate", "availability_window",
    "build_dataset", "build_prompt", "build_query", "classify_bg", "collection_radius",
    "combine_categories", "correlation_report", "derive_seq_len", "distribution_report",
    "emit_report", "fit_classifier", "fit_count_lr", "forecasting_split", "generate_corpus",
    "generate_universe", "hash_encode", "head_backward", "head_forward", "label_risk",
    "load_embeddings", "load_keyword_table", "lr_schedule", "macro_f1", "normalized_counts",
    "param_count", "parse_response", "pearson", "predict_risk", "predict_risk_by_year",
    "run_experiment", "sample_tweets", "spatial_split", "stratify_and_sample", "train_head",
    "write_embeddings",
]
