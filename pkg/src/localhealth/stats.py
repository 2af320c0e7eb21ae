"""Correlation grids, distribution tables, and the sequence-length rule.

The Pearson p-value is two-sided, computed through the regularized incomplete
beta function (continued-fraction evaluation) rather than an external stats
dependency, so the library stays numpy-only at runtime.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from math import exp, lgamma, log
from pathlib import Path

import numpy as np

from .data import CATEGORIES, Dataset

PERCENTILE_POINTS = (0, 25, 50, 75, 100)
CORRELATION_VARIABLES = ("MH_count", "FI_count", "General_count", "ADI")

_BETACF_MAX_ITER = 300
_BETACF_EPS = 3e-16
_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz iteration)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise RuntimeError(f"incomplete beta failed to converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]; absolute error below 1e-10."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_bt = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log(1.0 - x)
    bt = exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def pearson(x, y) -> tuple[float, float]:
    """Sample Pearson r and its two-sided p-value.

    p comes from t = r*sqrt((n-2)/(1-r^2)) against a t distribution with n-2
    degrees of freedom, which reduces to I_{1-r^2}((n-2)/2, 1/2).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 samples")
    xm = x - x.mean()
    ym = y - y.mean()
    sx = float(np.sqrt(np.dot(xm, xm)))
    sy = float(np.sqrt(np.dot(ym, ym)))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined for a constant vector")
    r = float(np.dot(xm, ym) / (sx * sy))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    p = regularized_incomplete_beta((n - 2) / 2.0, 0.5, 1.0 - r * r)
    return r, min(1.0, max(0.0, p))


@dataclass(frozen=True)
class CorrelationCell:
    year: int
    variable: str
    r: float
    p: float
    n: int


def correlation_report(dataset: Dataset) -> list[CorrelationCell]:
    """Per-year correlation of the outcome against raw tweet counts and ADI."""
    if not dataset.bgs:
        raise ValueError("empty dataset")
    cells = []
    bg_ids = dataset.bg_ids
    for year in dataset.years:
        g = np.array([dataset.entry(b, year).g for b in bg_ids])
        series = {
            "MH_count": np.array([dataset.entry(b, year).counts["MH"] for b in bg_ids], dtype=float),
            "FI_count": np.array([dataset.entry(b, year).counts["FI"] for b in bg_ids], dtype=float),
            "General_count": np.array(
                [dataset.entry(b, year).counts["General"] for b in bg_ids], dtype=float
            ),
            "ADI": np.array([dataset.bgs[b].adi for b in bg_ids], dtype=float),
        }
        for variable in CORRELATION_VARIABLES:
            r, p = pearson(series[variable], g)
            cells.append(CorrelationCell(year=year, variable=variable, r=r, p=p, n=len(bg_ids)))
    return cells


@dataclass(frozen=True)
class PercentileRow:
    metric: str
    category: str
    year: int
    values: tuple[float, float, float, float, float]


def distribution_report(dataset: Dataset) -> list[PercentileRow]:
    """Percentiles of words per tweet, tweets per block group, and the outcome."""
    if not dataset.bgs:
        raise ValueError("empty dataset")
    rows = []
    for category in CATEGORIES:
        for year in dataset.years:
            word_counts, cell_sizes = [], []
            for bg_id in dataset.bg_ids:
                cell = dataset.entry(bg_id, year).tweets[category]
                cell_sizes.append(len(cell))
                word_counts.extend(len(t.text.split()) for t in cell)
            rows.append(
                PercentileRow("words_per_tweet", category, year, _pcts(word_counts))
            )
            rows.append(PercentileRow("tweets_per_bg", category, year, _pcts(cell_sizes)))
    for year in dataset.years:
        g = [dataset.entry(b, year).g for b in dataset.bg_ids]
        rows.append(PercentileRow("outcome", "-", year, _pcts(g)))
    return rows


def _pcts(values) -> tuple[float, float, float, float, float]:
    arr = np.asarray(values, dtype=float)
    return tuple(float(np.percentile(arr, q)) for q in PERCENTILE_POINTS)


def derive_seq_len(p75_words: int, tokens_per_word: float) -> int:
    """Smallest power of two covering the estimated token count of a p75-length tweet."""
    if p75_words < 1 or tokens_per_word <= 0:
        raise ValueError("p75_words must be >= 1 and tokens_per_word > 0")
    estimate = p75_words * tokens_per_word
    power = 1
    while power < estimate:
        power <<= 1
    return power


def write_correlation_csv(path: str | Path, cells: list[CorrelationCell]) -> None:
    """Tidy cell-per-row CSV plus nothing else; see write_correlation_matrix_csv for the grid."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["year", "variable", "r", "p", "n"])
        for c in cells:
            writer.writerow([c.year, c.variable, repr(c.r), repr(c.p), c.n])


def write_correlation_matrix_csv(path: str | Path, cells: list[CorrelationCell]) -> None:
    by_year: dict[int, dict[str, float]] = {}
    for c in cells:
        by_year.setdefault(c.year, {})[c.variable] = c.r
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["year", "MH", "FI", "General", "ADI"])
        for year in sorted(by_year):
            row = by_year[year]
            writer.writerow(
                [year] + [f"{row[v]:.4f}" for v in CORRELATION_VARIABLES]
            )


def write_distribution_csv(path: str | Path, rows: list[PercentileRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "category", "year", "p0", "p25", "p50", "p75", "p100"])
        for row in rows:
            writer.writerow([row.metric, row.category, row.year] + [repr(v) for v in row.values])
