"""Dataset assembly, cleaning, risk labeling, and train/val/test split regimes.

The working unit is a (block group, year) cell holding the tweets collected per
category, the uncapped per-category tweet counts, the reported outcome fraction
g, and the derived binary risk label r.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .seeding import rng_for

log = logging.getLogger(__name__)

REGIONS = ("Northeast", "South", "Midwest", "West")
CATEGORIES = ("MH", "FI", "General")
SPLITS = ("Train", "Val", "Test", "Unassigned")

DEFAULT_YEARS = (2015, 2016, 2017, 2018, 2019)

# Default spatial-split shares: 320 of 765 block groups held out as the
# proxy-unreported test set, then 75/25 train/val over the remainder.
SPATIAL_TEST_FRAC = 320.0 / 765.0
SPATIAL_VAL_FRAC_OF_REST = 0.25


@dataclass(frozen=True)
class BlockGroup:
    """One census block group with its region, deprivation index, and geometry."""

    bg_id: str
    region: str
    adi: int
    population: int
    centroid: tuple[float, float]
    county_density: float

    def __post_init__(self) -> None:
        if self.region not in REGIONS:
            raise ValueError(f"unknown region {self.region!r} for bg {self.bg_id}")
        if not 1 <= self.adi <= 100:
            raise ValueError(f"adi {self.adi} out of range [1, 100] for bg {self.bg_id}")
        if self.population < 0:
            raise ValueError(f"negative population for bg {self.bg_id}")
        if self.county_density <= 0:
            raise ValueError(f"county_density must be > 0 for bg {self.bg_id}")

    @property
    def adi_bin(self) -> int:
        """Equal-width ADI decile: bin i covers ADI in [10i+1, 10(i+1)]."""
        return (self.adi - 1) // 10

    @property
    def adi_norm(self) -> float:
        return self.adi / 100.0


@dataclass(frozen=True, slots=True)
class TweetRecord:
    tweet_id: str
    text: str
    bg_id: str
    year: int
    category: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"empty text for tweet {self.tweet_id}")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r} for tweet {self.tweet_id}")


@dataclass
class DatasetEntry:
    """One (block group, year) cell: tweets per category, uncapped counts, outcome, label."""

    bg_id: str
    year: int
    tweets: dict[str, list[TweetRecord]]
    counts: dict[str, int]
    g: float
    r: int = 0

    @property
    def key(self) -> tuple[str, int]:
        return (self.bg_id, self.year)


@dataclass(frozen=True)
class RiskThreshold:
    """Per-year 75th-percentile threshold on the outcome fraction."""

    year: int
    tau: float


@dataclass
class BuildDiagnostics:
    duplicate_tweets: int = 0
    unknown_bg: int = 0
    out_of_window: int = 0
    count_fallbacks: int = 0
    dropped_missing_outcome: list[str] = field(default_factory=list)
    dropped_empty_cell: list[str] = field(default_factory=list)


@dataclass
class Dataset:
    """Cleaned dataset; immutable after build (all reads shareable across workers)."""

    entries: dict[tuple[str, int], DatasetEntry]
    bgs: dict[str, BlockGroup]
    years: tuple[int, ...]
    thresholds: dict[int, RiskThreshold]
    diagnostics: BuildDiagnostics = field(default_factory=BuildDiagnostics)

    @property
    def bg_ids(self) -> list[str]:
        return sorted(self.bgs)

    def entry(self, bg_id: str, year: int) -> DatasetEntry:
        return self.entries[(bg_id, year)]

    def __len__(self) -> int:
        return len(self.entries)


def percentile_75(values: np.ndarray) -> float:
    """75th percentile with linear interpolation between closest ranks (index = 0.75*(n-1))."""
    return float(np.percentile(np.asarray(values, dtype=float), 75))


def build_dataset(
    tweet_archive,
    outcome_table: dict[tuple[str, int], float],
    count_table: dict[tuple[str, int, str], int],
    bg_table: list[BlockGroup],
    years: tuple[int, ...] = DEFAULT_YEARS,
) -> Dataset:
    """Join the tweet archive with outcomes and counts and apply the cleaning rule.

    A block group is retained iff (a) it has an outcome for every year and
    (b) every (category, year) cell has at least one tweet.  Duplicate tweet
    ids are rejected with a diagnostic, unknown block groups and out-of-window
    years are skipped with counters, and any outcome outside [0, 1] is a hard
    error.
    """
    years = tuple(sorted(years))
    diags = BuildDiagnostics()
    bgs = {bg.bg_id: bg for bg in bg_table}
    if len(bgs) != len(bg_table):
        raise ValueError("duplicate bg_id in block-group table")

    for (bg_id, year), value in outcome_table.items():
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"outcome for ({bg_id}, {year}) is {value}, outside [0, 1]")

    cells: dict[tuple[str, int], dict[str, list[TweetRecord]]] = {}
    seen_ids: set[str] = set()
    for tweet in tweet_archive:
        if tweet.bg_id not in bgs:
            diags.unknown_bg += 1
            continue
        if tweet.year not in years:
            diags.out_of_window += 1
            continue
        if tweet.tweet_id in seen_ids:
            diags.duplicate_tweets += 1
            log.warning("rejected duplicate tweet_id %s", tweet.tweet_id)
            continue
        seen_ids.add(tweet.tweet_id)
        cell = cells.setdefault((tweet.bg_id, tweet.year), {k: [] for k in CATEGORIES})
        cell[tweet.category].append(tweet)

    retained: list[str] = []
    for bg_id in sorted(bgs):
        if any((bg_id, y) not in outcome_table for y in years):
            diags.dropped_missing_outcome.append(bg_id)
            continue
        complete = all(
            cells.get((bg_id, y), {}).get(cat) for y in years for cat in CATEGORIES
        )
        if not complete:
            diags.dropped_empty_cell.append(bg_id)
            continue
        retained.append(bg_id)

    entries: dict[tuple[str, int], DatasetEntry] = {}
    for bg_id in retained:
        for year in years:
            tweets = cells[(bg_id, year)]
            counts = {}
            for cat in CATEGORIES:
                if (bg_id, year, cat) in count_table:
                    counts[cat] = int(count_table[(bg_id, year, cat)])
                else:
                    counts[cat] = len(tweets[cat])
                    diags.count_fallbacks += 1
            entries[(bg_id, year)] = DatasetEntry(
                bg_id=bg_id, year=year, tweets=tweets, counts=counts,
                g=float(outcome_table[(bg_id, year)]),
            )

    dataset = Dataset(
        entries=dict(sorted(entries.items())),
        bgs={b: bgs[b] for b in retained},
        years=years,
        thresholds={},
        diagnostics=diags,
    )
    for year in years:
        g_values = np.array([entries[(b, year)].g for b in retained]) if retained else np.array([])
        if g_values.size == 0:
            continue
        tau = percentile_75(g_values)
        dataset.thresholds[year] = RiskThreshold(year=year, tau=tau)
        for bg_id in retained:
            entry = entries[(bg_id, year)]
            entry.r = int(entry.g >= tau)
    return dataset


def label_risk(dataset: Dataset, year: int) -> tuple[RiskThreshold, dict[str, int]]:
    """75th-percentile threshold for a year; r = 1 iff g >= tau (ties are high-risk)."""
    if year not in dataset.years:
        raise ValueError(f"year {year} not in dataset")
    g_by_bg = {b: dataset.entry(b, year).g for b in dataset.bg_ids}
    if len(g_by_bg) < 4:
        raise ValueError(f"need at least 4 retained block groups for year {year}, have {len(g_by_bg)}")
    tau = percentile_75(np.array(list(g_by_bg.values())))
    threshold = RiskThreshold(year=year, tau=tau)
    labels = {b: int(g >= tau) for b, g in g_by_bg.items()}
    return threshold, labels


def normalized_counts(entry: DatasetEntry) -> dict[str, float]:
    """MH and FI counts normalized by the uncapped all-tweet (General) count."""
    denom = entry.counts["General"]
    if denom <= 0:
        raise ValueError(f"general count is {denom} for {entry.key}; cannot normalize")
    return {k: entry.counts[k] / denom for k in ("MH", "FI")}


@dataclass
class SplitAssignment:
    """Entry-level split map; for the spatial regime also a block-group partition."""

    kind: str
    seed: int
    entry_split: dict[tuple[str, int], str]
    bg_split: dict[str, str] | None = None

    def entries_in(self, split: str) -> list[tuple[str, int]]:
        return sorted(k for k, s in self.entry_split.items() if s == split)


def _stratum_of(bg: BlockGroup) -> tuple[str, int]:
    return (bg.region, bg.adi_bin)


def _group_by_stratum(items, key_fn) -> dict[tuple, list]:
    groups: dict[tuple, list] = {}
    for item in items:
        groups.setdefault(key_fn(item), []).append(item)
    return dict(sorted(groups.items()))


def _largest_remainder(sizes: dict, total_target: int, weights: dict | None = None) -> dict:
    """Apportion total_target across strata proportionally to their sizes.

    Never allocates more than a stratum holds; any shortfall is redistributed
    to strata with remaining capacity (with a diagnostic).
    """
    keys = list(sizes)
    n_total = sum(sizes.values())
    if n_total == 0:
        return {k: 0 for k in keys}
    total_target = min(total_target, n_total)
    quotas = {k: total_target * sizes[k] / n_total for k in keys}
    alloc = {k: min(int(np.floor(quotas[k])), sizes[k]) for k in keys}
    remainder = total_target - sum(alloc.values())
    order = sorted(keys, key=lambda k: (-(quotas[k] - np.floor(quotas[k])), k))
    i = 0
    while remainder > 0 and i < 10 * len(keys):
        k = order[i % len(keys)]
        if alloc[k] < sizes[k]:
            alloc[k] += 1
            remainder -= 1
        i += 1
    if remainder > 0:
        log.warning("apportionment shortfall of %d; strata too small", remainder)
    return alloc


def forecasting_split(dataset: Dataset, seed: int, val_frac: float = 0.2) -> SplitAssignment:
    """Last year is the test set; earlier entries split 80/20 into train/val.

    The dev split is stratified by (region, ADI decile) and deterministic
    under the seed.
    """
    test_year = max(dataset.years)
    entry_split: dict[tuple[str, int], str] = {}
    dev_keys = []
    for key, entry in dataset.entries.items():
        if entry.year == test_year:
            entry_split[key] = "Test"
        else:
            dev_keys.append(key)

    groups = _group_by_stratum(dev_keys, lambda k: _stratum_of(dataset.bgs[k[0]]))
    for stratum, keys in groups.items():
        keys = sorted(keys)
        rng = rng_for(seed, "forecasting", stratum)
        perm = rng.permutation(len(keys))
        n_train = int(round((1.0 - val_frac) * len(keys)))
        for rank, idx in enumerate(perm):
            entry_split[keys[idx]] = "Train" if rank < n_train else "Val"
    return SplitAssignment(kind="forecasting", seed=seed, entry_split=entry_split)


def spatial_split(
    dataset: Dataset,
    seed: int,
    test_frac: float = SPATIAL_TEST_FRAC,
    val_frac_of_rest: float = SPATIAL_VAL_FRAC_OF_REST,
) -> SplitAssignment:
    """Partition block groups (not entries) into test/train/val, proportionally per stratum.

    Test block groups play the role of unreported neighborhoods: only their
    final-year entries are evaluated and they never appear in train or val.
    """
    test_year = max(dataset.years)
    bg_ids = dataset.bg_ids
    groups = _group_by_stratum(bg_ids, lambda b: _stratum_of(dataset.bgs[b]))
    sizes = {s: len(v) for s, v in groups.items()}

    n_test_target = int(round(test_frac * len(bg_ids)))
    test_alloc = _largest_remainder(sizes, n_test_target)
    rest_sizes = {s: sizes[s] - test_alloc[s] for s in sizes}
    n_val_target = int(round(val_frac_of_rest * sum(rest_sizes.values())))
    val_alloc = _largest_remainder(rest_sizes, n_val_target)

    bg_split: dict[str, str] = {}
    for stratum, members in groups.items():
        members = sorted(members)
        rng = rng_for(seed, "spatial", stratum)
        perm = rng.permutation(len(members))
        n_test, n_val = test_alloc[stratum], val_alloc[stratum]
        for rank, idx in enumerate(perm):
            if rank < n_test:
                bg_split[members[idx]] = "Test"
            elif rank < n_test + n_val:
                bg_split[members[idx]] = "Val"
            else:
                bg_split[members[idx]] = "Train"

    entry_split: dict[tuple[str, int], str] = {}
    for key, entry in dataset.entries.items():
        where = bg_split[entry.bg_id]
        if where == "Test":
            entry_split[key] = "Test" if entry.year == test_year else "Unassigned"
        else:
            entry_split[key] = where
    return SplitAssignment(kind="spatial", seed=seed, entry_split=entry_split, bg_split=bg_split)


def holdout_region_split(
    dataset: Dataset,
    region: str,
    seed: int,
    val_frac: float = 0.25,
) -> SplitAssignment:
    """Spatial-style split testing one whole region's final-year entries.

    All block groups of the held-out region are excluded from model
    development; the rest split ~75/25 into train/val per ADI decile.
    """
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}")
    test_year = max(dataset.years)
    bg_split: dict[str, str] = {}
    rest = [b for b in dataset.bg_ids if dataset.bgs[b].region != region]
    for b in dataset.bg_ids:
        if dataset.bgs[b].region == region:
            bg_split[b] = "Test"
    groups = _group_by_stratum(rest, lambda b: _stratum_of(dataset.bgs[b]))
    sizes = {s: len(v) for s, v in groups.items()}
    val_alloc = _largest_remainder(sizes, int(round(val_frac * len(rest))))
    for stratum, members in groups.items():
        members = sorted(members)
        rng = rng_for(seed, "holdout", region, stratum)
        perm = rng.permutation(len(members))
        for rank, idx in enumerate(perm):
            bg_split[members[idx]] = "Val" if rank < val_alloc[stratum] else "Train"

    entry_split: dict[tuple[str, int], str] = {}
    for key, entry in dataset.entries.items():
        where = bg_split[entry.bg_id]
        if where == "Test":
            entry_split[key] = "Test" if entry.year == test_year else "Unassigned"
        else:
            entry_split[key] = where
    return SplitAssignment(kind=f"holdout-{region}", seed=seed, entry_split=entry_split, bg_split=bg_split)


def availability_window(split: SplitAssignment, first_year: int) -> SplitAssignment:
    """Drop train/val entries earlier than first_year; the test set is untouched."""
    entry_split = dict(split.entry_split)
    n_train = 0
    for (bg_id, year), where in entry_split.items():
        if where in ("Train", "Val") and year < first_year:
            entry_split[(bg_id, year)] = "Unassigned"
        if entry_split[(bg_id, year)] == "Train":
            n_train += 1
    if n_train == 0:
        raise ValueError(f"availability window at {first_year} empties the training set")
    return SplitAssignment(
        kind=split.kind, seed=split.seed, entry_split=entry_split, bg_split=split.bg_split
    )
