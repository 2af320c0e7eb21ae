"""Stratified block-group sampling and collection-query construction.

Strata are the cross of four census regions and ten equal-width ADI deciles
(40 strata).  A query is a keyword list plus a circle whose radius scales the
block group's population against its county's density, clamped to [2, 10]
miles.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .data import CATEGORIES, REGIONS, BlockGroup
from .seeding import rng_for

log = logging.getLogger(__name__)

RADIUS_MIN_MILES = 2.0
RADIUS_MAX_MILES = 10.0
GENERAL_CAP = 1000

ALL_STRATA = tuple((region, b) for region in REGIONS for b in range(10))


@dataclass(frozen=True)
class Stratum:
    region: str
    adi_bin: int

    def __post_init__(self) -> None:
        if self.region not in REGIONS or not 0 <= self.adi_bin <= 9:
            raise ValueError(f"invalid stratum ({self.region}, {self.adi_bin})")


@dataclass(frozen=True)
class QuerySpec:
    """One collection request: keywords + circle + per-BG cap (General only)."""

    bg_id: str
    year: int
    category: str
    keywords: tuple[str, ...]
    center: tuple[float, float]
    radius_miles: float
    max_results: int | None = None

    def __post_init__(self) -> None:
        if not self.keywords:
            raise ValueError("keywords must be non-empty")
        if not RADIUS_MIN_MILES <= self.radius_miles <= RADIUS_MAX_MILES:
            raise ValueError(f"radius {self.radius_miles} outside [{RADIUS_MIN_MILES}, {RADIUS_MAX_MILES}]")
        if (self.category == "General") != (self.max_results == GENERAL_CAP):
            raise ValueError("max_results must be 1000 exactly for General queries")


def load_keyword_table(path: str | Path | None = None) -> dict[str, list[str]]:
    """Keyword lists per category, from the bundled data file unless overridden."""
    if path is None:
        text = resources.files("localhealth").joinpath("resources").joinpath("keywords.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    table = json.loads(text)
    missing = [c for c in CATEGORIES if c not in table]
    if missing:
        raise ValueError(f"keyword table missing categories {missing}")
    return {c: list(table[c]) for c in CATEGORIES}


def stratify_and_sample(
    bg_universe: list[BlockGroup], per_stratum: int, seed: int
) -> list[BlockGroup]:
    """Draw per_stratum block groups uniformly without replacement from each stratum.

    A stratum smaller than per_stratum is taken whole, with a diagnostic.
    Deterministic under the seed; output sorted by (region, adi_bin, bg_id).
    """
    if per_stratum < 1:
        raise ValueError("per_stratum must be >= 1")
    if not bg_universe:
        raise ValueError("empty block-group universe")

    by_stratum: dict[tuple[str, int], list[BlockGroup]] = {s: [] for s in ALL_STRATA}
    for bg in bg_universe:
        by_stratum[(bg.region, bg.adi_bin)].append(bg)

    sampled: list[BlockGroup] = []
    for stratum in ALL_STRATA:
        members = sorted(by_stratum[stratum], key=lambda b: b.bg_id)
        if not members:
            continue
        if len(members) <= per_stratum:
            if len(members) < per_stratum:
                log.warning(
                    "stratum %s has only %d members (< %d); taking all",
                    stratum, len(members), per_stratum,
                )
            sampled.extend(members)
            continue
        rng = rng_for(seed, "stratify", stratum)
        idx = rng.choice(len(members), size=per_stratum, replace=False)
        sampled.extend(members[i] for i in sorted(idx))
    return sampled


def collection_radius(population: int, county_density: float) -> float:
    """Circle radius in miles from BG population spread at county density, clamped to [2, 10]."""
    if county_density <= 0:
        raise ValueError("county density must be positive")
    if population < 0:
        raise ValueError("population must be non-negative")
    raw = math.sqrt(population / (math.pi * county_density))
    return min(max(raw, RADIUS_MIN_MILES), RADIUS_MAX_MILES)


def build_query(
    bg: BlockGroup, year: int, category: str, keyword_table: dict[str, list[str]]
) -> QuerySpec:
    """Query spec for one (block group, year, category); keywords are used verbatim."""
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}")
    return QuerySpec(
        bg_id=bg.bg_id,
        year=year,
        category=category,
        keywords=tuple(keyword_table[category]),
        center=bg.centroid,
        radius_miles=collection_radius(bg.population, bg.county_density),
        max_results=GENERAL_CAP if category == "General" else None,
    )


def write_query_specs(path: str | Path, specs: list[QuerySpec]) -> int:
    """JSON lines, one spec per line; radius serialized with 6 decimal places."""
    with open(path, "w", encoding="utf-8") as f:
        for spec in specs:
            row = {
                "bg_id": spec.bg_id,
                "year": spec.year,
                "category": spec.category,
                "keywords": list(spec.keywords),
                "center": [spec.center[0], spec.center[1]],
                "radius_miles": round(spec.radius_miles, 6),
                "max_results": spec.max_results,
            }
            f.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")
    return len(specs)
