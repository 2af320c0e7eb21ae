"""Readers and writers for the pipeline's delimited input files.

Formats:
  tweet archive  JSON lines, one record per line:
                 {"tweet_id","text","bg_id","year","category"}
  outcome table  CSV header "bg_id,year,value,unit", unit in {percent, fraction}
  count table    CSV header "bg_id,year,category,count"
  bg table       CSV header "bg_id,region,adi,population,lat,lon,county_density"
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterator

from .data import CATEGORIES, BlockGroup, TweetRecord

TWEET_FIELDS = ("tweet_id", "text", "bg_id", "year", "category")


def read_tweet_archive(path: str | Path) -> Iterator[TweetRecord]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            missing = [k for k in TWEET_FIELDS if k not in obj]
            if missing:
                raise ValueError(f"{path}:{lineno}: missing fields {missing}")
            yield TweetRecord(
                tweet_id=str(obj["tweet_id"]),
                text=str(obj["text"]),
                bg_id=str(obj["bg_id"]),
                year=int(obj["year"]),
                category=str(obj["category"]),
            )


def write_tweet_archive(path: str | Path, tweets) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for t in tweets:
            row = {
                "tweet_id": t.tweet_id, "text": t.text, "bg_id": t.bg_id,
                "year": t.year, "category": t.category,
            }
            f.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")) + "\n")
            n += 1
    return n


def read_outcome_table(path: str | Path) -> dict[tuple[str, int], float]:
    """Outcome fractions keyed by (bg_id, year); percent-unit rows are divided by 100."""
    table: dict[tuple[str, int], float] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        _require_columns(reader, path, ("bg_id", "year", "value", "unit"))
        for row in reader:
            value = float(row["value"])
            unit = row["unit"].strip().lower()
            if unit == "percent":
                value /= 100.0
            elif unit != "fraction":
                raise ValueError(f"{path}: unknown unit {row['unit']!r}")
            table[(row["bg_id"], int(row["year"]))] = value
    return table


def write_outcome_table(path: str | Path, table: dict[tuple[str, int], float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["bg_id", "year", "value", "unit"])
        for (bg_id, year), value in sorted(table.items()):
            writer.writerow([bg_id, year, repr(float(value)), "fraction"])


def read_count_table(path: str | Path) -> dict[tuple[str, int, str], int]:
    table: dict[tuple[str, int, str], int] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        _require_columns(reader, path, ("bg_id", "year", "category", "count"))
        for row in reader:
            if row["category"] not in CATEGORIES:
                raise ValueError(f"{path}: unknown category {row['category']!r}")
            table[(row["bg_id"], int(row["year"]), row["category"])] = int(row["count"])
    return table


def write_count_table(path: str | Path, table: dict[tuple[str, int, str], int]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["bg_id", "year", "category", "count"])
        for (bg_id, year, category), count in sorted(table.items()):
            writer.writerow([bg_id, year, category, count])


def read_bg_table(path: str | Path) -> list[BlockGroup]:
    bgs: list[BlockGroup] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        _require_columns(
            reader, path, ("bg_id", "region", "adi", "population", "lat", "lon", "county_density")
        )
        for row in reader:
            bgs.append(
                BlockGroup(
                    bg_id=row["bg_id"],
                    region=row["region"],
                    adi=int(row["adi"]),
                    population=int(row["population"]),
                    centroid=(float(row["lat"]), float(row["lon"])),
                    county_density=float(row["county_density"]),
                )
            )
    return bgs


def write_bg_table(path: str | Path, bgs: list[BlockGroup]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["bg_id", "region", "adi", "population", "lat", "lon", "county_density"])
        for bg in sorted(bgs, key=lambda b: b.bg_id):
            writer.writerow([
                bg.bg_id, bg.region, bg.adi, bg.population,
                repr(bg.centroid[0]), repr(bg.centroid[1]), repr(bg.county_density),
            ])


def _require_columns(reader: csv.DictReader, path, columns) -> None:
    have = reader.fieldnames or []
    missing = [c for c in columns if c not in have]
    if missing:
        raise ValueError(f"{path}: missing columns {missing} (have {have})")
