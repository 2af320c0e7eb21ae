"""Sample-manifest reader.

Format: JSON lines {"bg_id","year","category","tweet_id","text"} grouped by
cell in sampled order, with a trailing line holding the hex SHA-256 of all
prior lines.  Per-cell digests cover just that cell's lines (newline
terminated), and must be carried verbatim into the LTEB records.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

CellKey = tuple[str, int, str]


class ManifestError(ValueError):
    pass


def read_manifest(path: str | Path) -> tuple[dict[CellKey, list[tuple[str, str]]], dict[CellKey, str]]:
    """Rows and digests per (bg_id, year, category); verifies the file digest."""
    raw = Path(path).read_text("utf-8").splitlines()
    if len(raw) < 2:
        raise ManifestError(f"{path}: manifest too short")
    body, trailer = raw[:-1], raw[-1].strip()
    file_hash = hashlib.sha256()
    for line in body:
        file_hash.update(line.encode("utf-8"))
        file_hash.update(b"\n")
    if file_hash.hexdigest() != trailer:
        raise ManifestError(f"{path}: file digest mismatch")

    cells: dict[CellKey, list[tuple[str, str]]] = {}
    hashes: dict[CellKey, "hashlib._Hash"] = {}
    for lineno, line in enumerate(body, start=1):
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        missing = [k for k in ("bg_id", "year", "category", "tweet_id", "text") if k not in row]
        if missing:
            raise ManifestError(f"{path}:{lineno}: missing fields {missing}")
        key = (str(row["bg_id"]), int(row["year"]), str(row["category"]))
        cells.setdefault(key, []).append((str(row["tweet_id"]), str(row["text"])))
        cell_hash = hashes.setdefault(key, hashlib.sha256())
        cell_hash.update(line.encode("utf-8"))
        cell_hash.update(b"\n")
    digests = {key: h.hexdigest() for key, h in hashes.items()}
    return cells, digests
