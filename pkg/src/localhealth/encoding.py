"""Per-cell tweet sampling, the built-in hashing encoder, and mean aggregation.

Encoders are pluggable behind a file boundary: the hashing encoder keeps the
whole pipeline self-contained and deterministic, while externally computed
embeddings come in through LTEB files keyed by sample manifests.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import TweetRecord
from .seeding import rng_for

SAMPLE_CAP = 4000
SUPPORTED_DIMS = (256, 768, 1024, 1536)


@dataclass(frozen=True)
class EncoderSpec:
    kind: str  # "Hashing" or "ExternalFile"
    dim: int
    seq_len: int = 64
    identifier: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("Hashing", "ExternalFile"):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.dim < 16:
            raise ValueError(f"dim {self.dim} too small")
        if self.seq_len < 1 or self.seq_len & (self.seq_len - 1):
            raise ValueError(f"seq_len {self.seq_len} must be a power of two")
        if self.kind == "Hashing" and self.dim & (self.dim - 1):
            raise ValueError(f"hashing encoder needs a power-of-two dim, got {self.dim}")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Per-tweet vectors for one (bg, year, category) cell, rows in manifest order."""

    key: tuple[str, int, str]
    vectors: np.ndarray

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ValueError(f"vectors must be (n, dim) with n >= 1, got {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError(f"non-finite embedding values in cell {self.key}")


@dataclass(frozen=True)
class AggregatedVector:
    key: tuple[str, int, str]
    v_bar: np.ndarray


def sample_tweets(
    cell: list[TweetRecord], cap: int = SAMPLE_CAP, seed: int = 0
) -> tuple[list[TweetRecord], list[tuple[str, str]]]:
    """Uniform sample without replacement of min(cap, n) tweets from one cell.

    The draw is seeded per (bg, year, category, run seed), so a cell's sample
    is stable across runs and independent of its neighbors.  Returns the
    sampled records plus the (tweet_id, text) manifest in sampled order.
    """
    if not cell:
        raise ValueError("cannot sample from an empty cell")
    first = cell[0]
    if any((t.bg_id, t.year, t.category) != (first.bg_id, first.year, first.category) for t in cell):
        raise ValueError("cell mixes (bg, year, category) keys")
    rng = rng_for(seed, "sample", first.bg_id, first.year, first.category)
    perm = rng.permutation(len(cell))
    take = min(cap, len(cell))
    subset = [cell[i] for i in perm[:take]]
    manifest = [(t.tweet_id, t.text) for t in subset]
    return subset, manifest


_HASH_CACHE: dict[tuple[int, str], tuple[int, int]] = {}
_HASH_CACHE_LIMIT = 1 << 20


def _token_slot(token: str, dim: int) -> tuple[int, int]:
    """Stable (bucket, sign) for a token: blake2b-8 digest, low bit is the sign."""
    key = (dim, token)
    slot = _HASH_CACHE.get(key)
    if slot is None:
        h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")
        slot = ((h >> 1) % dim, 1 if h & 1 else -1)
        if len(_HASH_CACHE) >= _HASH_CACHE_LIMIT:
            _HASH_CACHE.clear()
        _HASH_CACHE[key] = slot
    return slot


def hash_encode(text: str, spec: EncoderSpec) -> np.ndarray:
    """Signed bag-of-tokens hash embedding, L2-normalized.

    Tokens are the first seq_len whitespace-split lowercased words; the
    construction is order-insensitive by design.
    """
    if spec.kind != "Hashing":
        raise ValueError("hash_encode requires a Hashing encoder spec")
    tokens = text.lower().split()[: spec.seq_len]
    if not tokens:
        raise ValueError(f"no tokens in text {text!r}")
    vec = np.zeros(spec.dim)
    for token in tokens:
        idx, sign = _token_slot(token, spec.dim)
        vec[idx] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # signed counts can cancel exactly; treat like the empty stream
        raise ValueError(f"hash embedding cancelled to zero for text {text!r}")
    return vec / norm


def hash_encode_cell(records: list[TweetRecord], spec: EncoderSpec) -> EmbeddingMatrix:
    first = records[0]
    vectors = np.stack([hash_encode(t.text, spec) for t in records])
    return EmbeddingMatrix(key=(first.bg_id, first.year, first.category), vectors=vectors)


def aggregate(matrix: EmbeddingMatrix) -> AggregatedVector:
    """Arithmetic mean over rows (the per-cell tweet-level pooling)."""
    return AggregatedVector(key=matrix.key, v_bar=matrix.vectors.mean(axis=0, dtype=float))


def combine_categories(v_mh: AggregatedVector, v_fi: AggregatedVector) -> AggregatedVector:
    """Elementwise sum (not mean) of two categories' aggregated vectors."""
    if v_mh.v_bar.shape != v_fi.v_bar.shape:
        raise ValueError(f"dim mismatch: {v_mh.v_bar.shape} vs {v_fi.v_bar.shape}")
    if v_mh.key[:2] != v_fi.key[:2]:
        raise ValueError(f"cannot combine different cells {v_mh.key} and {v_fi.key}")
    return AggregatedVector(
        key=(v_mh.key[0], v_mh.key[1], f"{v_mh.key[2]}+{v_fi.key[2]}"),
        v_bar=v_mh.v_bar + v_fi.v_bar,
    )


def manifest_line(bg_id: str, year: int, category: str, tweet_id: str, text: str) -> str:
    row = {"bg_id": bg_id, "year": year, "category": category, "tweet_id": tweet_id, "text": text}
    return json.dumps(row, ensure_ascii=False, separators=(",", ":"))


def cell_digest(lines: list[str]) -> str:
    """Hex SHA-256 over the cell's manifest lines (each line newline-terminated)."""
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def write_manifest(
    path: str | Path, cells: list[tuple[tuple[str, int, str], list[tuple[str, str]]]]
) -> dict[tuple[str, int, str], str]:
    """Write all cells' sampled rows as JSON lines plus a trailing whole-file digest.

    Returns per-cell digests keyed by (bg_id, year, category).
    """
    digests: dict[tuple[str, int, str], str] = {}
    file_hash = hashlib.sha256()
    with open(path, "w", encoding="utf-8") as f:
        for (bg_id, year, category), rows in cells:
            lines = [manifest_line(bg_id, year, category, tid, text) for tid, text in rows]
            digests[(bg_id, year, category)] = cell_digest(lines)
            for line in lines:
                f.write(line + "\n")
                file_hash.update(line.encode("utf-8"))
                file_hash.update(b"\n")
        f.write(file_hash.hexdigest() + "\n")
    return digests


def read_manifest(
    path: str | Path,
) -> tuple[dict[tuple[str, int, str], list[tuple[str, str]]], dict[tuple[str, int, str], str]]:
    """Parse a sample manifest back into per-cell rows and digests; verifies the file digest."""
    raw_lines = Path(path).read_text("utf-8").splitlines()
    if not raw_lines:
        raise ValueError(f"{path}: empty manifest")
    body, trailer = raw_lines[:-1], raw_lines[-1]
    file_hash = hashlib.sha256()
    for line in body:
        file_hash.update(line.encode("utf-8"))
        file_hash.update(b"\n")
    if file_hash.hexdigest() != trailer.strip():
        raise ValueError(f"{path}: manifest file digest mismatch")

    cells: dict[tuple[str, int, str], list[tuple[str, str]]] = {}
    cell_lines: dict[tuple[str, int, str], list[str]] = {}
    for line in body:
        obj = json.loads(line)
        key = (obj["bg_id"], int(obj["year"]), obj["category"])
        cells.setdefault(key, []).append((obj["tweet_id"], obj["text"]))
        cell_lines.setdefault(key, []).append(line)
    digests = {key: cell_digest(lines) for key, lines in cell_lines.items()}
    return cells, digests
