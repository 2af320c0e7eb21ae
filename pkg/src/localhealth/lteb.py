"""LTEB: the bit-exact binary interchange format for per-tweet embeddings.

Layout (all integers little-endian):

    magic   4 bytes  b"LTEB"
    version u16      1
    flags   u16      bit0 = rows are token-mean-pooled
    dim     u32
    count   u32      number of records
    record:
        bg_id   u16 length + UTF-8 bytes
        year    u16
        category u8  (0=MH, 1=FI, 2=General)
        n_tweets u32
        digest  32 bytes (SHA-256 of the cell's manifest lines)
        rows    n_tweets * dim float32, row-major
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoding import EmbeddingMatrix

MAGIC = b"LTEB"
VERSION = 1
FLAG_TOKEN_MEAN_POOLED = 0x0001

CATEGORY_CODES = {"MH": 0, "FI": 1, "General": 2}
CODE_CATEGORIES = {v: k for k, v in CATEGORY_CODES.items()}


class LtebFormatError(ValueError):
    """Raised on any structural or integrity violation of an LTEB file."""


@dataclass(frozen=True)
class LtebRecord:
    bg_id: str
    year: int
    category: str
    digest_hex: str
    vectors: np.ndarray  # (n_tweets, dim), cast to float32 on write

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.bg_id, self.year, self.category)


def write_embeddings(
    path: str | Path,
    records: list[LtebRecord],
    dim: int,
    flags: int = FLAG_TOKEN_MEAN_POOLED,
) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HHII", VERSION, flags, dim, len(records)))
        for rec in records:
            if rec.category not in CATEGORY_CODES:
                raise LtebFormatError(f"unknown category {rec.category!r}")
            vectors = np.ascontiguousarray(rec.vectors, dtype="<f4")
            if vectors.ndim != 2 or vectors.shape[1] != dim:
                raise LtebFormatError(
                    f"record {rec.key} has shape {vectors.shape}, expected (*, {dim})"
                )
            bg_bytes = rec.bg_id.encode("utf-8")
            f.write(struct.pack("<H", len(bg_bytes)))
            f.write(bg_bytes)
            f.write(struct.pack("<HBI", rec.year, CATEGORY_CODES[rec.category], vectors.shape[0]))
            digest = bytes.fromhex(rec.digest_hex)
            if len(digest) != 32:
                raise LtebFormatError(f"digest must be 32 bytes, got {len(digest)}")
            f.write(digest)
            f.write(vectors.tobytes(order="C"))


def load_embeddings(
    path: str | Path,
    expected_manifest: dict[tuple[str, int, str], str] | None,
) -> dict[tuple[str, int, str], EmbeddingMatrix]:
    """Read an LTEB file, validating structure, finiteness, and manifest digests.

    expected_manifest maps (bg_id, year, category) to the hex digest of the
    cell's sample-manifest lines; every record in the file must match.  Pass
    None to skip digest checking (inspection tooling only).
    """
    blob = Path(path).read_bytes()
    view = memoryview(blob)
    if len(blob) < 16:
        raise LtebFormatError(f"{path}: truncated header")
    if bytes(view[:4]) != MAGIC:
        raise LtebFormatError(f"{path}: bad magic {bytes(view[:4])!r}")
    version, flags, dim, count = struct.unpack_from("<HHII", view, 4)
    if version != VERSION:
        raise LtebFormatError(f"{path}: unsupported version {version}")
    del flags  # informational; pooling contract is the exporter's responsibility

    offset = 16
    out: dict[tuple[str, int, str], EmbeddingMatrix] = {}
    for _ in range(count):
        (bg_len,) = struct.unpack_from("<H", view, offset)
        offset += 2
        bg_id = bytes(view[offset : offset + bg_len]).decode("utf-8")
        offset += bg_len
        year, cat_code, n_tweets = struct.unpack_from("<HBI", view, offset)
        offset += 7
        if cat_code not in CODE_CATEGORIES:
            raise LtebFormatError(f"{path}: unknown category code {cat_code}")
        digest_hex = bytes(view[offset : offset + 32]).hex()
        offset += 32
        nbytes = 4 * n_tweets * dim
        if offset + nbytes > len(blob):
            raise LtebFormatError(f"{path}: truncated record for ({bg_id}, {year})")
        vectors = np.frombuffer(blob, dtype="<f4", count=n_tweets * dim, offset=offset)
        vectors = vectors.reshape(n_tweets, dim).copy()
        offset += nbytes

        key = (bg_id, year, CODE_CATEGORIES[cat_code])
        if key in out:
            raise LtebFormatError(f"{path}: duplicate record for {key}")
        if not np.all(np.isfinite(vectors)):
            raise LtebFormatError(f"{path}: non-finite values in record {key}")
        if expected_manifest is not None:
            if key not in expected_manifest:
                raise LtebFormatError(f"{path}: record {key} not present in manifest")
            if expected_manifest[key] != digest_hex:
                raise LtebFormatError(f"{path}: manifest digest mismatch for {key}")
        out[key] = EmbeddingMatrix(key=key, vectors=vectors)
    if offset != len(blob):
        raise LtebFormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return out
