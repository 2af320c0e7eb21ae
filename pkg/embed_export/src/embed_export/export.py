"""Export job: manifest cells -> encoded rows -> one LTEB file.

LTEB layout (little-endian): magic "LTEB", version u16=1, flags u16 (bit0 =
token-mean pooled), dim u32, record count u32; per record: bg_id (u16 length +
UTF-8), year u16, category u8 (0=MH, 1=FI, 2=General), n_tweets u32, the
32-byte cell manifest digest, then n_tweets x dim float32 rows in manifest
order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .encoders import TokenEncoder, resolve_encoder
from .manifest import read_manifest

MAGIC = b"LTEB"
VERSION = 1
FLAG_TOKEN_MEAN_POOLED = 0x0001
CATEGORY_CODES = {"MH": 0, "FI": 1, "General": 2}


@dataclass(frozen=True)
class ExportJob:
    manifest_paths: tuple[str, ...]
    encoder_name: str
    out_path: str
    dim: int | None = None
    batch_size: int = 64


def export(job: ExportJob) -> int:
    """Run the job; returns the number of records written."""
    encoder = resolve_encoder(job.encoder_name, job.dim)
    cells: dict = {}
    digests: dict = {}
    for path in job.manifest_paths:
        file_cells, file_digests = read_manifest(path)
        for key in file_cells:
            if key in cells:
                raise ValueError(f"cell {key} appears in more than one manifest")
        cells.update(file_cells)
        digests.update(file_digests)
    if not cells:
        raise ValueError("no cells to export")

    with open(job.out_path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HHII", VERSION, FLAG_TOKEN_MEAN_POOLED, encoder.dim, len(cells)))
        for key, rows in cells.items():
            bg_id, year, category = key
            if category not in CATEGORY_CODES:
                raise ValueError(f"unknown category {category!r} in cell {key}")
            vectors = _encode_rows(encoder, [text for _, text in rows], job.batch_size)
            bg_bytes = bg_id.encode("utf-8")
            f.write(struct.pack("<H", len(bg_bytes)))
            f.write(bg_bytes)
            f.write(struct.pack("<HBI", year, CATEGORY_CODES[category], vectors.shape[0]))
            f.write(bytes.fromhex(digests[key]))
            f.write(np.ascontiguousarray(vectors, dtype="<f4").tobytes(order="C"))
    return len(cells)


def _encode_rows(encoder: TokenEncoder, texts: list[str], batch_size: int) -> np.ndarray:
    rows = np.empty((len(texts), encoder.dim), dtype=np.float32)
    for start in range(0, len(texts), max(batch_size, 1)):
        for offset, text in enumerate(texts[start : start + batch_size]):
            rows[start + offset] = encoder.encode(text)
    return rows
