"""Embedding exporter: sample manifests in, bit-exact LTEB embedding files out.

Each manifest tweet is tokenized (max sequence length 64), encoded with a
frozen token encoder, and mean-pooled over its non-padding positions; rows are
written in manifest order so the downstream pipeline can verify cell digests.
"""

from .encoders import ENCODERS, FrozenHashEncoder, resolve_encoder
from .export import ExportJob, export
from .manifest import read_manifest

__version__ = "0.1.0"

__all__ = [
    "ENCODERS",
    "ExportJob",
    "FrozenHashEncoder",
    "export",
    "read_manifest",
    "resolve_encoder",
]
