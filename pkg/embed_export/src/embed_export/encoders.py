"""Frozen token encoders behind a minimal protocol.

The built-in family derives a deterministic Gaussian embedding per token from
a hash-seeded generator, which stands in for a pretrained transformer's token
states: frozen, reproducible across machines, and sized like the real thing
(base 768, large 1024).  A heavier backend can be plugged in by implementing
TokenEncoder and registering it here.
"""
from __future__ import annotations

import hashlib
from typing import Protocol

import numpy as np

SEQ_LEN = 64


class TokenEncoder(Protocol):
    name: str
    dim: int

    def encode(self, text: str) -> np.ndarray:
        """One pooled vector per tweet text."""
        ...


class FrozenHashEncoder:
    """Deterministic per-token Gaussian embeddings, mean-pooled over tokens.

    Tokenization is whitespace + lowercase, truncated at SEQ_LEN (silent by
    design); pooling averages only the positions actually present, which is
    the non-padding token-mean contract LTEB flags advertise.
    """

    def __init__(self, name: str, dim: int):
        self.name = name
        self.dim = dim
        self._table: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._table.get(token)
        if vec is None:
            seed = int.from_bytes(
                hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little"
            )
            rng = np.random.default_rng(seed)
            vec = rng.standard_normal(self.dim).astype(np.float32) / np.sqrt(self.dim)
            if len(self._table) > 1 << 20:
                self._table.clear()
            self._table[token] = vec
        return vec

    def encode(self, text: str) -> np.ndarray:
        tokens = text.lower().split()[:SEQ_LEN]
        if not tokens:
            raise ValueError(f"no tokens in text {text!r}")
        acc = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            acc += self._token_vector(token)
        return (acc / len(tokens)).astype(np.float32)


ENCODERS = {
    "frozen-base": 768,
    "frozen-large": 1024,
}


def resolve_encoder(name: str, dim: int | None = None) -> TokenEncoder:
    """Instantiate a registered encoder; the declared dim must match its hidden size."""
    if name not in ENCODERS:
        raise KeyError(f"unknown encoder {name!r}; available: {sorted(ENCODERS)}")
    hidden = ENCODERS[name]
    if dim is not None and dim != hidden:
        raise ValueError(f"encoder {name!r} has hidden size {hidden}, not {dim}")
    return FrozenHashEncoder(name=name, dim=hidden)
