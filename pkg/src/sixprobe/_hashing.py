"""Stable hashing helpers: seed derivation and vectorized Bernoulli coins.

Everything here must be reproducible across processes and platforms, so no
use of Python's randomized ``hash()``.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = np.uint64
_MASK64 = 0xFFFFFFFFFFFFFFFF


def derive_seed(root: int, *labels) -> int:
    """Derive a 64-bit child seed from a root seed and a label path."""
    h = hashlib.sha256()
    h.update(str(root).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "big")


def splitmix64(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer over uint64 arrays (wrapping)."""
    with np.errstate(over="ignore"):
        x = x + _U64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB)
        return x ^ (x >> _U64(31))


def address_coin(his: np.ndarray, los: np.ndarray, seed: int) -> np.ndarray:
    """Uniform [0,1) variate per address, a pure function of (seed, address)."""
    key = _U64(seed & _MASK64)
    with np.errstate(over="ignore"):
        mixed = splitmix64(los ^ splitmix64(his ^ key))
    return mixed.astype(np.float64) / 2.0**64


def digest_file(path) -> str:
    """Short content digest used in reproducibility headers."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:12]


def digest_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:12]
