"""Deterministic derivation of independent random streams.

All randomness in the package flows through numpy generators seeded from
``derive_seed``.  Hashing the identifying parts keeps every stream independent
of iteration order, process count, and platform.
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEP = b"\x1f"


def derive_seed(*parts: object) -> int:
    """Fold the parts into a stable 64-bit seed via SHA-256."""
    digest = hashlib.sha256()
    for part in parts:
        digest.update(str(part).encode("utf-8"))
        digest.update(_SEP)
    return int.from_bytes(digest.digest()[:8], "big")


def rng_for(*parts: object) -> np.random.Generator:
    """A fresh generator keyed by the given parts."""
    return np.random.default_rng(derive_seed(*parts))
