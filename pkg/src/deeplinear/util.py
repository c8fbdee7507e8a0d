"""Small shared utilities."""

from __future__ import annotations

import hashlib

import numpy as np


def named_stream(seed: int, name: str) -> np.random.Generator:
    """Deterministic random stream derived from a root seed and a label.

    Streams for different labels are independent, and adding a new label
    never perturbs the draws of an existing one.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    sub = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), sub]))


def named_seed(seed: int, name: str) -> int:
    """Integer seed variant of :func:`named_stream` for APIs that take ints."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return (int(seed) * 0x9E3779B9 + int.from_bytes(digest[:4], "little")) % (2**63)
