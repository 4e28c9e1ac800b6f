"""Keyed, counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from a tuple of integers (and strings), so results never depend on
the order in which architectures, nodes or blocks are evaluated.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ArgumentError

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *keys) -> int:
    """Hash ``seed`` and a namespace path into a new 64-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed & _MASK64).to_bytes(8, "little"))
    for key in keys:
        if isinstance(key, str):
            data = b"s" + key.encode("utf-8")
        else:
            data = b"i" + int(key & _MASK64).to_bytes(8, "little")
        h.update(len(data).to_bytes(4, "little"))
        h.update(data)
    return int.from_bytes(h.digest(), "little")


def stream(seed: int, *keys) -> np.random.Generator:
    """Philox generator keyed by (seed, keys...)."""
    key = derive_seed(seed, *keys)
    return np.random.Generator(np.random.Philox(key=key))


def sample_gaussian_input(b, c, h, w, seed) -> np.ndarray:
    dims = (b, c, h, w)
    if any(int(d) <= 0 for d in dims):
        raise ArgumentError(f"input dims must be positive, got {dims}")
    return stream(seed, "gaussian-input").standard_normal(dims)


def sample_rademacher(c, n, seed) -> np.ndarray:
    """c x n matrix of independent +-1 entries."""
    if int(c) <= 0 or int(n) <= 0:
        raise ArgumentError(f"rademacher dims must be positive, got {(c, n)}")
    bits = stream(seed, "rademacher").integers(0, 2, size=(c, n), dtype=np.int8)
    return (2.0 * bits - 1.0).astype(np.float64)
