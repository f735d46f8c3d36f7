"""Counter-based deterministic randomness.

Every random quantity in the package is a pure function of an integer key
tuple, evaluated through a SplitMix64-style hash chain in 64-bit integer
arithmetic.  Floats are produced by the fixed 53-bit mantissa conversion
``(h >> 11) * 2**-53``.  Nothing here keeps state, so any draw can be
regenerated bit-exactly from its key, independent of platform, process
layout, batch size, or evaluation order.

Key layout used by the rest of the package::

    (domain, seed, word_0, word_1, ...)

where ``domain`` separates independent consumers (environment edges, walk
steps, Brownian increments, jitter, ...).
"""

from __future__ import annotations

import numpy as np

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)

# Domain separators (arbitrary odd constants).
DOMAIN_ENV = 0x45535645
DOMAIN_WALK = 0x57414C4B
DOMAIN_BROWNIAN = 0x42524F57
DOMAIN_JITTER = 0x4A495454
DOMAIN_CALIBRATION = 0x43414C42

_INV_2_53 = float(2.0 ** -53)


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over uint64 arrays."""
    with np.errstate(over="ignore"):
        z = (z + _GOLDEN).astype(U64, copy=False)
        z = (z ^ (z >> U64(30))) * _MIX1
        z = (z ^ (z >> U64(27))) * _MIX2
        return z ^ (z >> U64(31))


def _as_u64(x) -> np.ndarray:
    # int64 -> uint64 reinterpretation keeps negative ints well-defined
    a = np.asarray(x)
    if a.dtype != U64:
        a = a.astype(np.int64, copy=False).view(U64) if a.dtype.kind == "i" else a.astype(U64)
    return a


def hash_key(domain: int, seed: int, *words) -> np.ndarray:
    """Hash a key tuple to uint64.  Trailing words may be arrays; they
    broadcast against each other and the result keeps that shape."""
    d = U64(int(domain) & 0xFFFFFFFFFFFFFFFF)
    s = U64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        h = mix64(np.asarray(d ^ mix64(np.asarray(s))))
        for w in words:
            h = mix64(h ^ _as_u64(w))
    return h


def uniform(domain: int, seed: int, *words) -> np.ndarray:
    """Uniform draws in [0, 1) keyed by (domain, seed, words)."""
    bits = hash_key(domain, seed, *words)
    return (bits >> U64(11)).astype(np.float64) * _INV_2_53


def uniform_open(domain: int, seed: int, *words) -> np.ndarray:
    """Uniform draws in the open interval (0, 1)."""
    bits = hash_key(domain, seed, *words)
    return ((bits >> U64(11)).astype(np.float64) + 0.5) * _INV_2_53


def normal(domain: int, seed: int, *words) -> np.ndarray:
    """Standard normal draws via Box-Muller on two keyed uniforms.

    The key tuple is extended with a lane index, so callers must not use
    the same (domain, seed, words) for anything else.
    """
    u1 = uniform_open(domain, seed, *words, 0)
    u2 = uniform(domain, seed, *words, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def zigzag(k) -> np.ndarray:
    """Map signed integers to unsigned: 0,-1,1,-2,2 -> 0,1,2,3,4."""
    a = np.asarray(k, dtype=np.int64)
    return np.where(a >= 0, 2 * a, -2 * a - 1).astype(np.int64).view(U64)
