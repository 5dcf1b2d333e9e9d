"""Deterministic 64-bit mixing hash.

All randomness that must be reproducible across runs and platforms
(overlay labels, DHT keys, sampling coins, rendezvous keys) is derived
from this mixer rather than from ``random``.  A fixed (seed, tag,
inputs) triple always yields the same value.
"""
from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class Tag:
    """Domain separation tags, one per use of the hash."""

    LABEL = 1
    SKEAP_KEY = 2
    SPLUS_INSERT_KEY = 3
    SPLUS_POSITION_KEY = 4
    KS_SAMPLE = 5
    KS_POSITION_KEY = 6
    KS_PAIR = 7
    WORKLOAD = 8
    SCHEDULE = 9


def _mix(x: int) -> int:
    # splitmix64 finalizer
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def mix64(seed: int, *values: int) -> int:
    """Fold ``values`` into ``seed``, returning a well-mixed 64-bit word."""
    h = _mix((seed & _MASK) ^ _GOLDEN)
    for v in values:
        h = _mix(h ^ _mix((v & _MASK) + _GOLDEN))
    return h


def hash_unit(tag: int, inputs: tuple[int, ...], seed: int) -> float:
    """Deterministic pseudo-uniform value in [0, 1) for the given inputs."""
    return mix64(seed, tag, *inputs) / 2.0**64


def hash_unit_pair(tag: int, i: int, j: int, seed: int) -> float:
    """Symmetric variant: the pair (i, j) is canonicalized to (min, max)."""
    if i > j:
        i, j = j, i
    return hash_unit(tag, (i, j), seed)
