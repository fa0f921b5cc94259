"""
Deterministic random streams.

All randomness flows from the run seed: each consumer derives its own
generator from (seed, purpose, ids...), so streams are independent of
processing order and identical across reruns.
"""

import hashlib

import numpy as np


def derive_seed(*parts: object) -> int:
    """Stable 63-bit integer derived from the given parts."""

    key = ":".join(str(part) for part in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


def derive_rng(*parts: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


def stable_unit(*parts: object) -> float:
    """Deterministic float in [0, 1) for the given parts."""

    return derive_seed(*parts) / float(1 << 63)
