"""Random number generation and seed derivation.

Every stochastic routine in the package draws from a
``numpy.random.Generator`` backed by the Philox bit generator. Philox is
counter-based, so identical seeds give identical streams on every platform
and any draw order imposed by parallel execution can be reproduced exactly.
Normal variates come from numpy's ziggurat sampler, which is likewise
platform-stable.

Stage seeds are derived, not invented: ``derive_seed(master, *parts)``
hashes the decimal master seed and the stage qualifiers (stage name,
replicate id, method name, ...) with SHA-256, joined by ":", and keeps the
first 8 bytes big-endian. Two stages can only collide by hash collision,
and inserting or reordering pipeline stages never shifts another stage's
stream.
"""

import hashlib

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Return a fresh Philox-backed generator for ``seed``."""
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seed(master: int, *parts) -> int:
    """Derive a 64-bit stage seed from a master seed and qualifiers."""
    text = ":".join([str(int(master))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def forest_state(seed: int) -> int:
    """Clamp a derived seed into the 31-bit range sklearn accepts."""
    return int(seed) & 0x7FFFFFFF
