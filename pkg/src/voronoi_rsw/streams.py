"""Counter-based random streams for reproducible parallel Monte Carlo.

Each (master_seed, trial_index, purpose) triple is hashed to a 128-bit
Philox key, so streams for distinct triples are computationally
independent and identical inputs give identical output on every platform.
Trials can therefore be computed in any order, by any number of workers,
without changing a single draw.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Stream:
    """A named random stream: a numpy Generator plus its derivation id."""

    gen: np.random.Generator
    id: str


def derive_stream(master_seed: int, trial_index: int, purpose: str) -> Stream:
    """Derive the stream keyed by (master_seed, trial_index, purpose).

    The key is the first 128 bits of BLAKE2b over the canonical string
    ``"{master_seed}/{trial_index}/{purpose}"``.
    """
    sid = f"{master_seed}/{trial_index}/{purpose}"
    digest = hashlib.blake2b(sid.encode("utf-8"), digest_size=16).digest()
    key = int.from_bytes(digest, "little")
    return Stream(np.random.Generator(np.random.Philox(key=key)), sid)


def as_stream(stream) -> Stream:
    """Accept either a Stream or a bare numpy Generator."""
    if isinstance(stream, Stream):
        return stream
    if isinstance(stream, np.random.Generator):
        return Stream(stream, "adhoc")
    raise TypeError(f"expected Stream or numpy Generator, got {type(stream)!r}")


def subseed(master_seed: int, tag: str) -> int:
    """Deterministic 63-bit master seed for a tagged sub-experiment."""
    digest = hashlib.blake2b(f"{master_seed}|{tag}".encode("utf-8"),
                             digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1
