from __future__ import annotations
import hashlib
from dataclasses import dataclass

import numpy as np

STREAM_LABELS = ("angles", "locations", "outcomes", "crosstalk")
SEED_MASK = (1 << 64) - 1


def stable_hash64(*parts: object) -> int:
    """64-bit value from sha256 over the ``|``-joined string forms of ``parts``."""
    h = hashlib.sha256()
    h.update("|".join(str(p) for p in parts).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big")


def rate_key(p: float) -> str:
    # shortest round-trip decimal; identical on every platform
    return repr(float(p))


def trajectory_seed(master_seed: int, n_sites: int, p: float, run_index: int) -> int:
    return stable_hash64(int(master_seed) & SEED_MASK, int(n_sites), rate_key(p), int(run_index))


def named_stream(seed: int, label: str) -> np.random.Generator:
    seq = np.random.SeedSequence([int(seed) & SEED_MASK, stable_hash64(label)])
    return np.random.Generator(np.random.PCG64(seq))


@dataclass
class Streams:
    """The four independent random sub-streams of one trajectory."""

    angles: np.random.Generator
    locations: np.random.Generator
    outcomes: np.random.Generator
    crosstalk: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "Streams":
        return cls(**{label: named_stream(seed, label) for label in STREAM_LABELS})
