"""
Seedable, splittable random streams.

All randomness goes through numpy's Philox4x64 counter-based generator. A run
seed is expanded with SeedSequence and split into independent named streams
(`init`, `shuffle`, `dropout`, ...) so that changing how one stream is consumed
never shifts another.
"""
import zlib
from typing import Dict, Iterable

import numpy as np

STREAMS = ("init", "shuffle", "dropout", "split", "synth")


def make_rng(seed: int, stream: str = "init") -> np.random.Generator:
    """Generator for one named stream of a run seed. Same (seed, stream) -> same sequence."""
    key = zlib.crc32(stream.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), key])))


def split(rng: np.random.Generator, n: int) -> list:
    """n independent child generators derived from `rng`'s seed sequence."""
    return rng.spawn(n)


def make_streams(seed: int, names: Iterable[str] = STREAMS) -> Dict[str, np.random.Generator]:
    return {name: make_rng(seed, name) for name in names}
