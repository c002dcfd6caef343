"""
Sinusoidal positional embeddings and trainable speaker embeddings.
"""
import threading
from typing import Optional

import numpy as np

from src.core import CapacityError, ConfigError, DimensionError, Tensor, ops
from src.utils.log_service import get_logger

from .layers import Module, uniform_init

log = get_logger(__name__)

DEFAULT_MAX_LEN = 256


def build_positional_table(max_len: int, d: int) -> np.ndarray:
    """table[pos, 2i] = sin(pos / 10000^(2i/d)), table[pos, 2i+1] = cos(...)."""
    if d % 2:
        raise ConfigError(f"positional embedding dimension must be even, got {d}")
    positions = np.arange(max_len, dtype=np.float64)[:, None]
    rates = np.power(10000.0, np.arange(0, d, 2, dtype=np.float64) / d)
    table = np.empty((max_len, d), dtype=np.float64)
    table[:, 0::2] = np.sin(positions / rates)
    table[:, 1::2] = np.cos(positions / rates)
    return table


class PositionalTable:
    """
    Precomputed sinusoidal table. With `grow=True` a request longer than
    `max_len` rebuilds the table; otherwise it raises CapacityError.
    """

    def __init__(self, d: int, max_len: int = DEFAULT_MAX_LEN, grow: bool = True):
        self.d = d
        self.grow = grow
        self.table = build_positional_table(max_len, d)
        self._grow_lock = threading.Lock()

    @property
    def max_len(self) -> int:
        return self.table.shape[0]

    def embed(self, n: int) -> Tensor:
        table = self.table
        if n > table.shape[0]:
            if not self.grow:
                raise CapacityError(f"sequence length {n} exceeds positional capacity {table.shape[0]}")
            table = self._grown(n)
        return Tensor(table[:n])

    def _grown(self, n: int) -> np.ndarray:
        # readers only ever see a complete table; it is published in one assignment
        with self._grow_lock:
            table = self.table
            if n > table.shape[0]:
                new_len = max(n, 2 * table.shape[0])
                log.info(f"Growing positional table from {table.shape[0]} to {new_len} rows")
                table = build_positional_table(new_len, self.d)
                self.table = table
            return table


def positional_embed(n: int, d: int, max_len: int = DEFAULT_MAX_LEN) -> Tensor:
    """
    Rows 0..n-1 of the sinusoidal table.

    Raises:
        CapacityError: If n > max_len.
        ConfigError: If d is odd.
    """
    return PositionalTable(d, max_len=max_len, grow=False).embed(n)


class SpeakerTable(Module):
    """
    Trainable matrix V_s of shape [d, M+1]; column j embeds speaker j and the
    extra column M embeds every speaker index >= M (unseen speakers).
    """

    def __init__(self, num_speakers: int, d: int, rng: np.random.Generator):
        super().__init__()
        self.num_speakers = num_speakers
        self.d = d
        self.matrix = self.add_parameter("matrix", uniform_init(rng, (d, num_speakers + 1), num_speakers + 1))

    @property
    def unk_index(self) -> int:
        return self.num_speakers

    def embed(self, speaker_ids) -> Tensor:
        ids = np.asarray(speaker_ids, dtype=np.int64)
        if (ids < 0).any():
            raise ConfigError("speaker ids must be non-negative")
        ids = np.where(ids >= self.num_speakers, self.unk_index, ids)
        return ops.gather_columns(self.matrix, ids)


def speaker_embed(speaker_ids, table: SpeakerTable) -> Tensor:
    return table.embed(speaker_ids)


def augment(projected: Tensor, pe: Optional[Tensor], se: Optional[Tensor]) -> Tensor:
    """
    Projected sequence plus positional and speaker embeddings. A missing term
    (ablation) is skipped; positions of shape [N, d] broadcast over the batch axis.
    """
    out = projected
    for term in (pe, se):
        if term is None:
            continue
        if term.shape[-2:] != projected.shape[-2:]:
            raise DimensionError(f"augment: term shape {term.shape} does not match {projected.shape}")
        out = ops.add(out, term)
    return out
