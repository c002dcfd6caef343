"""
Padded batches of whole conversations.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.core import ConfigError, DimensionError, make_rng

from .dataset import Conversation

PAD_LABEL = -1
PAD_SPEAKER = 0


@dataclass
class Batch:
    """
    features: modality -> [B, N_max, d_m], zero on padding
    mask: [B, N_max], True exactly on real utterances
    labels: [B, N_max], PAD_LABEL on padding
    speakers: [B, N_max], PAD_SPEAKER on padding
    """
    features: Dict[str, np.ndarray]
    mask: np.ndarray
    labels: np.ndarray
    speakers: np.ndarray
    ids: List[str]

    @property
    def size(self) -> int:
        return self.mask.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    @property
    def num_utterances(self) -> int:
        return int(self.mask.sum())


def collate(conversations: Sequence[Conversation]) -> Batch:
    if not conversations:
        raise ConfigError("cannot collate an empty list of conversations")
    n_max = max(len(c) for c in conversations)
    b = len(conversations)
    first = conversations[0].utterances[0]
    features = {m: np.zeros((b, n_max, first.feature(m).shape[0])) for m in ("t", "a", "v")}
    mask = np.zeros((b, n_max), dtype=bool)
    labels = np.full((b, n_max), PAD_LABEL, dtype=np.int64)
    speakers = np.full((b, n_max), PAD_SPEAKER, dtype=np.int64)
    for i, conv in enumerate(conversations):
        n = len(conv)
        for m in features:
            values = conv.features(m)
            if values.shape[1] != features[m].shape[2]:
                raise DimensionError(f"conversation {conv.id!r}: {m} width {values.shape[1]}, "
                                     f"expected {features[m].shape[2]}")
            features[m][i, :n] = values
        mask[i, :n] = True
        labels[i, :n] = conv.labels
        speakers[i, :n] = conv.speakers
    return Batch(features=features, mask=mask, labels=labels, speakers=speakers,
                 ids=[c.id for c in conversations])


def make_batches(conversations: Sequence[Conversation], batch_size: int,
                 shuffle_seed: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None) -> List[Batch]:
    """
    Split into batches of `batch_size` whole conversations, each padded to its
    longest member. With `shuffle_seed` (or an explicit `rng`, e.g. a run's
    shuffle stream) the order is permuted deterministically; otherwise the
    input order is kept.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be at least 1, got {batch_size}")
    order = np.arange(len(conversations))
    if rng is None and shuffle_seed is not None:
        rng = make_rng(shuffle_seed, "shuffle")
    if rng is not None:
        order = rng.permutation(len(conversations))
    return [
        collate([conversations[i] for i in order[start:start + batch_size]])
        for start in range(0, len(order), batch_size)
    ]
