"""
Emotional-shift split: an utterance is a "shift" when its label differs from
the label of the previous utterance by the same speaker (not necessarily the
adjacent one) and a "no-shift" otherwise. Each speaker's first utterance in a
conversation belongs to neither bucket.
"""
from typing import Sequence

import numpy as np
from pydantic import BaseModel

from src.core import DimensionError
from src.data.dataset import Conversation


class ShiftSplit(BaseModel):
    shift_accuracy: float
    noshift_accuracy: float
    shift_count: int
    noshift_count: int
    excluded_count: int

    @property
    def counts(self) -> dict:
        return {"shift": self.shift_count, "noshift": self.noshift_count, "excluded": self.excluded_count}


def shift_buckets(conversation: Conversation) -> np.ndarray:
    """Per utterance: 1 shift, 0 no-shift, -1 first utterance of its speaker."""
    last = {}
    buckets = np.full(len(conversation), -1, dtype=np.int64)
    for i, u in enumerate(conversation.utterances):
        if u.speaker in last:
            buckets[i] = int(u.label != last[u.speaker])
        last[u.speaker] = u.label
    return buckets


def emotional_shift_split(conversations: Sequence[Conversation], predictions: Sequence[Sequence[int]]) -> ShiftSplit:
    """
    Accuracy of `predictions` (one sequence per conversation) inside each bucket.
    An empty bucket reports accuracy 0.0 with count 0.
    """
    if len(conversations) != len(predictions):
        raise DimensionError(f"{len(conversations)} conversations but {len(predictions)} prediction lists")
    correct = {0: 0, 1: 0}
    total = {0: 0, 1: 0}
    excluded = 0
    for conv, preds in zip(conversations, predictions):
        preds = np.asarray(preds)[:len(conv)]
        if preds.shape[0] != len(conv):
            raise DimensionError(f"conversation {conv.id!r}: {preds.shape[0]} predictions for {len(conv)} utterances")
        buckets = shift_buckets(conv)
        hits = preds == conv.labels
        excluded += int((buckets < 0).sum())
        for b in (0, 1):
            total[b] += int((buckets == b).sum())
            correct[b] += int((hits & (buckets == b)).sum())

    def accuracy(b: int) -> float:
        return correct[b] / total[b] if total[b] else 0.0

    return ShiftSplit(shift_accuracy=accuracy(1), noshift_accuracy=accuracy(0),
                      shift_count=total[1], noshift_count=total[0], excluded_count=excluded)
