"""
Synthetic conversations for desk-scale checks.

Each class gets a fixed random mean vector per modality; an utterance's feature
is its class mean plus Gaussian noise scaled by noise * (1 - separability).
Speakers keep their current emotion and change it with probability
`shift_rate` on each new utterance.
"""
from typing import Dict, Optional, Tuple

import numpy as np

from src.core import ConfigError, make_rng

from .dataset import Conversation, Dataset, DatasetHeader, Utterance

DEFAULT_DIMS = {"t": 16, "a": 12, "v": 8}


def class_means(seed: int, num_classes: int, dims: Dict[str, int]) -> Dict[str, np.ndarray]:
    """The per-modality [C, d_m] class means used by `synth_generate` for `seed`."""
    rng = make_rng(seed, "synth")
    return {m: rng.normal(size=(num_classes, dims[m])) for m in ("t", "a", "v")}


def synth_generate(seed: int, n_conversations: int = 8, len_range: Tuple[int, int] = (10, 10),
                   n_speakers: int = 2, num_classes: int = 6, dims: Optional[Dict[str, int]] = None,
                   separability: float = 0.8, shift_rate: float = 0.3, noise: float = 1.0,
                   name: str = "synthetic") -> Dataset:
    """
    Args:
        seed (int): Same seed, same dataset (bit for bit).
        len_range (tuple): Inclusive bounds on utterances per conversation.
        separability (float): 1 removes the noise entirely.
        shift_rate (float): Probability that a speaker's next emotion differs from its last.
    """
    dims = dict(DEFAULT_DIMS if dims is None else dims)
    lo, hi = len_range
    if n_conversations < 1 or lo < 1 or hi < lo or n_speakers < 1 or num_classes < 2:
        raise ConfigError("synth_generate: sizes must be positive and len_range ordered")
    if not 0.0 <= separability <= 1.0 or not 0.0 <= shift_rate <= 1.0 or noise < 0:
        raise ConfigError("synth_generate: separability and shift_rate lie in [0, 1], noise >= 0")

    means = class_means(seed, num_classes, dims)
    rng = make_rng(seed, "synth").spawn(1)[0]
    spread = noise * (1.0 - separability)

    conversations = []
    for c in range(n_conversations):
        n = int(rng.integers(lo, hi + 1))
        current: Dict[int, int] = {}
        utterances = []
        for _ in range(n):
            speaker = int(rng.integers(n_speakers))
            if speaker not in current:
                label = int(rng.integers(num_classes))
            elif rng.random() < shift_rate:
                others = [k for k in range(num_classes) if k != current[speaker]]
                label = int(others[rng.integers(len(others))])
            else:
                label = current[speaker]
            current[speaker] = label
            feats = {m: means[m][label] + spread * rng.normal(size=dims[m]) for m in ("t", "a", "v")}
            utterances.append(Utterance(text=feats["t"], audio=feats["a"], visual=feats["v"],
                                        speaker=speaker, label=label))
        conversations.append(Conversation(id=f"{name}_{c:04d}", utterances=utterances))

    header = DatasetHeader(
        name=name, d_t=dims["t"], d_a=dims["a"], d_v=dims["v"], num_classes=num_classes,
        label_names=[f"class{k}" for k in range(num_classes)],
        speaker_vocab=[f"speaker{k}" for k in range(n_speakers)],
    )
    return Dataset(header=header, conversations=conversations)
