"""
Hierarchical fusion of the encoded modality sequences.

Unimodal level: for each target modality, every encoded source sequence is
multiplied by a sigmoid gate computed from itself, the gated sequences are
concatenated (the target's own sequence first, then the other sources in
t, a, v order) and mapped back to width d.

Multimodal level: per utterance and per feature dimension, a softmax across
modalities of a shared linear score weights the enhanced sequences, which
are summed.

"add" and "concat" replace both levels with an elementwise sum or a
concatenation followed by an affine map.
"""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core import DimensionError, Tensor, ops

from .encoder import EncodedModality, Pair
from .layers import Linear, Module, uniform_init

GATE_KEYS = {"t": "w_text", "a": "w_audio", "v": "w_visual"}


def source_order(target: str, modalities: Sequence[str]) -> List[str]:
    """[m, then the other active modalities in canonical order]."""
    return [target] + [n for n in modalities if n != target]


class UnimodalFusion(Module):
    """Builds the enhanced sequence of one target modality from its encoded sources."""

    def __init__(self, target: str, modalities: Sequence[str], d: int, mode: str,
                 gated_pairs: Sequence[Pair], rng: np.random.Generator):
        super().__init__()
        self.target = target
        self.sources = source_order(target, modalities)
        self.mode = mode
        self.d = d
        self.gates: Dict[str, Tensor] = {}
        if mode == "gated":
            for n in self.sources:
                if (n, target) in gated_pairs:
                    self.gates[n] = self.add_parameter(f"gate_{n}_to_{target}", uniform_init(rng, (d, d), d))
        self.linear: Optional[Linear] = None
        if mode in ("gated", "concat"):
            self.linear = self.add_module("linear", Linear(len(self.sources) * d, d, rng))

    def gate(self, source: str, h: Tensor) -> Tensor:
        """Elementwise h * sigmoid(h @ W.T) with the gate matrix of `source`."""
        return ops.mul(h, ops.sigmoid(ops.matmul(h, ops.transpose(self.gates[source]))))

    def __call__(self, encoded: EncodedModality) -> Tensor:
        parts = []
        for n in self.sources:
            h = encoded[(n, self.target)]
            if h.shape[-1] != self.d:
                raise DimensionError(f"encoded {n}->{self.target} has width {h.shape[-1]}, expected {self.d}")
            parts.append(self.gate(n, h) if n in self.gates else h)
        if self.mode == "add":
            out = parts[0]
            for part in parts[1:]:
                out = ops.add(out, part)
            return out
        return self.linear(ops.concat(parts, axis=-1))


def unimodal_fuse(encoded: EncodedModality, fusion: UnimodalFusion) -> Tensor:
    return fusion(encoded)


class MultimodalFusion(Module):
    """
    Fuses the enhanced sequences into one. In gated mode one shared W [d, d] scores every
    modality; a single active modality gets weight 1 and W is not built.
    """

    def __init__(self, modalities: Sequence[str], d: int, mode: str, rng: np.random.Generator):
        super().__init__()
        self.modalities = list(modalities)
        self.mode = mode
        self.d = d
        self.weight: Optional[Tensor] = None
        self.linear: Optional[Linear] = None
        if mode == "gated" and len(self.modalities) > 1:
            self.weight = self.add_parameter("weight", uniform_init(rng, (d, d), d))
        elif mode == "concat":
            self.linear = self.add_module("linear", Linear(len(self.modalities) * d, d, rng))

    def __call__(self, enhanced: Dict[str, Tensor]) -> Tuple[Tensor, Optional[np.ndarray]]:
        """
        Returns:
            (Tensor, np.ndarray | None): fused sequence and, in gated mode, the gate
            array [k, ..., N, d] stacked in modality order (None otherwise).
        """
        shapes = {enhanced[m].shape for m in self.modalities}
        if len(shapes) != 1:
            raise DimensionError(f"enhanced sequences differ in shape: {sorted(shapes)}")
        parts = [enhanced[m] for m in self.modalities]
        if self.mode == "concat":
            return self.linear(ops.concat(parts, axis=-1)), None
        if self.mode == "add":
            out = parts[0]
            for part in parts[1:]:
                out = ops.add(out, part)
            return out, None
        if self.weight is None:
            return parts[0], np.ones((1,) + parts[0].shape)

        w_t = ops.transpose(self.weight)
        logits = ops.stack([ops.matmul(p, w_t) for p in parts], axis=0)
        gates = ops.softmax(logits, axis=0)
        fused = ops.sum(ops.mul(gates, ops.stack(parts, axis=0)), axis=0)
        return fused, gates.data


def multimodal_fuse(enhanced: Dict[str, Tensor], fusion: MultimodalFusion) -> Tensor:
    fused, _ = fusion(enhanced)
    return fused


def export_gates(gates: np.ndarray, modalities: Sequence[str], length: Optional[int] = None) -> List[dict]:
    """
    Mean-over-dimensions modality weights per utterance of one conversation.

    Args:
        gates: [k, N, d] gate array of a single conversation.
        modalities: Active modalities in the order of the first axis.
        length: Number of real utterances (trailing padding is dropped).

    Returns:
        list[dict]: {utterance, w_text, w_audio, w_visual}; inactive modalities are 0.
    """
    if gates.ndim != 3 or gates.shape[0] != len(modalities):
        raise DimensionError(f"expected gates [{len(modalities)}, N, d], got {gates.shape}")
    means = gates.mean(axis=-1)
    n = means.shape[1] if length is None else length
    rows = []
    for i in range(n):
        row = {"utterance": i, "w_text": 0.0, "w_audio": 0.0, "w_visual": 0.0}
        for j, m in enumerate(modalities):
            row[GATE_KEYS[m]] = float(means[j, i])
        rows.append(row)
    return rows
