"""
Modality encoder: temporal convolution projection and the intra-/inter-modal
transformer encoders producing one encoded sequence per (source n, target m) pair.

All sequence tensors are batch-first, [B, N, d]. Key masks are boolean [B, N]
with True on real utterances.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core import DimensionError, Tensor, UsageError, ops

from .layers import Conv1d, LayerNorm, Linear, Module

Pair = Tuple[str, str]


def pair_label(pair: Pair) -> str:
    """("a", "t") -> "a→t"."""
    return f"{pair[0]}→{pair[1]}"


@dataclass
class ModalityFeatures:
    """Raw features U_m of one modality, [N, d_m] or [B, N, d_m]."""
    modality: str
    matrix: Tensor

    @property
    def dim(self) -> int:
        return self.matrix.shape[-1]


@dataclass
class EncodedModality:
    """
    Encoded sequences keyed by (n, m). Pairs in `passthrough` carry the input
    unchanged because their transformer is ablated. `attention` holds the
    attention weights of every block, [B, h, T_q, T_k] per layer.
    """
    matrices: Dict[Pair, Tensor]
    passthrough: List[Pair] = field(default_factory=list)
    attention: Dict[Pair, List[np.ndarray]] = field(default_factory=dict)

    def __getitem__(self, pair: Pair) -> Tensor:
        return self.matrices[pair]

    def __len__(self) -> int:
        return len(self.matrices)


class ModalityProjection(Module):
    """Conv1D(U_m, k_m) mapping d_m input channels to d."""

    def __init__(self, modality: str, d_in: int, d: int, kernel_size: int, rng: np.random.Generator):
        super().__init__()
        self.modality = modality
        self.d_in = d_in
        self.conv = self.add_module("conv", Conv1d(d_in, d, kernel_size, rng))

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv(x)


def project(features: ModalityFeatures, projection: ModalityProjection) -> Tensor:
    """
    Temporal convolution of one modality's features to width d. Raises
    DimensionError if the feature dimension does not match the projection's
    input channels.
    """
    if features.modality != projection.modality or features.dim != projection.d_in:
        raise DimensionError(
            f"modality {features.modality} has {features.dim} features; "
            f"projection expects {projection.modality} with {projection.d_in}"
        )
    return projection(features.matrix)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, t, d = x.shape
    return ops.transpose(ops.reshape(x, (b, t, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, t, dh = x.shape
    return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (b, t, h * dh))


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int, key_mask: Optional[np.ndarray] = None,
              dropout: float = 0.0, training: bool = False,
              rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, np.ndarray]:
    """
    Multi-head scaled dot-product attention on already projected inputs.

    Args:
        q: [B, T_q, d] (or [T_q, d])
        k, v: [B, T_k, d] (or [T_k, d])
        heads (int): Number of heads h; d must be divisible by h.
        key_mask: Boolean [B, T_k], True on keys that may be attended.

    Returns:
        (Tensor, np.ndarray): Concatenated head outputs [B, T_q, d] and attention
        weights [B, h, T_q, T_k] (before dropout).
    """
    unbatched = q.ndim == 2
    if unbatched:
        q, k, v = (ops.reshape(x, (1,) + x.shape) for x in (q, k, v))
        key_mask = None if key_mask is None else np.asarray(key_mask, dtype=bool)[None]
    d = q.shape[-1]
    if d % heads:
        raise DimensionError(f"model width {d} is not divisible by {heads} heads")
    if k.shape != v.shape or k.shape[-1] != d or k.shape[0] != q.shape[0]:
        raise DimensionError(f"attention shapes disagree: q={q.shape} k={k.shape} v={v.shape}")

    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    logits = ops.scale(ops.matmul(qh, ops.swapaxes(kh, -1, -2)), 1.0 / math.sqrt(d // heads))
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=bool)
        if not key_mask.any(axis=-1).all():
            raise UsageError("every query needs at least one valid key")
        logits = ops.masked_fill(logits, ~key_mask[:, None, None, :])
    weights = ops.softmax(logits, axis=-1)
    attended = ops.matmul(ops.dropout(weights, dropout, training, rng), vh)
    out = _merge_heads(attended)
    if unbatched:
        out = ops.reshape(out, out.shape[1:])
    return out, weights.data


class MultiHeadAttention(Module):
    """Query/key/value/output projections (d -> d each) around `attention`."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.heads = heads
        self.w_q = self.add_module("w_q", Linear(d, d, rng))
        self.w_k = self.add_module("w_k", Linear(d, d, rng))
        self.w_v = self.add_module("w_v", Linear(d, d, rng))
        self.w_o = self.add_module("w_o", Linear(d, d, rng))

    def __call__(self, q_in: Tensor, kv_in: Tensor, key_mask: Optional[np.ndarray], dropout: float,
                 training: bool, rng: Optional[np.random.Generator]) -> Tuple[Tensor, np.ndarray]:
        out, weights = attention(self.w_q(q_in), self.w_k(kv_in), self.w_v(kv_in), self.heads,
                                 key_mask, dropout, training, rng)
        return self.w_o(out), weights


class TransformerBlock(Module):
    """
    One post-norm encoder layer:
        x   = LN(Q_in + Drop(Attn(Q_in, KV_in, KV_in)))
        out = LN(x + Drop(FFN(x))),  FFN(x) = ReLU(x W1 + b1) W2 + b2
    """

    def __init__(self, d: int, heads: int, d_ff: int, dropout: float, rng: np.random.Generator,
                 eps: float = 1e-5):
        super().__init__()
        self.d = d
        self.dropout = dropout
        self.attention = self.add_module("attention", MultiHeadAttention(d, heads, rng))
        self.ffn_in = self.add_module("ffn_in", Linear(d, d_ff, rng))
        self.ffn_out = self.add_module("ffn_out", Linear(d_ff, d, rng))
        self.norm1 = self.add_module("norm1", LayerNorm(d, eps))
        self.norm2 = self.add_module("norm2", LayerNorm(d, eps))

    def __call__(self, q_in: Tensor, kv_in: Tensor, key_mask: Optional[np.ndarray] = None,
                 training: bool = False, rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, np.ndarray]:
        attended, weights = self.attention(q_in, kv_in, key_mask, self.dropout, training, rng)
        x = self.norm1(ops.add(q_in, ops.dropout(attended, self.dropout, training, rng)))
        hidden = self.ffn_out(ops.relu(self.ffn_in(x)))
        out = self.norm2(ops.add(x, ops.dropout(hidden, self.dropout, training, rng)))
        return out, weights


def transformer_encode(block: TransformerBlock, q_in: Tensor, kv_in: Tensor,
                       key_mask: Optional[np.ndarray] = None, training: bool = False,
                       rng: Optional[np.random.Generator] = None) -> Tensor:
    """Transformer(Q_in, KV_in, KV_in); see TransformerBlock."""
    if q_in.shape[-1] != block.d or kv_in.shape[-1] != block.d:
        raise DimensionError(f"transformer expects width {block.d}, got {q_in.shape} / {kv_in.shape}")
    out, _ = block(q_in, kv_in, key_mask, training, rng)
    return out


class ModalityEncoder(Module):
    """
    One stack of `layers` transformer blocks per active (n, m) pair. Intra pairs
    (m, m) attend within modality m; cross pairs take queries from m and keys
    and values from n. Every pair has its own parameters.
    """

    def __init__(self, modalities: Sequence[str], pairs: Sequence[Pair], d: int, heads: int, d_ff: int,
                 layers: int, dropout: float, rng: np.random.Generator, eps: float = 1e-5):
        super().__init__()
        self.modalities = list(modalities)
        self.pairs = list(pairs)
        self.stacks: Dict[Pair, List[TransformerBlock]] = {}
        for n, m in self.pairs:
            stack = []
            for layer in range(layers):
                name = f"{n}_to_{m}" if layers == 1 else f"{n}_to_{m}.layer{layer}"
                stack.append(self.add_module(name, TransformerBlock(d, heads, d_ff, dropout, rng, eps)))
            self.stacks[(n, m)] = stack

    def encode_pair(self, pair: Pair, h: Dict[str, Tensor], key_mask: Optional[np.ndarray],
                    training: bool, rng: Optional[np.random.Generator]) -> Tuple[Tensor, List[np.ndarray]]:
        n, m = pair
        x, kv = h[m], h[n]
        weights = []
        for layer, block in enumerate(self.stacks[pair]):
            # Deeper layers of an intra stack attend to their own output.
            if layer > 0 and n == m:
                kv = x
            x, w = block(x, kv, key_mask, training, rng)
            weights.append(w)
        return x, weights

    def encode_all(self, h: Dict[str, Tensor], key_mask: Optional[np.ndarray] = None,
                   training: bool = False, rng: Optional[np.random.Generator] = None) -> EncodedModality:
        """
        Encoded sequence for every (n, m) over the active modalities. Pairs whose block
        is ablated pass the augmented input through unchanged.
        """
        shapes = {h[m].shape for m in self.modalities}
        if len(shapes) != 1:
            raise DimensionError(f"modality sequences differ in shape: {sorted(shapes)}")
        encoded = EncodedModality(matrices={})
        for m in self.modalities:
            for n in self.modalities:
                pair = (n, m)
                if pair in self.stacks:
                    out, weights = self.encode_pair(pair, h, key_mask, training, rng)
                    encoded.matrices[pair] = out
                    encoded.attention[pair] = weights
                else:
                    encoded.matrices[pair] = h[m]
                    encoded.passthrough.append(pair)
        return encoded
