"""
The full network: projection and embeddings, modality encoder, hierarchical
fusion, teacher head and per-modality student heads.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.config_pipeline.run_config import ModelConfig
from src.core import DimensionError, Tensor, ops

from .embeddings import PositionalTable, SpeakerTable, augment
from .encoder import EncodedModality, ModalityEncoder, ModalityProjection, Pair, TransformerBlock
from .fusion import MultimodalFusion, UnimodalFusion
from .heads import ClassifierHead, StudentOutput, TeacherOutput, student_forward, teacher_forward
from .layers import Linear, Module
from .losses import LossReport, compute_losses


@dataclass
class ModalRepresentations:
    """Encoded sequence per pair, enhanced sequence per modality and the fused sequence."""
    pairs: Dict[Pair, Tensor]
    enhanced: Dict[str, Tensor]
    fused: Tensor
    augmented: Dict[str, Tensor] = field(default_factory=dict)


@dataclass
class ForwardOutput:
    teacher: TeacherOutput
    students: Dict[str, StudentOutput]
    representations: ModalRepresentations
    gates: Optional[np.ndarray]
    attention: Dict[Pair, List[np.ndarray]]
    mask: np.ndarray

    @property
    def probs(self) -> Tensor:
        return self.teacher.probs

    @property
    def logits(self) -> Tensor:
        return self.teacher.logits

    def predictions(self) -> np.ndarray:
        """argmax over classes; -1 on padded utterances."""
        return np.where(self.mask, self.teacher.predictions(), -1)


def block_parameter_count(d: int, d_ff: int) -> int:
    """Attention 4d^2+4d, FFN 2 d d_ff + d_ff + d, two layer norms 4d."""
    return 4 * d * d + 4 * d + 2 * d * d_ff + d_ff + d + 4 * d


def parameter_count(config: ModelConfig) -> int:
    """Number of trainable scalars of SDTModel(config), computed analytically."""
    d, c, k = config.d_model, config.num_classes, len(config.modalities)
    total = sum(config.kernel_size(m) * config.feature_dims[m] * d + d for m in config.modalities)
    if not config.no_se:
        total += d * (config.num_speakers + 1)
    if config.fusion == "unicat":
        total += k * d * d + d + block_parameter_count(d, config.d_ff)
    else:
        total += len(config.pairs()) * config.layers * block_parameter_count(d, config.d_ff)
        total += len(config.gated_pairs()) * d * d
        if config.fusion in ("gated", "concat"):
            total += k * (k * d * d + d)
        if config.fusion == "gated" and k > 1:
            total += d * d
        elif config.fusion == "concat":
            total += k * d * d + d
    total += (k + 1) * (d * c + c)
    return total


class SDTModel(Module):
    """
    Args:
        config (ModelConfig): Architecture, ablation flags and loss settings.
        rng (np.random.Generator): Source of the initial weights (stream "init").
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        d = config.d_model
        self.modalities = list(config.modalities)

        self.projections: Dict[str, ModalityProjection] = {}
        for m in self.modalities:
            self.projections[m] = self.add_module(
                f"proj_{m}", ModalityProjection(m, config.feature_dims[m], d, config.kernel_size(m), rng)
            )
        self.positional = None if config.no_pe else PositionalTable(d, config.max_len)
        self.speakers = None if config.no_se else self.add_module(
            "speakers", SpeakerTable(config.num_speakers, d, rng)
        )

        self.encoder: Optional[ModalityEncoder] = None
        self.unimodal: Dict[str, UnimodalFusion] = {}
        self.multimodal: Optional[MultimodalFusion] = None
        self.unicat_in: Optional[Linear] = None
        self.unicat_block: Optional[TransformerBlock] = None
        if config.fusion == "unicat":
            self.unicat_in = self.add_module("unicat_in", Linear(len(self.modalities) * d, d, rng))
            self.unicat_block = self.add_module(
                "unicat_block", TransformerBlock(d, config.heads, config.d_ff, config.dropout, rng, config.layer_norm_eps)
            )
        else:
            self.encoder = self.add_module("encoder", ModalityEncoder(
                self.modalities, config.pairs(), d, config.heads, config.d_ff, config.layers,
                config.dropout, rng, config.layer_norm_eps,
            ))
            gated_pairs = config.gated_pairs()
            for m in self.modalities:
                self.unimodal[m] = self.add_module(
                    f"fuse_{m}", UnimodalFusion(m, self.modalities, d, config.fusion, gated_pairs, rng)
                )
            self.multimodal = self.add_module("fuse", MultimodalFusion(self.modalities, d, config.fusion, rng))

        self.teacher_head = self.add_module("teacher", ClassifierHead(d, config.num_classes, "teacher", rng))
        self.student_heads: Dict[str, ClassifierHead] = {}
        for m in self.modalities:
            self.student_heads[m] = self.add_module(
                f"student_{m}", ClassifierHead(d, config.num_classes, f"student-{m}", rng)
            )
        self.assign_names()

    # ----- forward --------------------------------------------------------------

    def _inputs(self, features: Mapping[str, object], speakers, mask) -> Tuple[Dict[str, Tensor], np.ndarray, np.ndarray]:
        missing = [m for m in self.modalities if m not in features]
        if missing:
            raise DimensionError(f"missing features for modalities {missing}")
        tensors = {}
        for m in self.modalities:
            value = features[m]
            t = value if isinstance(value, Tensor) else Tensor(value)
            if t.ndim == 2:
                t = ops.reshape(t, (1,) + t.shape)
            if t.ndim != 3:
                raise DimensionError(f"features[{m}] must be [B, N, d_m], got {t.shape}")
            tensors[m] = t
        shape = next(iter(tensors.values())).shape[:2]
        for m, t in tensors.items():
            if t.shape[:2] != shape:
                raise DimensionError(f"features[{m}] has shape {t.shape}, expected {shape} leading axes")
        speakers = np.zeros(shape, dtype=np.int64) if speakers is None else np.asarray(speakers, dtype=np.int64)
        speakers = speakers.reshape(shape)
        mask = np.ones(shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(shape)
        return tensors, speakers, mask

    def augment_inputs(self, features: Dict[str, Tensor], speakers: np.ndarray) -> Dict[str, Tensor]:
        """Convolved features plus positional and speaker embeddings, shared across modalities."""
        n = speakers.shape[-1]
        pe = self.positional.embed(n) if self.positional is not None else None
        se = self.speakers.embed(speakers) if self.speakers is not None else None
        return {m: augment(self.projections[m](features[m]), pe, se) for m in self.modalities}

    def forward(self, features: Mapping[str, object], speakers=None, mask=None, training: bool = False,
                rng: Optional[np.random.Generator] = None, students: Optional[bool] = None) -> ForwardOutput:
        """
        Args:
            features: modality -> [B, N, d_m] (or [N, d_m]) features.
            speakers: [B, N] speaker indices (0 on padding).
            mask: [B, N] True on real utterances.
            training (bool): Enables dropout; needs `rng`.
            students (bool, optional): Run the student heads; defaults to `training`.
        """
        features, speakers, mask = self._inputs(features, speakers, mask)
        with_students = training if students is None else students
        h = self.augment_inputs(features, speakers)

        if self.unicat_block is not None:
            joined = self.unicat_in(ops.concat([h[m] for m in self.modalities], axis=-1))
            fused, weights = self.unicat_block(joined, joined, mask, training, rng)
            encoded = EncodedModality(matrices={}, attention={("tav", "tav"): [weights]})
            enhanced = dict(h)
            gates = None
        else:
            encoded = self.encoder.encode_all(h, mask, training, rng)
            enhanced = {m: self.unimodal[m](encoded) for m in self.modalities}
            fused, gates = self.multimodal(enhanced)

        teacher = teacher_forward(fused, self.teacher_head)
        student_out = {}
        if with_students:
            for m in self.modalities:
                student_out[m] = student_forward(enhanced[m], self.student_heads[m], self.config.temperature)
        return ForwardOutput(
            teacher=teacher,
            students=student_out,
            representations=ModalRepresentations(pairs=encoded.matrices, enhanced=enhanced, fused=fused, augmented=h),
            gates=gates,
            attention=encoded.attention,
            mask=mask,
        )

    __call__ = forward

    def compute_loss(self, features: Mapping[str, object], speakers, mask, labels, training: bool = False,
                     rng: Optional[np.random.Generator] = None,
                     gammas: Optional[Tuple[float, float, float]] = None,
                     teacher_target: Optional[Tensor] = None) -> Tuple[LossReport, ForwardOutput]:
        """Forward with students plus every loss component; padded labels are -1."""
        out = self.forward(features, speakers, mask, training, rng, students=True)
        labels = np.asarray(labels, dtype=np.int64).reshape(out.mask.shape)
        report = compute_losses(
            out.teacher.probs, out.teacher.logits, out.students, labels, out.mask & (labels >= 0),
            tuple(gammas or self.config.gammas), self.config.temperature, self.config.kl_backprop_teacher,
            teacher_target,
        )
        return report, out
