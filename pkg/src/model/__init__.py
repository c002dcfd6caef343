from .layers import Module, Linear, LayerNorm, Conv1d, uniform_init
from .embeddings import (
    PositionalTable,
    SpeakerTable,
    build_positional_table,
    positional_embed,
    speaker_embed,
    augment,
)
from .encoder import (
    ModalityFeatures,
    ModalityProjection,
    EncodedModality,
    MultiHeadAttention,
    TransformerBlock,
    ModalityEncoder,
    attention,
    project,
    transformer_encode,
    pair_label,
)
from .fusion import UnimodalFusion, MultimodalFusion, unimodal_fuse, multimodal_fuse, export_gates
from .heads import ClassifierHead, TeacherOutput, StudentOutput, teacher_forward, student_forward, soften
from .losses import (
    LossReport,
    to_one_hot,
    cross_entropy,
    task_loss,
    student_ce_loss,
    kl_loss,
    total_loss,
    compute_losses,
)
from .sdt import SDTModel, ForwardOutput, ModalRepresentations, parameter_count, block_parameter_count

__all__ = [
    "Module",
    "Linear",
    "LayerNorm",
    "Conv1d",
    "uniform_init",
    "PositionalTable",
    "SpeakerTable",
    "build_positional_table",
    "positional_embed",
    "speaker_embed",
    "augment",
    "ModalityFeatures",
    "ModalityProjection",
    "EncodedModality",
    "MultiHeadAttention",
    "TransformerBlock",
    "ModalityEncoder",
    "attention",
    "project",
    "transformer_encode",
    "pair_label",
    "UnimodalFusion",
    "MultimodalFusion",
    "unimodal_fuse",
    "multimodal_fuse",
    "export_gates",
    "ClassifierHead",
    "TeacherOutput",
    "StudentOutput",
    "teacher_forward",
    "student_forward",
    "soften",
    "LossReport",
    "to_one_hot",
    "cross_entropy",
    "task_loss",
    "student_ce_loss",
    "kl_loss",
    "total_loss",
    "compute_losses",
    "SDTModel",
    "ForwardOutput",
    "ModalRepresentations",
    "parameter_count",
    "block_parameter_count",
]
