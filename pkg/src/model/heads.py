"""
Teacher and student classifier heads.
"""
from dataclasses import dataclass

import numpy as np

from src.core import ConfigError, Tensor, ops

from .layers import Module, uniform_init

ROLES = ("teacher", "student-t", "student-a", "student-v")


class ClassifierHead(Module):
    """Fully connected layer d -> C; weight [d, C], bias [C]."""

    def __init__(self, d: int, num_classes: int, role: str, rng: np.random.Generator):
        super().__init__()
        if num_classes < 2:
            raise ConfigError(f"a classifier needs at least 2 classes, got {num_classes}")
        if role not in ROLES:
            raise ConfigError(f"unknown head role {role!r}")
        self.role = role
        self.num_classes = num_classes
        self.weight = self.add_parameter("weight", uniform_init(rng, (d, num_classes), d))
        self.bias = self.add_parameter("bias", np.zeros(num_classes))

    def logits(self, h: Tensor) -> Tensor:
        return ops.add(ops.matmul(h, self.weight), self.bias)


@dataclass
class TeacherOutput:
    probs: Tensor
    logits: Tensor

    def predictions(self) -> np.ndarray:
        return self.probs.data.argmax(axis=-1)


@dataclass
class StudentOutput:
    probs: Tensor
    probs_tau: Tensor
    logits: Tensor


def teacher_forward(fused: Tensor, head: ClassifierHead) -> TeacherOutput:
    """Logits of the fused sequence and their softmax over classes."""
    logits = head.logits(fused)
    return TeacherOutput(probs=ops.softmax(logits, axis=-1), logits=logits)


def soften(logits: Tensor, temperature: float) -> Tensor:
    """softmax(logits / tau). tau == 1 returns the plain softmax."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    if temperature == 1.0:
        return ops.softmax(logits, axis=-1)
    return ops.softmax(ops.scale(logits, 1.0 / temperature), axis=-1)


def student_forward(enhanced: Tensor, head: ClassifierHead, temperature: float) -> StudentOutput:
    """Logits of ReLU(enhanced); returns the softmax and the softmax at temperature tau."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    logits = head.logits(ops.relu(enhanced))
    probs = ops.softmax(logits, axis=-1)
    probs_tau = probs if temperature == 1.0 else soften(logits, temperature)
    return StudentOutput(probs=probs, probs_tau=probs_tau, logits=logits)
