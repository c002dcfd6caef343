"""
Training objective: task cross-entropy on the teacher, hard-label cross-entropy
and softened KL(student || teacher) on every student, combined as

    L = g1 * L_task + g2 * sum_m L_CE^m + g3 * sum_m L_KL^m

Labels are class indices with -1 (or a False mask entry) on padded utterances;
every mean runs over real utterances only.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.core import ConfigError, NumericalError, Tensor, ops
from src.utils.log_service import get_logger

from .heads import StudentOutput, soften

log = get_logger(__name__)

LOG_FLOOR = 1e-12
MODALITY_ORDER = ("t", "a", "v")


def to_one_hot(labels, num_classes: int, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Class indices -> one-hot rows; masked-out positions become zero rows.

    Raises:
        ConfigError: If a real utterance carries a label outside [0, C).
    """
    labels = np.asarray(labels, dtype=np.int64)
    valid = labels >= 0 if mask is None else np.asarray(mask, dtype=bool)
    bad = valid & ((labels < 0) | (labels >= num_classes))
    if bad.any():
        raise ConfigError(f"label {int(labels[bad][0])} is outside [0, {num_classes})")
    one_hot = np.zeros(labels.shape + (num_classes,), dtype=np.float64)
    safe = np.where(valid, labels, 0)
    np.put_along_axis(one_hot, safe[..., None], 1.0, axis=-1)
    return one_hot * valid[..., None]


def _targets(probs: Tensor, labels, mask: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    if labels.ndim == probs.ndim:
        # already one-hot
        valid = labels.sum(axis=-1) > 0 if mask is None else np.asarray(mask, dtype=bool)
        return labels.astype(np.float64) * valid[..., None], valid
    if mask is None:
        mask = labels >= 0
    mask = np.asarray(mask, dtype=bool)
    return to_one_hot(labels, probs.shape[-1], mask), mask


def _masked_mean(per_row: Tensor, valid: np.ndarray) -> Tensor:
    count = int(valid.sum())
    if count == 0:
        raise ConfigError("loss over zero real utterances")
    return ops.scale(ops.sum(ops.mul(per_row, valid.astype(np.float64))), 1.0 / count)


def cross_entropy(probs: Tensor, labels, mask: Optional[np.ndarray] = None) -> Tensor:
    """-(1/N) sum_i sum_j y_ij log max(p_ij, 1e-12) over real utterances."""
    targets, valid = _targets(probs, labels, mask)
    per_row = ops.scale(ops.sum(ops.mul(ops.log(probs, LOG_FLOOR), targets), axis=-1), -1.0)
    return _masked_mean(per_row, valid)


def task_loss(probs: Tensor, labels, mask: Optional[np.ndarray] = None) -> Tensor:
    return cross_entropy(probs, labels, mask)


def student_ce_loss(probs: Tensor, labels, mask: Optional[np.ndarray] = None) -> Tensor:
    return cross_entropy(probs, labels, mask)


def kl_loss(student_tau: Tensor, teacher_tau: Tensor, mask: Optional[np.ndarray] = None,
            backprop_teacher: bool = False) -> Tensor:
    """
    (1/N) sum_i sum_j s_ij log(s_ij / t_ij), i.e. KL(student || teacher), with
    0 log 0 = 0. Teacher probabilities are constants unless `backprop_teacher`.
    Teacher values below 1e-12 are clamped; a warning is logged when that
    happens where the student is positive.
    """
    if student_tau.shape != teacher_tau.shape:
        raise ConfigError(f"student {student_tau.shape} and teacher {teacher_tau.shape} disagree")
    if mask is None:
        mask = np.ones(student_tau.shape[:-1], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    teacher = teacher_tau if backprop_teacher else teacher_tau.detach()

    clamped = (teacher.data <= LOG_FLOOR) & (student_tau.data > LOG_FLOOR) & mask[..., None]
    if clamped.any():
        log.warning(f"KL: teacher probability clamped at {LOG_FLOOR} for {int(clamped.sum())} entries")

    log_ratio = ops.sub(ops.log(student_tau, LOG_FLOOR), ops.log(teacher, LOG_FLOOR))
    per_row = ops.sum(ops.mul(student_tau, log_ratio), axis=-1)
    return _masked_mean(per_row, mask)


@dataclass
class LossReport:
    """Scalar loss components of one forward pass; `objective` is the differentiable total."""
    task: float
    ce: Dict[str, float]
    kl: Dict[str, float]
    total: float
    gammas: Tuple[float, float, float]
    temperature: float
    objective: Optional[Tensor] = field(default=None, repr=False, compare=False)

    def to_json_row(self, epoch: Optional[int] = None) -> dict:
        row = {} if epoch is None else {"epoch": epoch}
        row["task"] = self.task
        for m in MODALITY_ORDER:
            row[f"ce_{m}"] = self.ce.get(m, 0.0)
        for m in MODALITY_ORDER:
            row[f"kl_{m}"] = self.kl.get(m, 0.0)
        row["total"] = self.total
        return row

    @classmethod
    def average(cls, reports: Sequence["LossReport"], weights: Optional[Sequence[float]] = None) -> "LossReport":
        """Weighted mean of several reports (e.g. the batches of one epoch)."""
        if not reports:
            raise ConfigError("cannot average zero loss reports")
        w = np.ones(len(reports)) if weights is None else np.asarray(weights, dtype=np.float64)
        w = w / w.sum()

        def mean_of(values):
            return float(np.dot(w, values))

        keys = reports[0].ce.keys()
        return cls(
            task=mean_of([r.task for r in reports]),
            ce={m: mean_of([r.ce[m] for r in reports]) for m in keys},
            kl={m: mean_of([r.kl[m] for r in reports]) for m in keys},
            total=mean_of([r.total for r in reports]),
            gammas=reports[0].gammas,
            temperature=reports[0].temperature,
        )


def _component(name: str, fn, *args, **kwargs) -> Tensor:
    try:
        return fn(*args, **kwargs)
    except NumericalError as e:
        raise NumericalError(name, f"non-finite value in loss component {name} ({e.op})") from None


def total_loss(task: Tensor, ce: Mapping[str, Tensor], kl: Mapping[str, Tensor],
               gammas: Tuple[float, float, float], temperature: float) -> LossReport:
    """
    Combine the components. Terms whose weight is 0 are reported but left out of
    the objective, so they contribute no gradient.
    """
    g1, g2, g3 = gammas
    terms = []
    if g1:
        terms.append(ops.scale(task, g1))
    if g2:
        terms.extend(ops.scale(v, g2) for v in ce.values())
    if g3:
        terms.extend(ops.scale(v, g3) for v in kl.values())
    objective = terms[0] if terms else ops.scale(task, 0.0)
    for term in terms[1:]:
        objective = ops.add(objective, term)

    task_value = task.item()
    ce_values = {m: v.item() for m, v in ce.items()}
    kl_values = {m: max(0.0, v.item()) for m, v in kl.items()}
    total = g1 * task_value + g2 * sum(ce_values.values()) + g3 * sum(kl_values.values())
    if not np.isfinite(total):
        raise NumericalError("total", "non-finite total loss")
    return LossReport(task=task_value, ce=ce_values, kl=kl_values, total=total,
                      gammas=(g1, g2, g3), temperature=temperature, objective=objective)


def compute_losses(teacher_probs: Tensor, teacher_logits: Tensor, students: Mapping[str, StudentOutput],
                   labels, mask: Optional[np.ndarray], gammas: Tuple[float, float, float],
                   temperature: float, backprop_teacher: bool = False,
                   teacher_target: Optional[Tensor] = None) -> LossReport:
    """
    All components for one forward pass; `mask` defaults to labels >= 0.
    `teacher_target` replaces the softened teacher distribution in every KL term.
    """
    if mask is None:
        mask = np.asarray(labels) >= 0
    task = _component("task", task_loss, teacher_probs, labels, mask)
    teacher_tau = soften(teacher_logits, temperature) if teacher_target is None else teacher_target
    ce, kl = {}, {}
    for m, out in students.items():
        ce[m] = _component(f"ce_{m}", student_ce_loss, out.probs, labels, mask)
        kl[m] = _component(f"kl_{m}", kl_loss, out.probs_tau, teacher_tau, mask, backprop_teacher)
    return total_loss(task, ce, kl, gammas, temperature)
