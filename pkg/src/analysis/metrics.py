"""
Classification metrics for utterance-level emotion predictions.
"""
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from sklearn.metrics import confusion_matrix, f1_score, precision_score, recall_score

from src.core import DimensionError
from src.utils.log_service import get_logger

from .emotional_shift import ShiftSplit

log = get_logger(__name__)


class ClassMetrics(BaseModel):
    name: str
    accuracy: float
    f1: float
    precision: float
    recall: float
    support: int


class EvalReport(BaseModel):
    """
    Overall accuracy, support-weighted F1, per-class accuracy/F1 and the C x C
    confusion matrix (rows: truth, columns: prediction).
    """
    accuracy: float
    weighted_f1: float
    per_class: List[ClassMetrics]
    confusion: List[List[int]]
    absent_classes: List[str] = Field(default_factory=list)
    num_utterances: int
    shift: Optional[ShiftSplit] = None

    def to_dict(self) -> dict:
        return self.model_dump()

    def to_markdown(self, title: Optional[str] = None) -> str:
        """One-row table: ACC and F1 per class, then overall ACC and w-F1 (percent)."""
        header = ["Model"] + [f"{c.name} ACC | {c.name} F1" for c in self.per_class] + ["ACC", "w-F1"]
        cells = [title or "SDT"]
        cells += [f"{100 * c.accuracy:.2f} | {100 * c.f1:.2f}" for c in self.per_class]
        cells += [f"{100 * self.accuracy:.2f}", f"{100 * self.weighted_f1:.2f}"]
        columns = " | ".join(header).count("|") + 1
        lines = [
            "| " + " | ".join(header) + " |",
            "|" + "---|" * columns,
            "| " + " | ".join(cells) + " |",
        ]
        if self.shift is not None:
            lines.append("")
            lines.append(f"Emotional shift: {100 * self.shift.shift_accuracy:.2f} ({self.shift.shift_count}), "
                         f"no shift: {100 * self.shift.noshift_accuracy:.2f} ({self.shift.noshift_count})")
        return "\n".join(lines)


def compute_report(y_true: Sequence[int], y_pred: Sequence[int], label_names: Sequence[str],
                   shift: Optional[ShiftSplit] = None) -> EvalReport:
    """
    Build an EvalReport over classes 0..C-1. A class absent from both truth and
    predictions gets F1 0 and is listed in `absent_classes`.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise DimensionError(f"truth {y_true.shape} and predictions {y_pred.shape} must be equal-length vectors")
    if y_true.size == 0:
        raise DimensionError("cannot evaluate zero utterances")
    labels = list(range(len(label_names)))

    cm = confusion_matrix(y_true, y_pred, labels=labels)
    support = cm.sum(axis=1)
    per_class_acc = np.divide(np.diag(cm), support, out=np.zeros(len(labels)), where=support > 0)
    f1 = f1_score(y_true, y_pred, labels=labels, average=None, zero_division=0)
    precision = precision_score(y_true, y_pred, labels=labels, average=None, zero_division=0)
    recall = recall_score(y_true, y_pred, labels=labels, average=None, zero_division=0)
    weighted = float(f1_score(y_true, y_pred, labels=labels, average="weighted", zero_division=0))

    predicted = cm.sum(axis=0)
    absent = [label_names[c] for c in labels if support[c] == 0 and predicted[c] == 0]
    if absent:
        log.info(f"Classes absent from truth and predictions (F1 set to 0): {absent}")

    per_class = [
        ClassMetrics(name=label_names[c], accuracy=float(per_class_acc[c]), f1=float(f1[c]),
                     precision=float(precision[c]), recall=float(recall[c]), support=int(support[c]))
        for c in labels
    ]
    return EvalReport(
        accuracy=float(np.mean(y_true == y_pred)),
        weighted_f1=weighted,
        per_class=per_class,
        confusion=cm.astype(int).tolist(),
        absent_classes=absent,
        num_utterances=int(y_true.size),
        shift=shift,
    )
