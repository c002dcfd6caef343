from .emotional_shift import ShiftSplit, shift_buckets, emotional_shift_split
from .metrics import ClassMetrics, EvalReport, compute_report

__all__ = [
    "ShiftSplit",
    "shift_buckets",
    "emotional_shift_split",
    "ClassMetrics",
    "EvalReport",
    "compute_report",
]
