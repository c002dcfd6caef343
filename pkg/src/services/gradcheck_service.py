"""
Gradient Check Service for SDT
End-to-end central finite-difference check of the training loss on a tiny model
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.config_pipeline.run_config import ModelConfig
from src.core import Tensor, make_rng, no_grad
from src.model import SDTModel
from src.model.heads import soften
from src.utils.log_service import get_logger

log = get_logger(__name__)

TINY_SIZES: Dict[str, Any] = {
    "d_model": 8,
    "heads": 2,
    "d_ff": 8,
    "num_classes": 3,
    "num_speakers": 2,
    "dropout": 0.0,
    "feature_dims": {"t": 5, "a": 4, "v": 3},
}


@dataclass
class GradcheckReport:
    """Relative error ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-5) per parameter."""
    errors: Dict[str, float]
    tolerance: float
    checked_entries: int
    zero_groups: list = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def worst(self) -> Optional[str]:
        return max(self.errors, key=self.errors.get) if self.errors else None

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_error": self.max_error,
            "worst": self.worst,
            "tolerance": self.tolerance,
            "checked_entries": self.checked_entries,
            "errors": self.errors,
        }


def tiny_problem(seed: int = 0, n: int = 3, sizes: Optional[Dict[str, Any]] = None):
    """A random tiny model with one conversation of n utterances and its labels."""
    config = ModelConfig.model_validate({**TINY_SIZES, **(sizes or {})})
    model = SDTModel(config, make_rng(seed, "init"))
    rng = make_rng(seed, "synth")
    features = {m: rng.normal(size=(1, n, config.feature_dims[m])) for m in config.modalities}
    speakers = rng.integers(0, config.num_speakers, size=(1, n))
    labels = rng.integers(0, config.num_classes, size=(1, n))
    return model, features, speakers, labels


# Denominators are floored so that gradients that vanish analytically (e.g. key
# biases, which softmax ignores) are judged by their absolute round-off.
NORM_FLOOR = 1e-5


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), NORM_FLOOR)
    return float(np.linalg.norm(a - b) / denom)


def gradcheck(seed: int = 0, sizes: Optional[Dict[str, Any]] = None, n: int = 3,
              gammas: Optional[Tuple[float, float, float]] = None, samples: Optional[int] = 8,
              h: float = 1e-5, tolerance: float = 1e-4) -> GradcheckReport:
    """
    Compare backward gradients of the full training loss with central differences.

    Args:
        seed (int): Seeds the model weights and the random conversation.
        sizes (dict, optional): ModelConfig overrides on top of TINY_SIZES.
        samples (int, optional): Entries checked per parameter; None checks all.
        h (float): Finite-difference step.
        tolerance (float): Largest accepted relative error.

    Returns:
        GradcheckReport: Per-parameter relative errors; `passed` is False when any
        exceeds the tolerance.
    """
    model, features, speakers, labels = tiny_problem(seed, n, sizes)
    pick = make_rng(seed, "split")

    model.zero_grad()
    report, out = model.compute_loss(features, speakers, None, labels, gammas=gammas)
    report.objective.backward()

    # KL targets stay at their unperturbed values while the teacher is detached.
    target = None
    if not model.config.kl_backprop_teacher:
        target = Tensor(soften(out.teacher.logits, model.config.temperature).data.copy())

    def loss_value() -> float:
        with no_grad():
            value, _ = model.compute_loss(features, speakers, None, labels, gammas=gammas, teacher_target=target)
        return value.objective.item()

    errors: Dict[str, float] = {}
    zero_groups = []
    checked = 0
    for name, param in model.named_parameters():
        analytic = np.zeros_like(param.data) if param.grad is None else param.grad
        if param.grad is None:
            zero_groups.append(name)
        flat = param.data.reshape(-1)
        count = flat.size if samples is None else min(samples, flat.size)
        indices = pick.choice(flat.size, size=count, replace=False)
        numeric = np.empty(count)
        for j, index in enumerate(indices):
            original = flat[index]
            flat[index] = original + h
            plus = loss_value()
            flat[index] = original - h
            minus = loss_value()
            flat[index] = original
            numeric[j] = (plus - minus) / (2 * h)
        errors[name] = _relative_error(analytic.reshape(-1)[indices], numeric)
        checked += count

    result = GradcheckReport(errors=errors, tolerance=tolerance, checked_entries=checked, zero_groups=zero_groups)
    if result.passed:
        log.info(f"Gradcheck passed: max relative error {result.max_error:.2e} over {checked} entries")
    else:
        log.error(f"Gradcheck failed: worst parameter {result.worst} with relative error {result.max_error:.2e}")
    return result
