"""
Run configuration: model hyperparameters, optimizer settings and ablation flags.

Configs are pydantic models validated on construction. `load_run_config` reads
one JSON file, applies an optional dataset preset and dotted `key=value`
overrides, and reports any violation as ConfigError.
"""
import json
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core import ConfigError

MODALITIES: Tuple[str, ...] = ("t", "a", "v")
MODALITY_NAMES = {"t": "text", "a": "audio", "v": "visual"}
FUSIONS = ("gated", "add", "concat", "unicat")

T = TypeVar("T", bound=BaseModel)


class ModelConfig(BaseModel):
    """Every hyperparameter of the network and its losses."""

    model_config = ConfigDict(extra="forbid")

    d_model: int = 1024
    heads: int = 8
    layers: int = 1
    d_ff: int = 1024
    kernel_sizes: Dict[str, int] = Field(default_factory=lambda: {"t": 1, "a": 1, "v": 1})
    feature_dims: Dict[str, int] = Field(default_factory=lambda: {"t": 1024, "a": 1582, "v": 342})
    num_classes: int = 6
    num_speakers: int = 2
    max_len: int = 256
    dropout: float = 0.5
    layer_norm_eps: float = 1e-5
    temperature: float = 1.0
    gammas: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    kl_backprop_teacher: bool = False

    no_pe: bool = False
    no_se: bool = False
    no_intra: bool = False
    no_inter: bool = False
    modalities: List[str] = Field(default_factory=lambda: list(MODALITIES))
    fusion: Literal["gated", "add", "concat", "unicat"] = "gated"

    @field_validator("modalities")
    @classmethod
    def _canonical_modalities(cls, value: List[str]) -> List[str]:
        unknown = set(value) - set(MODALITIES)
        if unknown:
            raise ValueError(f"unknown modalities {sorted(unknown)}")
        if not value:
            raise ValueError("at least one modality is required")
        return [m for m in MODALITIES if m in value]

    @model_validator(mode="after")
    def _check_consistency(self) -> "ModelConfig":
        if self.d_model % 2:
            raise ValueError(f"d_model must be even for sinusoidal positions, got {self.d_model}")
        if self.heads < 1 or self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.layers < 1 or self.d_ff < 1:
            raise ValueError("layers and d_ff must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.num_speakers < 0:
            raise ValueError("num_speakers must be non-negative")
        if any(g < 0 for g in self.gammas):
            raise ValueError("loss weights must be non-negative")
        for m in self.modalities:
            k = self.kernel_sizes.get(m, 1)
            if k < 1 or k % 2 == 0:
                raise ValueError(f"kernel size for modality {m} must be odd, got {k}")
            if self.feature_dims.get(m, 0) < 1:
                raise ValueError(f"feature dimension for modality {m} must be positive")
        return self

    def kernel_size(self, modality: str) -> int:
        return self.kernel_sizes.get(modality, 1)

    def pairs(self) -> List[Tuple[str, str]]:
        """(source n, target m) pairs that get their own transformer block."""
        pairs = []
        for m in self.modalities:
            for n in self.modalities:
                if n == m and self.no_intra:
                    continue
                if n != m and self.no_inter:
                    continue
                pairs.append((n, m))
        return pairs

    def gated_pairs(self) -> List[Tuple[str, str]]:
        """(n, m) pairs whose representation passes a unimodal sigmoid gate."""
        if self.fusion != "gated":
            return []
        return [(n, m) for m in self.modalities for n in self.modalities if n == m or not self.no_inter]


class RunConfig(BaseModel):
    """Model config plus dataset, optimizer, schedule and loss ablation flags."""

    model_config = ConfigDict(extra="forbid")

    dataset_path: Optional[str] = None
    test_path: Optional[str] = None
    val_fraction: float = 0.1
    model: ModelConfig = Field(default_factory=ModelConfig)

    lr: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 16
    epochs: int = 100
    patience: int = 20
    seed: int = 0
    eval_workers: int = 1

    no_ce: bool = False
    no_kl: bool = False

    run_name: Optional[str] = None

    @model_validator(mode="after")
    def _check_run(self) -> "RunConfig":
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0 or self.patience < 1:
            raise ValueError("epochs must be >= 0 and patience >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        return self

    @property
    def effective_gammas(self) -> Tuple[float, float, float]:
        g1, g2, g3 = self.model.gammas
        return g1, 0.0 if self.no_ce else g2, 0.0 if self.no_kl else g3


PRESETS: Dict[str, Dict[str, Any]] = {
    "iemocap": {
        "lr": 1e-4,
        "batch_size": 16,
        "model.temperature": 1.0,
        "model.feature_dims": {"t": 1024, "a": 1582, "v": 342},
        "model.num_classes": 6,
    },
    "meld": {
        "lr": 5e-6,
        "batch_size": 8,
        "model.temperature": 8.0,
        "model.feature_dims": {"t": 1024, "a": 300, "v": 342},
        "model.num_classes": 7,
    },
}


def parse_config(cls: Type[T], data: Dict[str, Any]) -> T:
    """Validate `data` as `cls`, turning pydantic errors into ConfigError."""
    try:
        return cls.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid {cls.__name__}: {e}") from None


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Set dotted keys (e.g. "model.heads") in a nested dict, returning a new dict."""
    result = json.loads(json.dumps(data))
    for dotted, value in overrides.items():
        target = result
        *parents, leaf = dotted.split(".")
        for key in parents:
            target = target.setdefault(key, {})
        target[leaf] = value
    return result


def parse_assignments(assignments: Sequence[str]) -> Dict[str, Any]:
    """["model.heads=4", "no_kl=true"] -> {"model.heads": 4, "no_kl": True}."""
    parsed = {}
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parsed[key.strip()] = _parse_value(raw.strip())
    return parsed


def load_run_config(path: Optional[str] = None, preset: Optional[str] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Build a RunConfig from a JSON file, a dataset preset and overrides, applied
    in that order; later sources win.

    Raises:
        ConfigError: On unknown preset, unreadable file or failed validation.
    """
    data: Dict[str, Any] = {}
    if path:
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        data = apply_overrides(data, PRESETS[preset])
    if overrides:
        data = apply_overrides(data, overrides)
    return parse_config(RunConfig, data)
