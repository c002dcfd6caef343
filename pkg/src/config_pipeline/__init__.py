from .sdt_config import SDTConfig, sdt_config
from .run_config import (
    MODALITIES,
    MODALITY_NAMES,
    FUSIONS,
    PRESETS,
    ModelConfig,
    RunConfig,
    parse_config,
    apply_overrides,
    parse_assignments,
    load_run_config,
)

__all__ = [
    "SDTConfig",
    "sdt_config",
    "MODALITIES",
    "MODALITY_NAMES",
    "FUSIONS",
    "PRESETS",
    "ModelConfig",
    "RunConfig",
    "parse_config",
    "apply_overrides",
    "parse_assignments",
    "load_run_config",
]
