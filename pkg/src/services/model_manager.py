"""
Model Management Service for SDT
Centralized model construction, dataset alignment and checkpoint loading
"""
import os
from typing import Dict, Optional, Tuple

from src.config_pipeline.run_config import ModelConfig
from src.core import ConfigError, make_rng
from src.data.dataset import DatasetHeader
from src.model import SDTModel, parameter_count
from src.utils.log_service import get_logger

from .checkpoint_manager import load_checkpoint

log = get_logger(__name__)


class ModelManager:
    """
    Builds SDT models from configs and keeps loaded checkpoints in memory so that
    the API and repeated CLI commands do not re-read them.
    """

    def __init__(self):
        self._cache: Dict[str, Tuple[float, SDTModel]] = {}

    def build(self, config: ModelConfig, seed: int = 0) -> SDTModel:
        """
        Create a freshly initialized model from the "init" stream of `seed`.

        Args:
            config (ModelConfig): Architecture and ablation flags
            seed (int): Run seed

        Returns:
            SDTModel: The initialized model
        """
        model = SDTModel(config, make_rng(seed, "init"))
        expected = parameter_count(config)
        actual = model.num_parameters()
        if actual != expected:
            raise ConfigError(f"parameter count {actual} differs from analytic count {expected}")
        log.info(f"Built SDT model: fusion={config.fusion}, modalities={''.join(config.modalities)}, "
                 f"{actual} parameters")
        return model

    def fit_to_dataset(self, config: ModelConfig, header: DatasetHeader) -> ModelConfig:
        """
        Take feature dimensions, class count and speaker vocabulary size from a
        dataset header, logging every value that changes.
        """
        updates = {
            "feature_dims": header.feature_dims,
            "num_classes": header.num_classes,
            "num_speakers": max(1, len(header.speaker_vocab)),
        }
        changed = {k: v for k, v in updates.items() if getattr(config, k) != v}
        if changed:
            log.info(f"Aligning model config with dataset '{header.name}': {changed}")
        return ModelConfig.model_validate({**config.model_dump(), **updates})

    def analytic_parameter_count(self, config: ModelConfig) -> int:
        return parameter_count(config)

    def load(self, path: str) -> SDTModel:
        """
        Load a checkpoint, reusing the cached model while the file is unchanged.

        Args:
            path (str): Checkpoint file path

        Returns:
            SDTModel: The model with the stored weights
        """
        path = os.path.abspath(path)
        mtime = os.path.getmtime(path)
        cached = self._cache.get(path)
        if cached is not None and cached[0] == mtime:
            return cached[1]
        config, state = load_checkpoint(path)
        model = SDTModel(config, make_rng(0, "init"))
        model.load_state_dict(state)
        self._cache[path] = (mtime, model)
        log.info(f"Loaded checkpoint {path}")
        return model

    def clear_cache(self):
        self._cache.clear()


# Global model manager instance
model_manager = ModelManager()
