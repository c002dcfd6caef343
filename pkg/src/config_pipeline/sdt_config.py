"""
SDT Configuration Manager
Centralized process settings for training runs, checkpoints and the serving API
"""
import os
from typing import Any, Dict

from dotenv import load_dotenv

load_dotenv()


class SDTConfig:
    """
    Process-level settings (folders, logging, API) read from environment
    variables, with `.env` loaded first. Model and training hyperparameters do
    not live here; see `run_config`.
    """

    def __init__(self):
        self.config: Dict[str, Any] = {}
        self._load_environment_defaults()

    def _load_environment_defaults(self):
        """Load default values from environment variables"""
        # Folder paths
        self.set_default("OUTPUT_FOLDER", os.getenv("OUTPUT_FOLDER", "runs"))
        self.set_default("DATA_FOLDER", os.getenv("DATA_FOLDER", "data"))

        # Logging
        self.set_default("LOG_LEVEL", os.getenv("LOG_LEVEL", "INFO"))
        self.set_default("LOG_FILE", os.getenv("LOG_FILE"))

        # API Configuration
        self.set_default("API_HOST", os.getenv("API_HOST", "0.0.0.0"))
        self.set_default("API_PORT", int(os.getenv("API_PORT", "5050")))
        self.set_default("API_CHECKPOINT", os.getenv("API_CHECKPOINT"))

        # Evaluation
        self.set_default("EVAL_WORKERS", int(os.getenv("EVAL_WORKERS", "1")))

    def set_default(self, key: str, value):
        """Set a default value only if the key doesn't already exist"""
        if key not in self.config:
            self.config[key] = value

    def get(self, key: str, default=None):
        return self.config.get(key, default)

    def set(self, key: str, value):
        self.config[key] = value

    # Convenience properties for commonly used paths
    @property
    def output_folder(self) -> str:
        return os.path.abspath(self.get("OUTPUT_FOLDER"))

    @property
    def data_folder(self) -> str:
        return os.path.abspath(self.get("DATA_FOLDER"))

    @property
    def eval_workers(self) -> int:
        return max(1, int(self.get("EVAL_WORKERS")))

    def ensure_directories(self):
        """Ensure all required directories exist"""
        for directory in (self.output_folder, self.data_folder):
            os.makedirs(directory, exist_ok=True)

    def get_run_folder(self, run_name: str) -> str:
        """Get the output folder for a specific run"""
        return os.path.join(self.output_folder, run_name)

    def get_dataset_path(self, name: str) -> str:
        """Resolve a dataset name relative to DATA_FOLDER (absolute paths pass through)"""
        return name if os.path.isabs(name) else os.path.join(self.data_folder, name)


# Global configuration instance
sdt_config = SDTConfig()
