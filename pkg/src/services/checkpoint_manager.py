"""
Checkpoint Management Service for SDT
Run folders, binary checkpoints, run manifests and JSON-lines loss logs

Checkpoint layout (all integers little-endian):

    b"SDTCKPT1"
    uint32 header length, then a UTF-8 JSON header {"config": ModelConfig, "num_params": P}
    P records of: uint32 name length, UTF-8 name, uint32 ndim, ndim x uint64 dims,
                  prod(dims) float64 values
"""
import datetime
import json
import os
import struct
import subprocess
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.config_pipeline import sdt_config
from src.config_pipeline.run_config import ModelConfig, RunConfig, parse_config
from src.core import ConfigError
from src.utils.log_service import get_logger

log = get_logger(__name__)

MAGIC = b"SDTCKPT1"
CHECKPOINT_FILE = "model.ckpt"
MANIFEST_FILE = "manifest.json"
LOSS_LOG_FILE = "loss_log.jsonl"
EVAL_FILE = "eval_report.json"


def save_checkpoint(path: str, config: ModelConfig, state: Dict[str, np.ndarray]) -> str:
    """Write `state` (name -> array) and its model config to `path`."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    header = json.dumps({"config": config.model_dump(), "num_params": len(state)}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for name, value in state.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", value.ndim))
            f.write(struct.pack(f"<{value.ndim}Q", *value.shape))
            f.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    log.info(f"Checkpoint written to {path} ({len(state)} tensors)")
    return path


def load_checkpoint(path: str) -> Tuple[ModelConfig, Dict[str, np.ndarray]]:
    """
    Read a checkpoint written by `save_checkpoint`.

    Raises:
        ConfigError: If the file is not a checkpoint or is truncated.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(MAGIC):
        raise ConfigError(f"{path} is not an SDT checkpoint")
    try:
        pos = len(MAGIC)
        (header_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        header = json.loads(blob[pos:pos + header_len].decode("utf-8"))
        pos += header_len
        state = {}
        for _ in range(header["num_params"]):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}Q", blob, pos)
            pos += 8 * ndim
            count = int(np.prod(shape)) if ndim else 1
            state[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * count
    except (struct.error, ValueError, KeyError) as e:
        raise ConfigError(f"corrupt checkpoint {path}: {e}") from None
    return parse_config(ModelConfig, header["config"]), state


def git_commit() -> str:
    """Current commit hash, or "unknown" outside a git checkout."""
    try:
        result = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5)
        return result.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


class CheckpointManager:
    """
    Owns the output folder of one run: checkpoint, manifest, loss log and
    evaluation reports.
    """

    def __init__(self, run_name: Optional[str] = None, run_folder: Optional[str] = None):
        if run_folder is None:
            run_name = run_name or datetime.datetime.now().strftime("run_%Y%m%d_%H%M%S")
            run_folder = sdt_config.get_run_folder(run_name)
        self.run_folder = os.path.abspath(run_folder)
        os.makedirs(self.run_folder, exist_ok=True)

    @property
    def checkpoint_path(self) -> str:
        return os.path.join(self.run_folder, CHECKPOINT_FILE)

    @property
    def loss_log_path(self) -> str:
        return os.path.join(self.run_folder, LOSS_LOG_FILE)

    def save_model(self, config: ModelConfig, state: Dict[str, np.ndarray]) -> str:
        return save_checkpoint(self.checkpoint_path, config, state)

    def write_manifest(self, config: RunConfig, extra: Optional[dict] = None) -> str:
        """Run config, seed and commit, for reproducing the run."""
        manifest = {
            "created": datetime.datetime.now().isoformat(timespec="seconds"),
            "seed": config.seed,
            "commit": git_commit(),
            "config": config.model_dump(),
        }
        manifest.update(extra or {})
        path = os.path.join(self.run_folder, MANIFEST_FILE)
        with open(path, "w") as f:
            json.dump(manifest, f, indent=2)
        log.info(f"Saved run manifest to {path}")
        return path

    def reset_loss_log(self):
        open(self.loss_log_path, "w").close()

    def append_loss(self, row: dict):
        with open(self.loss_log_path, "a") as f:
            f.write(json.dumps(row) + "\n")

    def read_loss_log(self) -> List[dict]:
        if not os.path.exists(self.loss_log_path):
            return []
        with open(self.loss_log_path, "r") as f:
            return [json.loads(line) for line in f if line.strip()]

    def write_json(self, filename: str, payload) -> str:
        path = os.path.join(self.run_folder, filename)
        with open(path, "w") as f:
            json.dump(payload, f, indent=2)
        return path
