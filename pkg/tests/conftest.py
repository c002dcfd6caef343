from typing import Callable, Sequence

import numpy as np
import pytest

from src.config_pipeline import ModelConfig, RunConfig
from src.core import Tensor, make_rng
from src.data import synth_generate


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar f() with respect to every entry of x (modified in place)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = f()
        flat[i] = original - h
        minus = f()
        flat[i] = original
        gflat[i] = (plus - minus) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check_op_grads(build: Callable[[Sequence[Tensor]], Tensor], arrays: Sequence[np.ndarray],
                   h: float = 1e-6) -> float:
    """
    Max relative error between backward and central differences of
    sum(build(inputs) * R) for a fixed random R.
    """
    inputs = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    weights = make_rng(123, "init").normal(size=build(inputs).shape)

    def value() -> float:
        return float((build(inputs).data * weights).sum())

    loss = (build(inputs) * Tensor(weights)).sum()
    loss.backward()
    worst = 0.0
    for t in inputs:
        numeric = numeric_grad(value, t.data, h)
        worst = max(worst, relative_error(t.grad, numeric))
    return worst


TINY = {
    "d_model": 8,
    "heads": 2,
    "d_ff": 8,
    "num_classes": 3,
    "num_speakers": 2,
    "dropout": 0.0,
    "feature_dims": {"t": 5, "a": 4, "v": 3},
}


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig.model_validate(TINY)


@pytest.fixture
def small_dataset():
    return synth_generate(0, n_conversations=4, len_range=(3, 6), num_classes=3,
                          dims={"t": 5, "a": 4, "v": 3})


@pytest.fixture
def fast_run(small_dataset) -> RunConfig:
    """Tiny model and a few epochs on `small_dataset`."""
    return RunConfig.model_validate({
        "model": {**TINY, "d_model": 8},
        "lr": 3e-3,
        "batch_size": 2,
        "epochs": 3,
        "val_fraction": 0.0,
        "seed": 0,
    })


@pytest.fixture
def rng():
    return make_rng(0, "init")


@pytest.fixture(autouse=True)
def _isolated_folders(tmp_path):
    """Point the process settings at a temporary directory for every test."""
    from src.config_pipeline import sdt_config

    saved = dict(sdt_config.config)
    sdt_config.set("OUTPUT_FOLDER", str(tmp_path / "runs"))
    sdt_config.set("DATA_FOLDER", str(tmp_path / "data"))
    yield
    sdt_config.config = saved
