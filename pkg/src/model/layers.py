"""
Parameter containers shared by every model component.
"""
import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.core import Parameter, Tensor, ops


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """U(-sqrt(1/fan_in), +sqrt(1/fan_in))."""
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """
    Minimal container: holds parameters and child modules in insertion order and
    names them with dotted paths.
    """

    def __init__(self):
        self._parameters: Dict[str, Parameter] = {}
        self._modules: Dict[str, "Module"] = {}

    def add_parameter(self, name: str, data: np.ndarray) -> Parameter:
        param = Parameter(data, name=name)
        self._parameters[name] = param
        return param

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, module in self._modules.items():
            yield from module.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def assign_names(self):
        """Write each parameter's full dotted path into Parameter.name."""
        for name, param in self.named_parameters():
            param.name = name

    def zero_grad(self):
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise KeyError(f"state mismatch; missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, param in own.items():
            if state[name].shape != param.shape:
                raise KeyError(f"shape mismatch for {name}: {state[name].shape} vs {param.shape}")
            param.data = np.array(state[name], dtype=np.float64)


class Linear(Module):
    """x @ W + b with W of shape [d_in, d_out]."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.weight = self.add_parameter("weight", uniform_init(rng, (d_in, d_out), d_in))
        self.bias: Optional[Parameter] = self.add_parameter("bias", np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ops.matmul(x, self.weight)
        return ops.add(out, self.bias) if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.add_parameter("gamma", np.ones(d))
        self.beta = self.add_parameter("beta", np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Conv1d(Module):
    """Same-padded temporal convolution, kernel [k, d_in, d_out]."""

    def __init__(self, d_in: int, d_out: int, kernel_size: int, rng: np.random.Generator):
        super().__init__()
        self.kernel = self.add_parameter(
            "kernel", uniform_init(rng, (kernel_size, d_in, d_out), kernel_size * d_in)
        )
        self.bias = self.add_parameter("bias", np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.kernel, self.bias)
