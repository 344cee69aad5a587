"""Parameter storage, dense layers, Adam, and checkpoint serialization."""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError, TrainingError

CHECKPOINT_FORMAT_VERSION = 1

ACTIVATIONS = {
    "identity": lambda x: x,
    "relu": ad.relu,
    "tanh": ad.tanh,
    "silu": ad.silu,
    "softplus": ad.softplus,
    "sigmoid": ad.sigmoid,
}

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ParamStore:
    """Named learnable tensors plus per-parameter Adam state."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._moment1: dict[str, np.ndarray] = {}
        self._moment2: dict[str, np.ndarray] = {}
        self._steps: dict[str, int] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ContractError(f"parameter {name!r} already registered")
        tensor = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        # parameters stay gradient-tracked even when created under no_grad
        tensor.requires_grad = True
        self._params[name] = tensor
        self._moment1[name] = np.zeros_like(tensor.data)
        self._moment2[name] = np.zeros_like(tensor.data)
        self._steps[name] = 0
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def step_count(self, name: str) -> int:
        return self._steps[name]

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Gradients accumulated by the last backward pass, zeros if untouched."""
        return {
            name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in self._params.items()
        }

    def copy_values_from(self, other: "ParamStore"):
        if self.names() != other.names():
            raise ContractError("parameter stores hold different names")
        for name, p in self._params.items():
            np.copyto(p.data, other[name].data)

    def to_dict(self) -> dict:
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "params": {
                name: {"shape": list(p.data.shape), "values": p.data.ravel().tolist()}
                for name, p in self._params.items()
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ParamStore":
        if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ContractError(
                f"unsupported checkpoint format: {payload.get('format_version')!r}"
            )
        store = cls()
        for name, entry in payload["params"].items():
            values = np.asarray(entry["values"], dtype=np.float64)
            store.add(name, values.reshape(entry["shape"]))
        return store

    def save(self, path: str):
        write_json_atomic(self.to_dict(), path)

    @classmethod
    def load(cls, path: str) -> "ParamStore":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def write_json_atomic(payload: dict, path: str):
    """Serialize to a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def dense(x, weights, bias=None, activation: str = "identity") -> Tensor:
    """Affine map followed by an elementwise activation.

    `x` may carry leading batch/time axes; `weights` is (in, out).
    """
    x = ad.as_tensor(x)
    weights = ad.as_tensor(weights)
    if x.shape[-1] != weights.shape[0]:
        raise DimensionError(
            f"dense input {x.shape} incompatible with weights {weights.shape}"
        )
    out = x @ weights
    if bias is not None:
        out = out + ad.as_tensor(bias)
    try:
        act = ACTIVATIONS[activation.lower()]
    except KeyError:
        raise ContractError(f"unknown activation {activation!r}") from None
    return act(out)


def collect_gradients(loss: Tensor, store: ParamStore) -> dict[str, np.ndarray]:
    """Run reverse traversal from `loss` and return the store's gradients."""
    loss.backward()
    return store.gradients()


def adam_step(store: ParamStore, grads: dict[str, np.ndarray], lr: float):
    """One Adam update on every parameter present in `grads`."""
    for name, grad in grads.items():
        if name not in store:
            raise ContractError(f"gradient for unknown parameter {name!r}")
        grad = np.asarray(grad, dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        param = store[name]
        if grad.shape != param.data.shape:
            raise DimensionError(
                f"gradient shape {grad.shape} does not match parameter "
                f"{name!r} with shape {param.data.shape}"
            )
        store._steps[name] += 1
        t = store._steps[name]
        m = store._moment1[name]
        v = store._moment2[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * grad * grad
        m_hat = m / (1.0 - ADAM_BETA1 ** t)
        v_hat = v / (1.0 - ADAM_BETA2 ** t)
        param.data -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))
