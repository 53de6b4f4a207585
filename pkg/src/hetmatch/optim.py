"""Named parameter store, AdamW, and exact-round-trip checkpoints."""

from __future__ import annotations

import json
import math

import numpy as np

from .autodiff import Tensor
from .errors import DataError, NumericError


class ParamStore:
    """Ordered map of name -> trainable Tensor with deterministic iteration."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self._params.items():
            if name not in values:
                raise DataError(f"checkpoint missing parameter {name!r}")
            arr = np.asarray(values[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise DataError(f"parameter {name!r}: shape {arr.shape} != {t.data.shape}")
            t.data = arr.copy()


class AdamW:
    """Decoupled weight decay followed by bias-corrected Adam moments.

    The decay is applied directly to the parameter (param -= lr * wd * param)
    before the moment update, so it never enters the moment estimates. One
    shared step counter; gradients are cleared after each step.
    """

    def __init__(self, params: ParamStore, lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                raise NumericError(f"missing gradient for parameter {name!r}")
            g = p.grad
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        self.params.zero_grad()


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise NumericError(f"non-finite value {x!r} in checkpoint")
    return format(x, ".17g")


def checkpoint_bytes(values: dict[str, np.ndarray], config: dict) -> bytes:
    """Serialize parameters and config to canonical JSON.

    Floats are written with 17 significant digits so float64 values survive
    the round trip exactly; identical inputs produce identical bytes.
    """
    parts = ['{"format":1,"params":{']
    for i, (name, arr) in enumerate(values.items()):
        arr = np.asarray(arr, dtype=np.float64)
        if i:
            parts.append(",")
        parts.append(json.dumps(name))
        parts.append(':{"shape":')
        parts.append(json.dumps(list(arr.shape)))
        parts.append(',"data":[')
        parts.append(",".join(_fmt_float(x) for x in arr.ravel().tolist()))
        parts.append("]}")
    parts.append('},"config":')
    parts.append(json.dumps(config, sort_keys=True))
    parts.append("}")
    return "".join(parts).encode("utf-8")


def save_checkpoint(path, values: dict[str, np.ndarray], config: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(values, config))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with open(path, "rb") as fh:
            doc = json.loads(fh.read().decode("utf-8"))
    except FileNotFoundError:
        raise DataError(f"checkpoint file not found: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"malformed checkpoint {path}: {exc}") from None
    if doc.get("format") != 1:
        raise DataError(f"unsupported checkpoint format {doc.get('format')!r}")
    values = {}
    for name, entry in doc["params"].items():
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        values[name] = arr
    return values, doc.get("config", {})
