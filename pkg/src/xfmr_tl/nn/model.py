"""Two-stage synthesis network: circuit net (x -> y) then physical net (y -> v)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import LayerStack, ParamSpace


class ArchitectureMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    in_dim: int = 4
    y_dim: int = 5
    v_dim: int = 3
    hidden: int = 512
    circuit_layers: int = 7  # linear layers
    physical_layers: int = 3
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    dtype: str = "float32"

    def circuit_dims(self) -> list[int]:
        return [self.in_dim] + [self.hidden] * (self.circuit_layers - 1) + [self.y_dim]

    def physical_dims(self) -> list[int]:
        return [self.y_dim] + [self.hidden] * (self.physical_layers - 1) + [self.v_dim]

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def diff(self, other: "Architecture") -> list[str]:
        a, b = self.to_dict(), other.to_dict()
        return [f"{k}: {a[k]} != {b[k]}" for k in a if a[k] != b[k]]


class SynthesisModel:
    def __init__(self, arch: Architecture | None = None, seed: int | None = 0):
        self.arch = arch or Architecture()
        a = self.arch
        self.circuit = LayerStack.mlp(a.circuit_dims(), momentum=a.bn_momentum, eps=a.bn_eps)
        self.physical = LayerStack.mlp(a.physical_dims(), momentum=a.bn_momentum, eps=a.bn_eps)
        self.space = ParamSpace(self.circuit.layers + self.physical.layers, dtype=a.dtype)
        if seed is not None:
            self.space.init(np.random.default_rng(seed))

    @property
    def dtype(self):
        return self.space.dtype

    @property
    def params(self) -> np.ndarray:
        return self.space.params

    @property
    def grads(self) -> np.ndarray:
        return self.space.grads

    @property
    def buffers(self) -> np.ndarray:
        return self.space.buffers

    def forward(self, x, mode: str = "eval", update_stats: bool = True):
        """Return (y_hat, v_hat) for standardized inputs ``x`` of shape (N, 4)."""
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.arch.in_dim:
            raise ValueError(f"expected input of shape (N, {self.arch.in_dim}), got {x.shape}")
        training = mode == "train"
        if training and x.shape[0] < 2:
            raise ValueError("train-mode forward needs a batch of at least 2 rows")
        x = np.ascontiguousarray(x, dtype=self.dtype)
        y_hat = self.circuit.forward(x, training, update_stats)
        v_hat = self.physical.forward(y_hat, training, update_stats)
        return y_hat, v_hat

    def backward(self, dy_hat, dv_hat) -> np.ndarray:
        """Backpropagate loss gradients w.r.t. both outputs; fills ``self.grads``."""
        dy = self.physical.backward(dv_hat.astype(self.dtype, copy=False))
        dy = dy + dy_hat.astype(self.dtype, copy=False)
        return self.circuit.backward(dy)

    def predict(self, x, chunk: int = 16384):
        ys, vs = [], []
        for i in range(0, len(x), chunk):
            y, v = self.forward(x[i:i + chunk], "eval")
            ys.append(y)
            vs.append(v)
        return np.concatenate(ys), np.concatenate(vs)

    def load_state(self, params: np.ndarray, buffers: np.ndarray) -> None:
        if params.shape != self.params.shape or buffers.shape != self.buffers.shape:
            raise ArchitectureMismatch("parameter/buffer sizes do not match the architecture")
        self.params[...] = params
        self.buffers[...] = buffers

    def describe(self) -> dict:
        return {"circuit_net": self.circuit.describe(), "physical_net": self.physical.describe()}


def loss(y_hat, v_hat, y, v, tau: float) -> float:
    """tau * mean((y - y_hat)^2) + mean((v - v_hat)^2), means over rows and columns."""
    ey = np.asarray(y, dtype=np.float64) - y_hat
    ev = np.asarray(v, dtype=np.float64) - v_hat
    return float(tau * np.mean(ey * ey) + np.mean(ev * ev))


def loss_grad(y_hat, v_hat, y, v, tau: float):
    """Gradients of :func:`loss` w.r.t. y_hat and v_hat."""
    dy = (2.0 * tau / y_hat.size) * (y_hat - y)
    dv = (2.0 / v_hat.size) * (v_hat - v)
    return dy, dv
