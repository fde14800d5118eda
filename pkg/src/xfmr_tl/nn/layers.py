"""Dense layers with explicit forward/backward passes.

Parameters live in one flat buffer owned by a :class:`ParamSpace`; layers
hold views into it, so a single optimizer call updates every weight.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels


class Layer:
    kind = "layer"

    def param_shapes(self) -> dict:
        return {}

    def buffer_shapes(self) -> dict:
        return {}

    def bind(self, params: dict, grads: dict, buffers: dict) -> None:
        self.p = params
        self.g = grads
        self.b = buffers

    def init(self, rng: np.random.Generator) -> None:
        pass

    def describe(self) -> dict:
        return {"kind": self.kind}


class Linear(Layer):
    kind = "linear"

    def __init__(self, n_in: int, n_out: int):
        self.n_in = n_in
        self.n_out = n_out

    def param_shapes(self):
        return {"weight": (self.n_out, self.n_in), "bias": (self.n_out,)}

    def init(self, rng):
        bound = 1.0 / math.sqrt(self.n_in)
        for name in ("weight", "bias"):
            a = self.p[name]
            a[...] = rng.uniform(-bound, bound, size=a.shape)

    def forward(self, x, training=False, update_stats=True):
        if x.shape[1] != self.n_in:
            raise ValueError(f"linear layer expects {self.n_in} input columns, got {x.shape[1]}")
        self.x = x
        out = x @ self.p["weight"].T
        out += self.p["bias"]
        return out

    def backward(self, dout):
        np.matmul(dout.T, self.x, out=self.g["weight"])
        self.g["bias"][...] = dout.sum(axis=0)
        return dout @ self.p["weight"]

    def describe(self):
        return {"kind": self.kind, "in": self.n_in, "out": self.n_out}


class BatchNorm1d(Layer):
    """Batch norm over the batch axis, optionally fused with a trailing ReLU.

    Running variance uses the unbiased batch estimate (n / (n - 1)).
    """

    kind = "batchnorm"

    def __init__(self, n: int, momentum: float = 0.1, eps: float = 1e-5, relu: bool = False):
        self.n = n
        self.momentum = momentum
        self.eps = eps
        self.relu = relu

    def param_shapes(self):
        return {"gamma": (self.n,), "beta": (self.n,)}

    def buffer_shapes(self):
        return {"running_mean": (self.n,), "running_var": (self.n,)}

    def init(self, rng):
        self.p["gamma"][...] = 1
        self.p["beta"][...] = 0
        self.b["running_mean"][...] = 0
        self.b["running_var"][...] = 1

    def forward(self, z, training=False, update_stats=True):
        z = np.ascontiguousarray(z)
        out = np.empty_like(z)
        gamma, beta = self.p["gamma"], self.p["beta"]
        if not training:
            kernels.bn_eval(z, gamma, beta, self.b["running_mean"], self.b["running_var"],
                            self.eps, out, self.relu)
            return out
        n = z.shape[0]
        if n < 2:
            raise ValueError("batch norm in train mode needs a batch of at least 2 rows")
        self.xhat = np.empty_like(z)
        mean = np.empty(self.n, dtype=z.dtype)
        var = np.empty(self.n, dtype=z.dtype)
        self.inv_std = np.empty(self.n, dtype=z.dtype)
        kernels.bn_train(z, gamma, beta, self.eps, out, self.xhat, mean, self.inv_std, var,
                         self.relu)
        self.out = out
        if update_stats:
            m = self.momentum
            rm, rv = self.b["running_mean"], self.b["running_var"]
            rm *= 1 - m
            rm += m * mean
            rv *= 1 - m
            rv += m * var * (n / (n - 1))
        return out

    def backward(self, dout):
        dout = np.ascontiguousarray(dout)
        dz = np.empty_like(dout)
        kernels.bn_backward(dout, self.out, self.xhat, self.p["gamma"], self.inv_std, dz,
                            self.g["gamma"], self.g["beta"], self.relu)
        return dz

    def describe(self):
        return {"kind": self.kind, "n": self.n, "momentum": self.momentum, "eps": self.eps,
                "relu": self.relu}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, update_stats=True):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return np.where(self.mask, dout, 0).astype(dout.dtype, copy=False)


class LayerStack:
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    @classmethod
    def mlp(cls, dims: list[int], momentum=0.1, eps=1e-5) -> "LayerStack":
        """Linear layers over ``dims``; every linear but the last is followed by BN+ReLU."""
        layers = []
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            layers.append(Linear(a, b))
            if i < len(dims) - 2:
                layers.append(BatchNorm1d(b, momentum=momentum, eps=eps, relu=True))
        return cls(layers)

    @property
    def n_linear(self) -> int:
        return sum(isinstance(l, Linear) for l in self.layers)

    def forward(self, x, training=False, update_stats=True):
        for layer in self.layers:
            x = layer.forward(x, training=training, update_stats=update_stats)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def describe(self) -> list:
        return [l.describe() for l in self.layers]


class ParamSpace:
    """Allocates flat parameter / gradient / buffer arrays for a list of layers."""

    def __init__(self, layers: list[Layer], dtype=np.float32):
        self.layers = list(layers)
        self.dtype = np.dtype(dtype)
        n_p = sum(math.prod(s) for l in self.layers for s in l.param_shapes().values())
        n_b = sum(math.prod(s) for l in self.layers for s in l.buffer_shapes().values())
        self.params = np.zeros(n_p, dtype=self.dtype)
        self.grads = np.zeros(n_p, dtype=self.dtype)
        self.buffers = np.zeros(n_b, dtype=self.dtype)
        ip = ib = 0
        for layer in self.layers:
            p, g, b = {}, {}, {}
            for name, shape in layer.param_shapes().items():
                size = math.prod(shape)
                p[name] = self.params[ip:ip + size].reshape(shape)
                g[name] = self.grads[ip:ip + size].reshape(shape)
                ip += size
            for name, shape in layer.buffer_shapes().items():
                size = math.prod(shape)
                b[name] = self.buffers[ib:ib + size].reshape(shape)
                ib += size
            layer.bind(p, g, b)

    def init(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            layer.init(rng)
