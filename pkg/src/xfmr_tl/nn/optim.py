from __future__ import annotations

import numpy as np

from . import kernels


class Adam:
    """Adam with bias correction and coupled L2 weight decay over one flat buffer."""

    def __init__(self, n_params: int, dtype=np.float32, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.0):
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = np.zeros(n_params, dtype=dtype)
        self.v = np.zeros(n_params, dtype=dtype)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray, lr: float) -> None:
        self.t += 1
        kernels.adam_update(
            params, grads, self.m, self.v, lr, self.beta1, self.beta2, self.eps,
            self.weight_decay, 1.0 - self.beta1 ** self.t, 1.0 - self.beta2 ** self.t,
        )


def lr_schedule(epoch: int, base_lr: float = 5e-4, decay_factor: float = 0.2,
                decay_start_epoch: int = 150, decay_every: int = 50) -> float:
    """Step decay: one multiplication by ``decay_factor`` at each of
    start, start + every, start + 2*every, ... that is <= epoch (0-based)."""
    if epoch < decay_start_epoch:
        return base_lr
    n = (epoch - decay_start_epoch) // decay_every + 1
    return base_lr * decay_factor ** n
