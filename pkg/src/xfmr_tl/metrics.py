"""Evaluation metrics: dimension-averaged R^2 and relative improvement."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MetricError(ValueError):
    pass


@dataclass
class R2Report:
    per_dim: list[float]
    mean: float
    n: int
    split: str = ""
    names: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        names = self.names or [f"dim{i}" for i in range(len(self.per_dim))]
        lines = [f"split: {self.split}", f"n: {self.n}", f"r2_mean: {self.mean!r}"]
        lines += [f"r2_{nm}: {val!r}" for nm, val in zip(names, self.per_dim)]
        return "\n".join(lines)


def r_squared(predictions, targets, split: str = "", names=None) -> R2Report:
    """Per-column coefficient of determination, then the unweighted mean.

    Each column i gets 1 - SS_res_i / SS_tot_i.
    """
    pred = np.asarray(predictions, dtype=np.float64)
    tgt = np.asarray(targets, dtype=np.float64)
    if pred.ndim == 1:
        pred, tgt = pred[:, None], tgt[:, None]
    if pred.shape != tgt.shape:
        raise MetricError(f"shape mismatch: predictions {pred.shape} vs targets {tgt.shape}")
    n = tgt.shape[0]
    if n < 2:
        raise MetricError("R^2 needs at least 2 samples")
    names = list(names) if names is not None else []
    resid = tgt - pred
    ss_res = np.sum(resid * resid, axis=0)
    dev = tgt - tgt.mean(axis=0)
    ss_tot = np.sum(dev * dev, axis=0)
    zero = np.flatnonzero(~(ss_tot > 0))
    if zero.size:
        col = names[zero[0]] if names else f"column {zero[0]}"
        raise MetricError(f"zero-variance target: {col}")
    per_dim = 1.0 - ss_res / ss_tot
    return R2Report(per_dim=[float(x) for x in per_dim], mean=float(np.mean(per_dim)), n=n,
                    split=split, names=names)


def relative_improvement(r2_transfer: float, r2_non_transfer: float) -> float | None:
    """RI in percent; ``None`` when the baseline R^2 is not positive (undefined)."""
    if not r2_non_transfer > 0:
        return None
    return (r2_transfer - r2_non_transfer) / r2_non_transfer * 100.0
