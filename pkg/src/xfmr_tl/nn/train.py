"""Mini-batch training of the synthesis model on a grid dataset."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from ..gridgen import V_COLS, X_COLS, Y_COLS, COLUMNS, GridDataset, DatasetError
from ..metrics import r_squared
from .checkpoint import ModelCheckpoint, check_compatible
from .model import Architecture, SynthesisModel, loss, loss_grad
from .optim import Adam, lr_schedule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 0.5
    lr: float = 5e-4
    weight_decay: float = 1e-4
    epochs: int = 300
    batch_size: int = 4096
    decay_factor: float = 0.2
    decay_start_epoch: int = 150
    decay_every: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: int = 512
    circuit_layers: int = 7
    physical_layers: int = 3

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def lr_at(self, epoch: int) -> float:
        return lr_schedule(epoch, self.lr, self.decay_factor, self.decay_start_epoch,
                           self.decay_every)

    def architecture(self) -> Architecture:
        return Architecture(hidden=self.hidden, circuit_layers=self.circuit_layers,
                            physical_layers=self.physical_layers)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def fast_config(cfg: TrainConfig | None = None) -> TrainConfig:
    """CI profile: 50 epochs, 64 hidden units, schedule compressed to match.

    Batch size drops to 128 so the ~10k-point grids still get tens of optimizer
    steps per epoch; at 4096 a sparse target would see one step per epoch.
    """
    cfg = cfg or TrainConfig()
    return replace(cfg, epochs=50, hidden=64, batch_size=128, decay_start_epoch=25,
                   decay_every=8)


def standardize(ds: GridDataset, rows: np.ndarray, dtype=np.float32):
    if ds.norm_mean is None:
        raise DatasetError("dataset has no norm_stats; run compute_norm_stats first")
    z = (rows - ds.norm_mean) / ds.norm_std
    return (np.ascontiguousarray(z[:, X_COLS], dtype=dtype),
            np.ascontiguousarray(z[:, Y_COLS], dtype=dtype),
            np.ascontiguousarray(z[:, V_COLS], dtype=dtype))


def evaluate(model: SynthesisModel, ds: GridDataset, split: str):
    """R^2 of the geometry prediction on one split, in physical units."""
    rows = ds.rows(split)
    x, _, _ = standardize(ds, rows, model.dtype)
    _, v_hat = model.predict(x)
    v_raw = v_hat.astype(np.float64) * ds.norm_std[V_COLS] + ds.norm_mean[V_COLS]
    return r_squared(v_raw, rows[:, V_COLS], split=split, names=list(COLUMNS[V_COLS]))


def batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for i in range(0, n, batch_size):
        idx = perm[i:i + batch_size]
        if idx.size < 2:
            continue  # batch norm is undefined on one row
        yield idx


def train(ds: GridDataset, cfg: TrainConfig, init: ModelCheckpoint | None = None,
          model: SynthesisModel | None = None, provenance: dict | None = None,
          eval_every: int = 1):
    """Train from random init (or from ``init``) and return (checkpoint, history).

    History holds one dict per epoch with keys epoch, lr, train_loss, val_r2.
    """
    rng_init, rng_shuffle = (np.random.default_rng(s)
                             for s in np.random.SeedSequence(cfg.seed).spawn(2))
    if model is None:
        model = SynthesisModel(cfg.architecture(), seed=None)
        model.space.init(rng_init)
    if init is not None:
        check_compatible(model.arch, init)
        model.load_state(init.params, init.buffers)

    x, y, v = standardize(ds, ds.rows("train"), model.dtype)
    n = x.shape[0]
    warnings = []
    batch_size = cfg.batch_size
    if batch_size > n:
        msg = f"batch_size {batch_size} exceeds train split size {n}; clamped to {n}"
        log.warning(msg)
        warnings.append(msg)
        batch_size = n

    opt = Adam(model.params.size, dtype=model.dtype, betas=(cfg.beta1, cfg.beta2),
               eps=cfg.adam_eps, weight_decay=cfg.weight_decay)
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        total, count = 0.0, 0
        for idx in batches(n, batch_size, rng_shuffle):
            xb, yb, vb = x[idx], y[idx], v[idx]
            y_hat, v_hat = model.forward(xb, "train")
            total += loss(y_hat, v_hat, yb, vb, cfg.tau) * idx.size
            count += idx.size
            model.backward(*loss_grad(y_hat, v_hat, yb, vb, cfg.tau))
            opt.step(model.params, model.grads, lr)
        val_r2 = float("nan")
        if eval_every and ((epoch + 1) % eval_every == 0 or epoch == cfg.epochs - 1):
            val_r2 = evaluate(model, ds, "val").mean
        history.append({"epoch": epoch, "lr": lr,
                        "train_loss": total / count if count else float("nan"),
                        "val_r2": val_r2})

    prov = {"config": cfg.to_dict(), "seed": cfg.seed, "grid": ds.name,
            "tech": ds.tech.name, "density": ds.meta.get("density", 1.0),
            "n_train": int(n), "warnings": warnings}
    if init is not None:
        prov["init_from"] = init.provenance.get("grid", "")
    prov.update(provenance or {})
    ckpt = ModelCheckpoint.from_model(model, ds.norm_mean, ds.norm_std, prov)
    return ckpt, history
