"""Grid-sweep dataset generation, splitting, standardization and storage.

A dataset is a dense float64 table with one row per design point::

    c1 c2 zin_re zin_im | l_p l_s k q_p q_s | d_out w_p w_s
    ---- x (inputs) ----   ----- y -------    ----- v -----

Rows follow the Cartesian product of the sweeps in declaration order
(d_out, w_p, w_s, c1, c2), last dimension varying fastest.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import surrogate
from .surrogate import (
    CircuitParams,
    DesignImpedance,
    Geometry,
    TechnologyProfile,
    TuningCaps,
)

COLUMNS = (
    "c1", "c2", "zin_re", "zin_im",
    "l_p", "l_s", "k", "q_p", "q_s",
    "d_out", "w_p", "w_s",
)
X_COLS = slice(0, 4)
Y_COLS = slice(4, 9)
V_COLS = slice(9, 12)
SWEEP_DIMS = ("d_out", "w_p", "w_s", "c1", "c2")
SPLIT_NAMES = ("train", "val", "test")

MAGIC = b"XGRD"
FORMAT_VERSION = 1


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Sweep:
    start: float
    stop: float
    steps: int

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.steps)


@dataclass(frozen=True)
class GridSpec:
    name: str
    tech: str
    sweeps: dict  # dim name -> Sweep, keys exactly SWEEP_DIMS

    def __post_init__(self):
        missing = set(SWEEP_DIMS) - set(self.sweeps)
        if missing:
            raise DatasetError(f"grid {self.name!r} lacks sweeps for {sorted(missing)}")
        for dim, sw in self.sweeps.items():
            if sw.steps < 2:
                raise DatasetError(f"grid {self.name!r}: dimension {dim} needs >= 2 steps")

    @property
    def geometry_count(self) -> int:
        return math.prod(self.sweeps[d].steps for d in SWEEP_DIMS[:3])

    @property
    def cap_count(self) -> int:
        return math.prod(self.sweeps[d].steps for d in SWEEP_DIMS[3:])

    @property
    def size(self) -> int:
        return self.geometry_count * self.cap_count

    def with_steps(self, steps: dict) -> "GridSpec":
        sweeps = {d: replace(sw, steps=int(steps.get(d, sw.steps))) for d, sw in self.sweeps.items()}
        return replace(self, sweeps=sweeps)

    def with_tech(self, tech: str, name: str | None = None) -> "GridSpec":
        return replace(self, tech=tech, name=name or self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "tech": self.tech,
            "sweeps": {d: asdict(self.sweeps[d]) for d in SWEEP_DIMS},
        }

    @classmethod
    def from_dict(cls, d: dict, name: str | None = None) -> "GridSpec":
        sweeps_src = d.get("sweeps", d)
        sweeps = {}
        for dim in SWEEP_DIMS:
            if dim not in sweeps_src:
                raise DatasetError(f"grid {name or d.get('name')!r} lacks sweep {dim!r}")
            s = sweeps_src[dim]
            sweeps[dim] = Sweep(float(s["start"]), float(s["stop"]), int(s["steps"]))
        return cls(name=name or d["name"], tech=d["tech"], sweeps=sweeps)


def load_grid_specs(path=None, fast: bool = False) -> dict[str, GridSpec]:
    """Read the ``grids`` section of a profiles YAML file."""
    with open(path or surrogate.DEFAULT_PROFILES) as fh:
        doc = yaml.safe_load(fh)
    specs = {}
    for name, body in doc.get("grids", {}).items():
        spec = GridSpec.from_dict(body, name=name)
        if fast and "fast_steps" in body:
            spec = spec.with_steps(body["fast_steps"])
        specs[name] = spec
    return specs


@dataclass
class DesignPoint:
    x1: TuningCaps
    x2: DesignImpedance
    y: CircuitParams
    v: Geometry


@dataclass
class GridDataset:
    spec: GridSpec
    tech: TechnologyProfile
    data: np.ndarray  # (N, 12) float64
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    split: dict | None = None  # name -> int64 index array
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.data.shape[0]

    @property
    def name(self) -> str:
        return self.spec.name

    def point(self, i: int) -> DesignPoint:
        r = self.data[i]
        return DesignPoint(
            TuningCaps(*r[0:2]), DesignImpedance(*r[2:4]), CircuitParams(*r[4:9]), Geometry(*r[9:12])
        )

    def rows(self, split: str) -> np.ndarray:
        if self.split is None:
            raise DatasetError("dataset has no split assigned")
        return self.data[self.split[split]]

    def equals(self, other: "GridDataset") -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()

        if self.spec != other.spec or self.tech != other.tech or self.meta != other.meta:
            return False
        if not (same(self.data, other.data) and same(self.norm_mean, other.norm_mean)
                and same(self.norm_std, other.norm_std)):
            return False
        if (self.split is None) != (other.split is None):
            return False
        return self.split is None or all(same(self.split[k], other.split[k]) for k in SPLIT_NAMES)


def generate_grid(spec: GridSpec, tech: TechnologyProfile) -> GridDataset:
    """Sweep geometry x tuning caps and evaluate the surrogate at every point."""
    axes = [spec.sweeps[d].values() for d in SWEEP_DIMS]
    d_out, w_p, w_s = (a.ravel() for a in np.meshgrid(*axes[:3], indexing="ij"))
    surrogate.check_geometry(d_out, w_p, w_s)
    l_p, l_s, k, q_p, q_s = surrogate.geometry_to_circuit_arrays(d_out, w_p, w_s, tech)
    c1, c2 = (a.ravel() for a in np.meshgrid(*axes[3:], indexing="ij"))

    n_geo, n_cap = d_out.size, c1.size
    data = np.empty((n_geo * n_cap, len(COLUMNS)), dtype=np.float64)
    geo = np.stack([l_p, l_s, k, q_p, q_s, d_out, w_p, w_s], axis=1)
    data[:, 4:12] = np.repeat(geo, n_cap, axis=0)
    data[:, 0] = np.tile(c1, n_geo)
    data[:, 1] = np.tile(c2, n_geo)
    z = surrogate.input_impedance_arrays(*data[:, 4:9].T, data[:, 0], data[:, 1], tech)
    data[:, 2] = z.real
    data[:, 3] = z.imag
    return GridDataset(spec=spec, tech=tech, data=data)


def split_dataset(ds: GridDataset, seed: int) -> GridDataset:
    """Seeded uniform 60/20/20 train/val/test partition."""
    n = len(ds)
    if n < 5:
        raise DatasetError(f"cannot split a dataset of {n} points (need >= 5)")
    perm = np.random.default_rng(seed).permutation(n).astype(np.int64)
    n_train = round(0.6 * n)
    n_val = round(0.2 * n)
    split = {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train:n_train + n_val]),
        "test": np.sort(perm[n_train + n_val:]),
    }
    meta = {**ds.meta, "split_seed": int(seed)}
    meta.pop("density", None)
    meta.pop("density_seed", None)
    return replace(ds, split=split, meta=meta)


def compute_norm_stats(ds: GridDataset) -> GridDataset:
    """Per-column mean and population std over the train split."""
    train = ds.rows("train")
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    zero = [COLUMNS[i] for i in np.flatnonzero(~(std > 0))]
    if zero:
        raise DatasetError(f"zero-variance column(s) in train split: {', '.join(zero)}")
    return replace(ds, norm_mean=mean, norm_std=std)


def subsample_density(ds: GridDataset, density: float, seed: int) -> GridDataset:
    """Keep ceil(density * |train|) train rows; val/test untouched.

    The retained rows are a prefix of one seeded permutation, so for a fixed
    seed a lower density always yields a subset of a higher one.
    """
    if not 0 < density <= 1:
        raise DatasetError(f"density must lie in (0, 1], got {density}")
    if ds.split is None:
        raise DatasetError("dataset has no split assigned")
    train = ds.split["train"]
    n_keep = math.ceil(density * train.size)
    if density == 1:
        kept = train
    else:
        perm = np.random.default_rng(seed).permutation(train.size)
        kept = np.sort(train[perm[:n_keep]])
    split = {**ds.split, "train": kept}
    meta = {**ds.meta, "density": float(density), "density_seed": int(seed)}
    return replace(ds, split=split, meta=meta)


def prepare(spec: GridSpec, tech: TechnologyProfile, split_seed: int = 0) -> GridDataset:
    """generate -> split -> norm stats."""
    return compute_norm_stats(split_dataset(generate_grid(spec, tech), split_seed))


# -- binary format ----------------------------------------------------------
#
# 'XGRD' | u32 version | u32 ncols | ncols x (u16 len, utf-8 name) | u64 nrows
# | u64 meta_len | meta JSON | u8 has_norm [| ncols f8 mean | ncols f8 std]
# | u8 has_split [| 3 x u64 len | int64 indices...] | nrows*ncols f8 row-major
# | u64 checksum (blake2b-64 over everything before it)
# All integers and floats little-endian.

def _checksum(buf: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(buf, digest_size=8).digest(), "little")


def dumps_dataset(ds: GridDataset) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<II", FORMAT_VERSION, len(COLUMNS)))
    for name in COLUMNS:
        b = name.encode()
        out.write(struct.pack("<H", len(b)) + b)
    out.write(struct.pack("<Q", len(ds)))
    meta = json.dumps(
        {"spec": ds.spec.to_dict(), "tech": ds.tech.to_dict(), "meta": ds.meta}, sort_keys=True
    ).encode()
    out.write(struct.pack("<Q", len(meta)) + meta)
    if ds.norm_mean is None:
        out.write(b"\x00")
    else:
        out.write(b"\x01")
        out.write(np.ascontiguousarray(ds.norm_mean, dtype="<f8").tobytes())
        out.write(np.ascontiguousarray(ds.norm_std, dtype="<f8").tobytes())
    if ds.split is None:
        out.write(b"\x00")
    else:
        out.write(b"\x01")
        out.write(struct.pack("<QQQ", *(ds.split[k].size for k in SPLIT_NAMES)))
        for k in SPLIT_NAMES:
            out.write(np.ascontiguousarray(ds.split[k], dtype="<i8").tobytes())
    out.write(np.ascontiguousarray(ds.data, dtype="<f8").tobytes())
    body = out.getvalue()
    return body + struct.pack("<Q", _checksum(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DatasetError("truncated dataset file")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        item = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(item * count), dtype=dtype).astype(dtype[1:], copy=True)


def loads_dataset(buf: bytes) -> GridDataset:
    if buf[:4] != MAGIC:
        raise DatasetError("not a grid dataset file (bad magic)")
    if len(buf) < 12:
        raise DatasetError("truncated dataset file")
    body, tail = buf[:-8], buf[-8:]
    r = _Reader(body)
    r.take(4)
    version, ncols = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise DatasetError(f"unsupported dataset format version {version}")
    if struct.unpack("<Q", tail)[0] != _checksum(body):
        raise DatasetError("dataset checksum mismatch (corrupted or truncated file)")
    names = tuple(r.take(r.unpack("<H")[0]).decode() for _ in range(ncols))
    if names != COLUMNS:
        raise DatasetError(f"unexpected column layout {names}")
    (nrows,) = r.unpack("<Q")
    (meta_len,) = r.unpack("<Q")
    meta = json.loads(r.take(meta_len))
    mean = std = split = None
    if r.take(1) == b"\x01":
        mean = r.array("<f8", ncols)
        std = r.array("<f8", ncols)
    if r.take(1) == b"\x01":
        sizes = r.unpack("<QQQ")
        split = {k: r.array("<i8", n) for k, n in zip(SPLIT_NAMES, sizes)}
    data = r.array("<f8", nrows * ncols).reshape(nrows, ncols)
    if r.pos != len(body):
        raise DatasetError("trailing bytes in dataset file")
    return GridDataset(
        spec=GridSpec.from_dict(meta["spec"]),
        tech=TechnologyProfile(**meta["tech"]),
        data=data,
        norm_mean=mean,
        norm_std=std,
        split=split,
        meta=meta["meta"],
    )


def save_dataset(ds: GridDataset, path) -> None:
    Path(path).write_bytes(dumps_dataset(ds))


def load_dataset(path) -> GridDataset:
    return loads_dataset(Path(path).read_bytes())


def export_csv(ds: GridDataset, path) -> None:
    """One row per point with a split label; floats written round-trip exact."""
    labels = np.full(len(ds), "none", dtype=object)
    if ds.split is not None:
        for k in SPLIT_NAMES:
            labels[ds.split[k]] = k
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS + ("split",))
        for row, lab in zip(ds.data.tolist(), labels):
            w.writerow([repr(x) for x in row] + [lab])
