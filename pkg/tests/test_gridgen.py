import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xfmr_tl import gridgen, surrogate
from xfmr_tl.gridgen import (
    COLUMNS, DatasetError, compute_norm_stats, dumps_dataset, generate_grid, load_dataset,
    loads_dataset, save_dataset, split_dataset, subsample_density,
)
from conftest import tiny_spec


def test_counts_32_points_distinct(tech):
    ds = generate_grid(tiny_spec(), tech)
    assert len(ds) == 32
    assert len({tuple(r) for r in ds.data[:, [0, 1, 9, 10, 11]]}) == 32


def test_target_grid_counts():
    specs = gridgen.load_grid_specs()
    t = specs["tgt22_qalb_30g"]
    assert (t.geometry_count, t.size) == (640, 256_000)
    s = specs["src45_oaob_30g"]
    assert (s.geometry_count, s.cap_count, s.size) == (2592, 400, 1_036_800)


def test_fast_grids_are_small():
    for spec in gridgen.load_grid_specs(fast=True).values():
        assert 5_000 <= spec.size <= 20_000


def test_lexicographic_order(tech):
    spec = tiny_spec((2, 3, 2, 2, 3))
    ds = generate_grid(spec, tech)
    axes = [spec.sweeps[d].values() for d in gridgen.SWEEP_DIMS]
    expected = [(d, wp, ws, c1, c2) for d in axes[0] for wp in axes[1] for ws in axes[2]
                for c1 in axes[3] for c2 in axes[4]]
    got = [tuple(r) for r in ds.data[:, [9, 10, 11, 0, 1]]]
    assert got == expected


def test_points_satisfy_surrogate(tech):
    ds = generate_grid(tiny_spec((2, 2, 3, 2, 2)), tech)
    for i in range(len(ds)):
        p = ds.point(i)
        assert surrogate.geometry_to_circuit(p.v, tech) == p.y
        z = surrogate.input_impedance(p.y, p.x1, tech)
        assert (z.re, z.im) == (p.x2.re, p.x2.im)


def test_invalid_geometry_fails_fast(tech):
    spec = tiny_spec()
    bad = spec.with_steps({})
    sweeps = dict(bad.sweeps)
    sweeps["w_p"] = gridgen.Sweep(3.0, 30.0, 2)
    sweeps["d_out"] = gridgen.Sweep(40.0, 50.0, 2)
    with pytest.raises(surrogate.SurrogateError):
        generate_grid(gridgen.GridSpec("bad", spec.tech, sweeps), tech)


def test_single_step_rejected():
    with pytest.raises(DatasetError):
        tiny_spec((1, 2, 2, 2, 2))


def test_split_sizes_1000(tech):
    ds = generate_grid(tiny_spec((5, 2, 2, 5, 10)), tech)
    assert len(ds) == 1000
    s = split_dataset(ds, 0).split
    assert [s[k].size for k in ("train", "val", "test")] == [600, 200, 200]


def test_split_seeds(tech):
    ds = generate_grid(tiny_spec((5, 2, 2, 5, 10)), tech)
    a, b, c = split_dataset(ds, 0), split_dataset(ds, 0), split_dataset(ds, 1)
    assert all(np.array_equal(a.split[k], b.split[k]) for k in a.split)
    assert not np.array_equal(a.split["train"], c.split["train"])


def test_split_too_small(tech):
    ds = generate_grid(tiny_spec(), tech)
    ds = gridgen.replace(ds, data=ds.data[:4])
    with pytest.raises(DatasetError):
        split_dataset(ds, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(5, 3000), st.integers(0, 2**32 - 1))
def test_split_partition_property(n, seed):
    ds = gridgen.GridDataset(spec=tiny_spec(), tech=surrogate.get_profile("tgt22_qalb_30g"),
                             data=np.zeros((n, len(COLUMNS))))
    s = split_dataset(ds, seed).split
    allidx = np.concatenate([s["train"], s["val"], s["test"]])
    assert np.array_equal(np.sort(allidx), np.arange(n))
    assert abs(s["train"].size - 0.6 * n) <= 1 and abs(s["val"].size - 0.2 * n) <= 1


def test_norm_stats_population_and_train_only(tech):
    data = np.zeros((10, len(COLUMNS)))
    data[:, :] = np.arange(10)[:, None] + np.arange(len(COLUMNS))
    data[:5, 0] = 0
    data[5:, 0] = 2
    ds = gridgen.GridDataset(spec=tiny_spec(), tech=tech, data=data,
                             split={"train": np.arange(10), "val": np.arange(0),
                                    "test": np.arange(0)})
    ds = compute_norm_stats(ds)
    assert ds.norm_mean[0] == 1.0 and ds.norm_std[0] == 1.0
    ds2 = compute_norm_stats(gridgen.replace(ds, split={**ds.split, "train": np.arange(3, 10)}))
    assert ds2.norm_mean[1] == np.mean(data[3:, 1])


def test_norm_stats_constant_column_named(tech):
    data = np.random.default_rng(0).normal(size=(10, len(COLUMNS)))
    data[:, 6] = 3.0
    ds = gridgen.GridDataset(spec=tiny_spec(), tech=tech, data=data,
                             split={"train": np.arange(10), "val": np.arange(0),
                                    "test": np.arange(0)})
    with pytest.raises(DatasetError, match=r"\bk\b"):
        compute_norm_stats(ds)


def test_standardized_train_moments(small_ds):
    z = (small_ds.rows("train") - small_ds.norm_mean) / small_ds.norm_std
    assert np.abs(z.mean(axis=0)).max() < 1e-10
    assert np.abs(z.std(axis=0) - 1).max() < 1e-10


def test_density_counts(small_ds):
    n = small_ds.split["train"].size
    assert n == 648
    assert subsample_density(small_ds, 1.0, 3).split["train"] is small_ds.split["train"]
    assert subsample_density(small_ds, 0.01, 3).split["train"].size == math.ceil(6.48)
    kept = subsample_density(small_ds, 0.05, 3)
    for k in ("val", "test"):
        assert kept.split[k] is small_ds.split[k]


def test_density_600_gives_6(tech):
    ds = split_dataset(generate_grid(tiny_spec((5, 2, 2, 5, 10)), tech), 0)
    assert subsample_density(ds, 0.01, 0).split["train"].size == 6


@pytest.mark.parametrize("d", [0.0, -0.1, 1.01])
def test_density_out_of_range(small_ds, d):
    with pytest.raises(DatasetError):
        subsample_density(small_ds, d, 0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.001, 1.0), st.floats(0.001, 1.0), st.integers(0, 1000))
def test_density_monotone_subset(d1, d2, seed):
    ds = _SMALL
    lo, hi = sorted((d1, d2))
    a = set(subsample_density(ds, lo, seed).split["train"])
    b = set(subsample_density(ds, hi, seed).split["train"])
    assert a <= b <= set(ds.split["train"])


def test_matched_grid_construction(techs):
    spec = tiny_spec((2, 2, 2, 3, 3))
    a = generate_grid(spec, techs["tgt22_qalb_30g"])
    b = generate_grid(spec.with_tech("src45_oaob_30g"), techs["src45_oaob_30g"])
    cols_same = [0, 1, 9, 10, 11]
    assert np.array_equal(a.data[:, cols_same], b.data[:, cols_same])
    assert not np.array_equal(a.data[:, 2:9], b.data[:, 2:9])


def test_roundtrip_bit_exact(small_ds, tmp_path):
    for ds in (small_ds, subsample_density(small_ds, 0.05, 1), generate_grid(tiny_spec(),
                                                                             small_ds.tech)):
        p = tmp_path / "d.xgrd"
        save_dataset(ds, p)
        back = load_dataset(p)
        assert back.equals(ds)
        assert dumps_dataset(back) == dumps_dataset(ds)


def test_corrupt_magic(small_ds):
    buf = bytearray(dumps_dataset(small_ds))
    buf[0:4] = b"XXXX"
    with pytest.raises(DatasetError, match="magic"):
        loads_dataset(bytes(buf))


def test_corrupt_payload_checksum(small_ds):
    buf = bytearray(dumps_dataset(small_ds))
    buf[len(buf) // 2] ^= 0xFF
    with pytest.raises(DatasetError, match="checksum"):
        loads_dataset(bytes(buf))


def test_truncated(small_ds):
    buf = dumps_dataset(small_ds)
    with pytest.raises(DatasetError):
        loads_dataset(buf[:-100])
    with pytest.raises(DatasetError):
        loads_dataset(buf[:6])


def test_bad_version(small_ds):
    import struct
    buf = bytearray(dumps_dataset(small_ds))
    buf[4:8] = struct.pack("<I", 99)
    with pytest.raises(DatasetError, match="version"):
        loads_dataset(bytes(buf))


def test_export_csv(small_ds, tmp_path):
    p = tmp_path / "d.csv"
    gridgen.export_csv(small_ds, p)
    with open(p) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(COLUMNS) + ["split"]
    assert len(rows) == len(small_ds) + 1
    back = np.array([[float(x) for x in r[:-1]] for r in rows[1:]])
    assert np.array_equal(back, small_ds.data)
    labels = [r[-1] for r in rows[1:]]
    assert labels.count("train") == small_ds.split["train"].size


_SMALL = gridgen.prepare(tiny_spec((4, 3, 3, 6, 5)), surrogate.get_profile("tgt22_qalb_30g"), 0)
