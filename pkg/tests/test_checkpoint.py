import struct

import numpy as np
import pytest

from xfmr_tl.nn import checkpoint as ck
from xfmr_tl.nn.model import Architecture, ArchitectureMismatch, SynthesisModel
from xfmr_tl.nn.train import TrainConfig, train


def make_ckpt(dtype="float32", seed=0):
    model = SynthesisModel(Architecture(hidden=16, dtype=dtype), seed=seed)
    model.forward(np.random.default_rng(0).normal(size=(8, 4)), "train")  # move running stats
    return ck.ModelCheckpoint.from_model(model, np.arange(12.0), np.ones(12),
                                         {"grid": "g", "seed": seed})


@pytest.mark.parametrize("dtype", ["float32", "float64"])
def test_roundtrip_bit_exact(tmp_path, dtype):
    c = make_ckpt(dtype)
    p = tmp_path / "m.xckp"
    ck.save_checkpoint(c, p)
    back = ck.load_checkpoint(p)
    assert back.equals(c)
    assert back.params.dtype == np.dtype(dtype)
    assert ck.dumps_checkpoint(back) == p.read_bytes()


def test_roundtrip_preserves_predictions():
    c = make_ckpt()
    back = ck.loads_checkpoint(ck.dumps_checkpoint(c))
    x = np.random.default_rng(3).normal(size=(5, 4)).astype(np.float32)
    a = c.to_model().forward(x, "eval")
    b = back.to_model().forward(x, "eval")
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


def test_bad_magic():
    buf = bytearray(ck.dumps_checkpoint(make_ckpt()))
    buf[:4] = b"JUNK"
    with pytest.raises(ck.CheckpointError, match="magic"):
        ck.loads_checkpoint(bytes(buf))


def test_bad_checksum():
    buf = bytearray(ck.dumps_checkpoint(make_ckpt()))
    buf[100] ^= 1
    with pytest.raises(ck.CheckpointError, match="checksum"):
        ck.loads_checkpoint(bytes(buf))


def test_truncated():
    buf = ck.dumps_checkpoint(make_ckpt())
    with pytest.raises(ck.CheckpointError):
        ck.loads_checkpoint(buf[: len(buf) // 2])


def test_bad_version():
    buf = bytearray(ck.dumps_checkpoint(make_ckpt()))
    buf[4:8] = struct.pack("<I", 7)
    with pytest.raises(ck.CheckpointError, match="version"):
        ck.loads_checkpoint(bytes(buf))


def test_architecture_mismatch_names_diff():
    c = make_ckpt()
    with pytest.raises(ArchitectureMismatch, match="hidden: 32 != 16"):
        ck.check_compatible(Architecture(hidden=32), c)


def test_transfer_refuses_mismatch(small_ds):
    c = make_ckpt()
    with pytest.raises(ArchitectureMismatch):
        train(small_ds, TrainConfig(epochs=1, hidden=8), init=c)


def test_zero_epoch_transfer_is_identity(small_ds):
    src, _ = train(small_ds, TrainConfig(epochs=2, hidden=16, batch_size=256, seed=1))
    out, hist = train(small_ds, TrainConfig(epochs=0, hidden=16, batch_size=256, seed=5),
                      init=src)
    assert hist == []
    assert out.same_weights(src)
    assert out.provenance != src.provenance


def test_training_deterministic(small_ds):
    cfg = TrainConfig(epochs=3, hidden=16, batch_size=128, seed=2)
    a, ha = train(small_ds, cfg)
    b, hb = train(small_ds, cfg)
    assert ck.dumps_checkpoint(a) == ck.dumps_checkpoint(b)
    assert ha == hb


def test_fingerprint_changes_with_weights():
    a, b = make_ckpt(seed=0), make_ckpt(seed=1)
    assert a.fingerprint() != b.fingerprint()
    assert a.fingerprint() == make_ckpt(seed=0).fingerprint()
