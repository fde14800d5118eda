"""The compiled kernels and the numpy fallback must agree."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xfmr_tl.nn import kernels

needs_ext = pytest.mark.skipif("ext" not in kernels.available(),
                               reason="compiled extension not built")


def bn_case(seed, n, f, dtype):
    r = np.random.default_rng(seed)
    z = (r.normal(size=(n, f)) * r.uniform(0.1, 5, f) + r.normal(size=f)).astype(dtype)
    gamma = r.uniform(0.5, 2, f).astype(dtype)
    beta = r.normal(size=f).astype(dtype)
    dout = r.normal(size=(n, f)).astype(dtype)
    return z, gamma, beta, dout


def run_bn(impl, z, gamma, beta, dout, relu):
    n, f = z.shape
    dt = z.dtype
    out, xhat, dz = np.empty_like(z), np.empty_like(z), np.empty_like(z)
    mean, inv_std, var = (np.empty(f, dt) for _ in range(3))
    dg, db = np.empty(f, dt), np.empty(f, dt)
    impl.bn_train(z, gamma, beta, 1e-5, out, xhat, mean, inv_std, var, relu)
    impl.bn_backward(dout, out, xhat, gamma, inv_std, dz, dg, db, relu)
    ev = np.empty_like(z)
    impl.bn_eval(z, gamma, beta, mean, var, 1e-5, ev, relu)
    return dict(out=out, xhat=xhat, mean=mean, var=var, inv_std=inv_std, dz=dz, dg=dg, db=db,
                ev=ev)


@needs_ext
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 70), st.integers(1, 40), st.booleans(),
       st.sampled_from([np.float32, np.float64]))
def test_bn_agree(seed, n, f, relu, dtype):
    case = bn_case(seed, n, f, dtype)
    a = run_bn(kernels.load("ext"), *case, relu)
    b = run_bn(kernels.load("python"), *case, relu)
    tol = 2e-4 if dtype == np.float32 else 1e-10
    for k in a:
        scale = max(1.0, float(np.abs(b[k]).max()))
        assert np.abs(a[k] - b[k]).max() <= tol * scale, k


@needs_ext
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 500), st.sampled_from([np.float32, np.float64]),
       st.integers(1, 50))
def test_adam_agree(seed, n, dtype, t):
    r = np.random.default_rng(seed)
    p0 = r.normal(size=n).astype(dtype)
    g = r.normal(size=n).astype(dtype)
    m0 = r.normal(size=n).astype(dtype) * 0.1
    v0 = r.uniform(0, 0.1, n).astype(dtype)
    res = []
    for name in ("ext", "python"):
        p, m, v = p0.copy(), m0.copy(), v0.copy()
        kernels.load(name).adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 1e-4,
                                       1 - 0.9 ** t, 1 - 0.999 ** t)
        res.append((p, m, v))
    rtol = 1e-5 if dtype == np.float32 else 1e-12
    for x, y in zip(*res):
        assert np.allclose(x, y, rtol=rtol, atol=rtol)


def test_backend_switch():
    prev = kernels.BACKEND
    try:
        kernels.use("python")
        assert kernels.BACKEND == "python"
        assert kernels.bn_train is kernels.load("python").bn_train
    finally:
        kernels.use(prev)


def test_fallback_always_available():
    assert "python" in kernels.available()
