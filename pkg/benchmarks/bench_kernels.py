"""Compiled kernels vs numpy fallback: per-kernel timings and a full training step.

    python benchmarks/bench_kernels.py [--rows 4096] [--width 512] [--repeat 5]
"""
import argparse
import time

import numpy as np

from xfmr_tl.nn import kernels
from xfmr_tl.nn.model import Architecture, SynthesisModel, loss_grad
from xfmr_tl.nn.optim import Adam


def best_of(fn, repeat):
    fn()  # warm up
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_backend(name, rows, width, repeat):
    kernels.use(name)
    impl = kernels.load(name)
    r = np.random.default_rng(0)
    z = r.normal(size=(rows, width)).astype(np.float32)
    g, b = np.ones(width, np.float32), np.zeros(width, np.float32)
    out, xhat, dz = np.empty_like(z), np.empty_like(z), np.empty_like(z)
    mean, inv_std, var, dg, db = (np.empty(width, np.float32) for _ in range(5))
    dout = r.normal(size=z.shape).astype(np.float32)
    res = {}
    res["bn_forward"] = best_of(
        lambda: impl.bn_train(z, g, b, 1e-5, out, xhat, mean, inv_std, var, True), repeat)
    res["bn_backward"] = best_of(
        lambda: impl.bn_backward(dout, out, xhat, g, inv_std, dz, dg, db, True), repeat)

    model = SynthesisModel(Architecture(hidden=width), seed=0)
    n = model.params.size
    p, grad = model.params.copy(), r.normal(size=n).astype(np.float32)
    m, v = np.zeros(n, np.float32), np.zeros(n, np.float32)
    res["adam"] = best_of(
        lambda: impl.adam_update(p, grad, m, v, 5e-4, 0.9, 0.999, 1e-8, 1e-4, 0.1, 0.001),
        repeat)

    x = r.normal(size=(rows, 4)).astype(np.float32)
    y = r.normal(size=(rows, 5)).astype(np.float32)
    vv = r.normal(size=(rows, 3)).astype(np.float32)
    opt = Adam(n, weight_decay=1e-4)

    def step():
        yh, vh = model.forward(x, "train")
        model.backward(*loss_grad(yh, vh, y, vv, 0.5))
        opt.step(model.params, model.grads, 5e-4)

    res["train_step"] = best_of(step, repeat)
    return res


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--width", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    names = kernels.available()
    results = {name: bench_backend(name, args.rows, args.width, args.repeat) for name in names}
    print(f"rows={args.rows} width={args.width} float32, best of {args.repeat}")
    print(f"{'kernel':<12s}" + "".join(f"{n:>12s}" for n in names)
          + ("     speedup" if len(names) == 2 else ""))
    for k in results[names[0]]:
        line = f"{k:<12s}" + "".join(f"{results[n][k] * 1e3:>10.2f}ms" for n in names)
        if len(names) == 2:
            line += f"{results['python'][k] / results['ext'][k]:>11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
