"""Pure-numpy fallback for the compiled kernels in ``_kernels.pyx``.

Signatures and in-place semantics match the extension exactly; outputs agree
to floating-point rounding.
"""
import numpy as np


def bn_train(z, gamma, beta, eps, out, xhat, mean, inv_std, var, relu):
    mu = z.mean(axis=0, dtype=np.float64)
    d = z - mu
    v = np.mean(d * d, axis=0)
    mean[...] = mu
    var[...] = v
    inv_std[...] = 1.0 / np.sqrt(v + eps)
    np.multiply(d, inv_std, out=xhat, casting="unsafe")
    np.multiply(xhat, gamma, out=out)
    out += beta
    if relu:
        np.maximum(out, 0, out=out)


def bn_eval(z, gamma, beta, running_mean, running_var, eps, out, relu):
    scale = gamma / np.sqrt(running_var.astype(np.float64) + eps)
    shift = beta - running_mean * scale
    np.multiply(z, scale, out=out, casting="unsafe")
    out += shift.astype(out.dtype)
    if relu:
        np.maximum(out, 0, out=out)


def bn_backward(dout, out, xhat, gamma, inv_std, dz, dgamma, dbeta, relu):
    dy = np.where(out > 0, dout, 0) if relu else dout
    sb = dy.sum(axis=0, dtype=np.float64)
    sg = np.einsum("ij,ij->j", dy.astype(np.float64), xhat.astype(np.float64))
    dgamma[...] = sg
    dbeta[...] = sb
    n = dy.shape[0]
    k = gamma * inv_std.astype(np.float64) / n
    dz[...] = k * (n * dy - sb - xhat * sg)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, weight_decay, bias1, bias2):
    """In-place Adam step with coupled (L2) weight decay; bias{1,2} = 1 - beta^t."""
    gi = g + weight_decay * p
    m *= beta1
    m += (1.0 - beta1) * gi
    v *= beta2
    v += (1.0 - beta2) * gi * gi
    p -= (lr / bias1) * m / (np.sqrt(v) / np.sqrt(bias2) + eps)
