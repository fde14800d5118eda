# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused batch-norm(+ReLU) and Adam kernels.

Same signatures and semantics as ``_kernels_py``.  Per-feature reductions
run over rows in index order and accumulate in double precision.  Inner
loops are written as plain selects over locals so GCC can vectorize them.
"""
from cython cimport floating
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free


cdef double *_zeros(Py_ssize_t n) except NULL:
    cdef double *p = <double *> malloc(n * sizeof(double))
    cdef Py_ssize_t j
    if p == NULL:
        raise MemoryError()
    for j in range(n):
        p[j] = 0.0
    return p


def bn_train(floating[:, ::1] z, floating[::1] gamma, floating[::1] beta, double eps,
             floating[:, ::1] out, floating[:, ::1] xhat, floating[::1] mean,
             floating[::1] inv_std, floating[::1] var, bint relu):
    cdef Py_ssize_t n = z.shape[0], f = z.shape[1], i, j
    cdef floating *zr
    cdef floating *xr
    cdef floating *orow
    cdef floating o
    cdef double d
    cdef double *acc = _zeros(f)
    cdef floating *mu = <floating *> malloc(f * sizeof(floating))
    cdef floating *s = &inv_std[0]
    cdef floating *g = &gamma[0]
    cdef floating *b = &beta[0]
    if mu == NULL:
        free(acc)
        raise MemoryError()
    try:
        for i in range(n):
            zr = &z[i, 0]
            for j in range(f):
                acc[j] += zr[j]
        for j in range(f):
            mean[j] = <floating> (acc[j] / n)
            mu[j] = mean[j]
            acc[j] = 0.0
        for i in range(n):
            zr = &z[i, 0]
            for j in range(f):
                d = zr[j] - mu[j]
                acc[j] += d * d
        for j in range(f):
            var[j] = <floating> (acc[j] / n)
            s[j] = <floating> (1.0 / sqrt(acc[j] / n + eps))
        for i in range(n):
            zr = &z[i, 0]
            xr = &xhat[i, 0]
            orow = &out[i, 0]
            for j in range(f):
                xr[j] = (zr[j] - mu[j]) * s[j]
            if relu:
                for j in range(f):
                    o = g[j] * xr[j] + b[j]
                    orow[j] = o if o > 0 else 0
            else:
                for j in range(f):
                    orow[j] = g[j] * xr[j] + b[j]
    finally:
        free(acc)
        free(mu)


def bn_eval(floating[:, ::1] z, floating[::1] gamma, floating[::1] beta,
            floating[::1] running_mean, floating[::1] running_var, double eps,
            floating[:, ::1] out, bint relu):
    cdef Py_ssize_t n = z.shape[0], f = z.shape[1], i, j
    cdef floating *zr
    cdef floating *orow
    cdef floating o
    cdef floating *scale = <floating *> malloc(f * sizeof(floating))
    cdef floating *shift = <floating *> malloc(f * sizeof(floating))
    if scale == NULL or shift == NULL:
        free(scale)
        free(shift)
        raise MemoryError()
    try:
        for j in range(f):
            scale[j] = <floating> (gamma[j] / sqrt(<double> running_var[j] + eps))
            shift[j] = beta[j] - running_mean[j] * scale[j]
        for i in range(n):
            zr = &z[i, 0]
            orow = &out[i, 0]
            if relu:
                for j in range(f):
                    o = zr[j] * scale[j] + shift[j]
                    orow[j] = o if o > 0 else 0
            else:
                for j in range(f):
                    orow[j] = zr[j] * scale[j] + shift[j]
    finally:
        free(scale)
        free(shift)


def bn_backward(floating[:, ::1] dout, floating[:, ::1] out, floating[:, ::1] xhat,
                floating[::1] gamma, floating[::1] inv_std, floating[:, ::1] dz,
                floating[::1] dgamma, floating[::1] dbeta, bint relu):
    cdef Py_ssize_t n = dout.shape[0], f = dout.shape[1], i, j
    cdef floating *dr
    cdef floating *orow
    cdef floating *xr
    cdef floating *zr
    cdef floating dy, o
    cdef double *sg = _zeros(f)
    cdef double *sb = NULL
    cdef floating *k = NULL
    cdef floating *cb
    cdef floating *cg
    try:
        sb = _zeros(f)
        k = <floating *> malloc(3 * f * sizeof(floating))
        if k == NULL:
            raise MemoryError()
        cb = k + f
        cg = k + 2 * f
        # masked upstream gradient goes to dz first, then dz is finished in place
        for i in range(n):
            dr = &dout[i, 0]
            zr = &dz[i, 0]
            if relu:
                orow = &out[i, 0]
                for j in range(f):
                    dy = dr[j]
                    o = orow[j]
                    zr[j] = dy if o > 0 else 0
            else:
                for j in range(f):
                    zr[j] = dr[j]
        for i in range(n):
            zr = &dz[i, 0]
            xr = &xhat[i, 0]
            for j in range(f):
                sb[j] += zr[j]
                sg[j] += zr[j] * xr[j]
        for j in range(f):
            dgamma[j] = <floating> sg[j]
            dbeta[j] = <floating> sb[j]
            # dz = g*s/n * (n*dy - sb - xhat*sg)
            k[j] = <floating> (gamma[j] * inv_std[j])
            cb[j] = <floating> (gamma[j] * inv_std[j] * sb[j] / n)
            cg[j] = <floating> (gamma[j] * inv_std[j] * sg[j] / n)
        for i in range(n):
            zr = &dz[i, 0]
            xr = &xhat[i, 0]
            for j in range(f):
                zr[j] = k[j] * zr[j] - cb[j] - cg[j] * xr[j]
    finally:
        free(sg)
        free(sb)
        free(k)


def adam_update(floating[::1] p, floating[::1] g, floating[::1] m, floating[::1] v,
                double lr, double beta1, double beta2, double eps, double weight_decay,
                double bias1, double bias2):
    """In-place Adam step with coupled (L2) weight decay; bias{1,2} = 1 - beta^t."""
    cdef Py_ssize_t n = p.shape[0], i
    cdef floating gi
    cdef floating b1 = beta1, b2 = beta2, c1 = 1.0 - beta1, c2 = 1.0 - beta2
    cdef floating wd = weight_decay, e = eps
    cdef floating step = lr / bias1
    cdef floating rb2 = 1.0 / sqrt(bias2)
    cdef floating *pp = &p[0]
    cdef floating *gp = &g[0]
    cdef floating *mp = &m[0]
    cdef floating *vp = &v[0]
    for i in range(n):
        gi = gp[i] + wd * pp[i]
        mp[i] = b1 * mp[i] + c1 * gi
        vp[i] = b2 * vp[i] + c2 * gi * gi
        pp[i] = pp[i] - step * mp[i] / (sqrt(vp[i]) * rb2 + e)
