"""Hot numeric kernels: dense matvec and fused two-layer-MLP passes.

Two interchangeable backends:

* ``numba`` (default): explicit loops compiled with ``@njit``.  Avoids
  numpy call overhead, which dominates at the tiny matrix sizes this
  package runs at.
* ``numpy``: plain BLAS-backed expressions.  Selected by setting the
  environment variable ``DISTOK_PURE_NUMPY=1`` before import.

Both backends are deterministic; results may differ in the last ulp
between backends, never within one.  ``benchmarks/bench_kernels.py``
compares the two.
"""

import os

import numpy as np

_PURE_NUMPY = os.environ.get("DISTOK_PURE_NUMPY", "").lower() in ("1", "true", "yes")


# ---------------------------------------------------------------- numpy path

def _matvec_np(w, x):
    return w @ x


def _matvec_t_np(w, y):
    return w.T @ y


def _mlp2_forward_np(w1, b1, w2, b2, x):
    h = np.tanh(w1 @ x + b1)
    y = w2 @ h + b2
    return y, h


def _mlp2_backward_np(w1, b1, w2, b2, x, h, dy):
    dw2 = np.outer(dy, h)
    db2 = dy.copy()
    dpre = (1.0 - h * h) * (w2.T @ dy)
    dw1 = np.outer(dpre, x)
    db1 = dpre.copy()
    dx = w1.T @ dpre
    return dx, dw1, db1, dw2, db2


# ---------------------------------------------------------------- numba path

if not _PURE_NUMPY:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dependency
        njit = None
        _PURE_NUMPY = True

if not _PURE_NUMPY:

    @njit(cache=True)
    def _matvec_nb(w, x):
        out_dim, in_dim = w.shape
        y = np.empty(out_dim)
        for i in range(out_dim):
            acc = 0.0
            for j in range(in_dim):
                acc += w[i, j] * x[j]
            y[i] = acc
        return y

    @njit(cache=True)
    def _matvec_t_nb(w, y):
        out_dim, in_dim = w.shape
        x = np.zeros(in_dim)
        for i in range(out_dim):
            yi = y[i]
            for j in range(in_dim):
                x[j] += w[i, j] * yi
        return x

    @njit(cache=True)
    def _mlp2_forward_nb(w1, b1, w2, b2, x):
        hid, in_dim = w1.shape
        out_dim = w2.shape[0]
        h = np.empty(hid)
        for i in range(hid):
            acc = b1[i]
            for j in range(in_dim):
                acc += w1[i, j] * x[j]
            h[i] = np.tanh(acc)
        y = np.empty(out_dim)
        for i in range(out_dim):
            acc = b2[i]
            for j in range(hid):
                acc += w2[i, j] * h[j]
            y[i] = acc
        return y, h

    @njit(cache=True)
    def _mlp2_backward_nb(w1, b1, w2, b2, x, h, dy):
        hid, in_dim = w1.shape
        out_dim = w2.shape[0]
        dw2 = np.empty((out_dim, hid))
        db2 = np.empty(out_dim)
        for i in range(out_dim):
            db2[i] = dy[i]
            for j in range(hid):
                dw2[i, j] = dy[i] * h[j]
        dpre = np.zeros(hid)
        for i in range(out_dim):
            for j in range(hid):
                dpre[j] += w2[i, j] * dy[i]
        for j in range(hid):
            dpre[j] *= 1.0 - h[j] * h[j]
        dw1 = np.empty((hid, in_dim))
        db1 = np.empty(hid)
        for i in range(hid):
            db1[i] = dpre[i]
            for j in range(in_dim):
                dw1[i, j] = dpre[i] * x[j]
        dx = np.zeros(in_dim)
        for i in range(hid):
            for j in range(in_dim):
                dx[j] += w1[i, j] * dpre[i]
        return dx, dw1, db1, dw2, db2

    matvec = _matvec_nb
    matvec_t = _matvec_t_nb
    mlp2_forward = _mlp2_forward_nb
    mlp2_backward = _mlp2_backward_nb
else:
    matvec = _matvec_np
    matvec_t = _matvec_t_np
    mlp2_forward = _mlp2_forward_np
    mlp2_backward = _mlp2_backward_np


def backend_name():
    return "numpy" if _PURE_NUMPY else "numba"


# Both backends, by name, for benchmarking in one process.
BACKENDS = {"numpy": (_matvec_np, _matvec_t_np, _mlp2_forward_np, _mlp2_backward_np)}
if not _PURE_NUMPY:
    BACKENDS["numba"] = (_matvec_nb, _matvec_t_nb, _mlp2_forward_nb, _mlp2_backward_nb)
