"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The active backend is picked at import time: numba when importable, unless
the environment variable ``DIAM_NO_NUMBA`` is set to a truthy value. Both
backends stay importable (``numpy_backend`` / ``numba_backend``) so tests
and the benchmark can compare them directly.

All kernels take C-contiguous float64 arrays, accumulate in float64 and,
on the numba path, reduce in a fixed row-major order.
"""

import os
from types import SimpleNamespace

import numpy as np

LOG_EPS = 1e-10

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None
    _HAVE_NUMBA = False


def _env_disabled():
    return os.environ.get("DIAM_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _np_softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _np_sum_neg_p_logq(p, q):
    # -sum p * log(max(q, eps)), no normalization
    return float(-np.sum(p * np.log(np.maximum(q, LOG_EPS))))


def _np_kl_vec(a, b):
    return float(np.sum(a * (np.log(np.maximum(a, LOG_EPS)) - np.log(np.maximum(b, LOG_EPS)))))


def _np_kl_rows_sum(r, o):
    logs = np.log(np.maximum(r, LOG_EPS)) - np.log(np.maximum(o, LOG_EPS))
    return float(np.sum(r * logs))


def _np_col_means(p):
    return p.mean(axis=0)


def _np_softmax_backward(p, dp):
    # dz = p * (dp - sum_k p_k dp_k) per row
    inner = np.sum(p * dp, axis=1, keepdims=True)
    return p * (dp - inner)


# ---------------------------------------------------------------------------
# numba backend (loop form of the same kernels)
# ---------------------------------------------------------------------------

def _loop_softmax_rows(z):
    n, k = z.shape
    out = np.empty((n, k), dtype=np.float64)
    for j in range(n):
        m = z[j, 0]
        for c in range(1, k):
            if z[j, c] > m:
                m = z[j, c]
        total = 0.0
        for c in range(k):
            e = np.exp(z[j, c] - m)
            out[j, c] = e
            total += e
        for c in range(k):
            out[j, c] /= total
    return out


def _loop_sum_neg_p_logq(p, q):
    n, k = p.shape
    acc = 0.0
    for j in range(n):
        for c in range(k):
            qq = q[j, c]
            if qq < LOG_EPS:
                qq = LOG_EPS
            acc -= p[j, c] * np.log(qq)
    return acc


def _loop_kl_vec(a, b):
    acc = 0.0
    for c in range(a.shape[0]):
        aa = a[c]
        if aa < LOG_EPS:
            aa = LOG_EPS
        bb = b[c]
        if bb < LOG_EPS:
            bb = LOG_EPS
        acc += a[c] * (np.log(aa) - np.log(bb))
    return acc


def _loop_kl_rows_sum(r, o):
    n, k = r.shape
    acc = 0.0
    for j in range(n):
        for c in range(k):
            rr = r[j, c]
            if rr < LOG_EPS:
                rr = LOG_EPS
            oo = o[j, c]
            if oo < LOG_EPS:
                oo = LOG_EPS
            acc += r[j, c] * (np.log(rr) - np.log(oo))
    return acc


def _loop_col_means(p):
    n, k = p.shape
    out = np.zeros(k, dtype=np.float64)
    for j in range(n):
        for c in range(k):
            out[c] += p[j, c]
    for c in range(k):
        out[c] /= n
    return out


def _loop_softmax_backward(p, dp):
    n, k = p.shape
    out = np.empty((n, k), dtype=np.float64)
    for j in range(n):
        inner = 0.0
        for c in range(k):
            inner += p[j, c] * dp[j, c]
        for c in range(k):
            out[j, c] = p[j, c] * (dp[j, c] - inner)
    return out


numpy_backend = SimpleNamespace(
    name="numpy",
    softmax_rows=_np_softmax_rows,
    sum_neg_p_logq=_np_sum_neg_p_logq,
    kl_vec=_np_kl_vec,
    kl_rows_sum=_np_kl_rows_sum,
    col_means=_np_col_means,
    softmax_backward=_np_softmax_backward,
)

if _HAVE_NUMBA:
    _jit = njit(cache=True, fastmath=False)
    numba_backend = SimpleNamespace(
        name="numba",
        softmax_rows=_jit(_loop_softmax_rows),
        sum_neg_p_logq=_jit(_loop_sum_neg_p_logq),
        kl_vec=_jit(_loop_kl_vec),
        kl_rows_sum=_jit(_loop_kl_rows_sum),
        col_means=_jit(_loop_col_means),
        softmax_backward=_jit(_loop_softmax_backward),
    )
else:  # pragma: no cover
    numba_backend = None

USE_NUMBA = _HAVE_NUMBA and not _env_disabled()
active = numba_backend if USE_NUMBA else numpy_backend

softmax_rows = active.softmax_rows
sum_neg_p_logq = active.sum_neg_p_logq
kl_vec = active.kl_vec
kl_rows_sum = active.kl_rows_sum
col_means = active.col_means
softmax_backward = active.softmax_backward


def warmup():
    """Trigger jit compilation on tiny inputs so timed code runs warm."""
    z = np.array([[0.0, 1.0], [1.0, 0.0]])
    p = softmax_rows(z)
    sum_neg_p_logq(p, p)
    kl_vec(p[0], p[1])
    kl_rows_sum(p, p)
    col_means(p)
    softmax_backward(p, z)
