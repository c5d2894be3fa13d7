"""Hot numeric kernels.

Each kernel has a numba ``@njit`` version and a pure-numpy version with the
same signature. The numba path is used unless ``SELTRAIN_DISABLE_NUMBA`` is
set to a truthy value or numba cannot be imported. Both paths are always
importable as ``<name>_numba`` / ``<name>_numpy`` so tests and the benchmark
can compare them.
"""

from __future__ import annotations

import math
import os

import numpy as np

_FLAG = os.environ.get("SELTRAIN_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None


def _njit(fn):
    if numba is None:  # pragma: no cover
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# --------------------------------------------------------------------------
# scalar deterministic-equivalent fixed point
# --------------------------------------------------------------------------

def _fixed_point_loop(vbar, n, k, tol, max_iter):
    """t <- 1 / ((1/K) sum_k vbar_k / (1 + (N/K) vbar_k t) + 1/K), from t = 1.

    Returns (t, iterations, residual, converged).
    """
    ratio = n / k
    t = 1.0
    residual = math.inf
    for it in range(1, max_iter + 1):
        acc = 0.0
        for j in range(vbar.shape[0]):
            acc += vbar[j] / (1.0 + ratio * vbar[j] * t)
        t_new = k / (acc + 1.0)
        residual = abs(t_new - t)
        t = t_new
        if residual <= tol:
            return t, it, residual, True
    return t, max_iter, residual, False


def fixed_point_numpy(vbar, n, k, tol, max_iter):
    vbar = np.asarray(vbar, dtype=np.float64)
    ratio = n / k
    t = 1.0
    residual = math.inf
    for it in range(1, max_iter + 1):
        t_new = k / (float(np.sum(vbar / (1.0 + ratio * vbar * t))) + 1.0)
        residual = abs(t_new - t)
        t = t_new
        if residual <= tol:
            return t, it, residual, True
    return t, max_iter, residual, False


fixed_point_numba = _njit(_fixed_point_loop)


def _fixed_point_batch_loop(vbars, n, k, tol, max_iter):
    m = vbars.shape[0]
    t = np.empty(m)
    iters = np.empty(m, dtype=np.int64)
    res = np.empty(m)
    ok = np.empty(m, dtype=np.bool_)
    for i in range(m):
        ti, it, ri, ci = fixed_point_numba(vbars[i], n, k, tol, max_iter)
        t[i] = ti
        iters[i] = it
        res[i] = ri
        ok[i] = ci
    return t, iters, res, ok


fixed_point_batch_numba = _njit(_fixed_point_batch_loop) if HAVE_NUMBA else None


def fixed_point_batch_numpy(vbars, n, k, tol, max_iter):
    """Vectorized over rows; each row stops updating once it has converged."""
    vbars = np.asarray(vbars, dtype=np.float64)
    m = vbars.shape[0]
    ratio = n / k
    t = np.ones(m)
    iters = np.zeros(m, dtype=np.int64)
    res = np.full(m, np.inf)
    active = np.ones(m, dtype=bool)
    for it in range(1, max_iter + 1):
        if not active.any():
            break
        vb = vbars[active]
        ta = t[active]
        t_new = k / (np.sum(vb / (1.0 + ratio * vb * ta[:, None]), axis=1) + 1.0)
        r = np.abs(t_new - ta)
        t[active] = t_new
        res[active] = r
        iters[active] = it
        done = r <= tol
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return t, iters, res, ~active


# --------------------------------------------------------------------------
# deterministic-equivalent rate bracket (nats, before the (1 - tau/T0)/K factor)
# --------------------------------------------------------------------------

def _deteq_bracket_loop(vbar, t, n, k):
    ratio = n / k
    s = 0.0
    for j in range(vbar.shape[0]):
        e = ratio * vbar[j] * t
        s += math.log1p(e) - e / (1.0 + e)
    return s - n * math.log(t / k)


deteq_bracket_numba = _njit(_deteq_bracket_loop)


def deteq_bracket_numpy(vbar, t, n, k):
    e = (n / k) * np.asarray(vbar, dtype=np.float64) * t
    return float(np.sum(np.log1p(e) - e / (1.0 + e))) - n * math.log(t / k)


# --------------------------------------------------------------------------
# log det(I + scale * G) for Hermitian positive semi-definite G
# --------------------------------------------------------------------------

def _logdet_eye_plus_loop(gram, scale):
    m = gram.shape[0]
    a = np.empty_like(gram)
    for i in range(m):
        for j in range(m):
            a[i, j] = scale * gram[i, j]
        a[i, i] += 1.0
    L = np.linalg.cholesky(a)
    s = 0.0
    for i in range(m):
        s += math.log(L[i, i].real)
    return 2.0 * s


logdet_eye_plus_numba = _njit(_logdet_eye_plus_loop)


def logdet_eye_plus_numpy(gram, scale):
    m = gram.shape[0]
    L = np.linalg.cholesky(np.eye(m) + scale * gram)
    return 2.0 * float(np.sum(np.log(np.diagonal(L).real)))


# --------------------------------------------------------------------------
# selection-only variance tracking for dynamic user selection
# --------------------------------------------------------------------------

def _dus_vhat_loop(v, c, tau, tau_warm, n_blocks):
    """Obtained-channel variances per block under DUS, no channel draws.

    Block 0 trains every user with ``tau_warm``; blocks 1.. use DUS at ``tau``.
    Returns a (n_blocks, K) array. Variances are split exactly as in
    :func:`seltrain.csi.conserve`.
    """
    kk = v.shape[0]
    out = np.empty((n_blocks, kk))
    for j in range(kk):
        vh = v[j] - v[j] / (1.0 + tau_warm * v[j])
        out[0, j] = v[j] - (v[j] - vh)
    c2 = c * c
    count = min(tau, kk)
    neg = np.empty(kk)
    for b in range(1, n_blocks):
        for j in range(kk):
            vh = c2 * out[b - 1, j]
            out[b, j] = v[j] - (v[j] - vh)
        if count <= 0:
            continue
        for j in range(kk):
            beta_t = v[j] / (1.0 + tau * v[j])
            beta_p = v[j] - c2 * out[b - 1, j]
            neg[j] = -(beta_p - beta_t)
        order = np.argsort(neg, kind="mergesort")
        for q in range(count):
            j = order[q]
            vh = v[j] - v[j] / (1.0 + tau * v[j])
            out[b, j] = v[j] - (v[j] - vh)
    return out


dus_vhat_numba = _njit(_dus_vhat_loop)


def dus_vhat_numpy(v, c, tau, tau_warm, n_blocks):
    v = np.asarray(v, dtype=np.float64)

    def split(vh):
        return v - (v - vh)

    out = np.empty((n_blocks, v.shape[0]))
    out[0] = split(v - v / (1.0 + tau_warm * v))
    beta_t = v / (1.0 + tau * v)
    trained = split(v - beta_t)
    count = min(tau, v.shape[0])
    for b in range(1, n_blocks):
        out[b] = split(c * c * out[b - 1])
        if count <= 0:
            continue
        delta = (v - c * c * out[b - 1]) - beta_t
        order = np.argsort(-delta, kind="stable")[:count]
        out[b, order] = trained[order]
    return out


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

USING_NUMBA = HAVE_NUMBA and not _DISABLED

if USING_NUMBA:
    fixed_point = fixed_point_numba
    fixed_point_batch = fixed_point_batch_numba
    deteq_bracket = deteq_bracket_numba
    logdet_eye_plus = logdet_eye_plus_numba
    dus_vhat = dus_vhat_numba
else:
    fixed_point = fixed_point_numpy
    fixed_point_batch = fixed_point_batch_numpy
    deteq_bracket = deteq_bracket_numpy
    logdet_eye_plus = logdet_eye_plus_numpy
    dus_vhat = dus_vhat_numpy


def backend() -> str:
    return "numba" if USING_NUMBA else "numpy"
