# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contracts as ``luba._pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt, fabs, isinf

cnp.import_array()

cdef double _SERIES_SWITCH = 0.5


cdef inline double _log_emf(double f) nogil:
    cdef double term, acc
    cdef int n
    if f < _SERIES_SWITCH:
        term = f * f / 2.0
        acc = term
        n = 2
        while n < 20:
            n += 1
            term *= f / n
            acc += term
        return log1p(acc)
    return f + log1p(-f * exp(-f))


def recurrence_infinite(double lam, double tail_eps, Py_ssize_t k_max):
    cdef Py_ssize_t cap = 64, n = 0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf = np.empty(cap)
    cdef double f = log1p(lam)
    while f >= tail_eps:
        if n >= k_max:
            return buf[:n].copy(), f, True
        if n == cap:
            cap *= 2
            buf = np.resize(buf, cap)
        buf[n] = f
        n += 1
        f = _log_emf(f)
    return buf[:n].copy(), f, False


def recurrence_finite(double f1, double item_value, Py_ssize_t k_max):
    cdef Py_ssize_t cap = 64, n = 0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf = np.empty(cap)
    cdef double f = f1, shrink
    cdef double k = 1.0
    while k < item_value and n < k_max:
        if not (f > 0.0) or isinf(f):
            break
        if n == cap:
            cap *= 2
            buf = np.resize(buf, cap)
        buf[n] = f
        n += 1
        shrink = 1.0 - 1.0 / (item_value - k)
        if shrink <= 0.0:
            break
        f = _log_emf(f) + log(shrink)
        k += 1.0
    return buf[:n].copy()


cdef double _potential_win(const double[:] f, Py_ssize_t nf, double scale,
                           double[:] c, Py_ssize_t length) nogil:
    """Fill c[:length] from frequencies scale*f; return the no-winner product."""
    cdef Py_ssize_t n = length if length > nf else nf
    cdef Py_ssize_t k
    cdef double prefix = 1.0, x, e
    for k in range(n):
        x = scale * f[k] if k < nf else 0.0
        e = exp(-x)
        if k < length:
            c[k] = e * prefix
        prefix *= 1.0 - x * e
    return prefix


def potential_win(f, Py_ssize_t length):
    cdef const double[:] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = np.empty(length)
    cdef double nw = _potential_win(fv, fv.shape[0], 1.0, c, length)
    return c, nw


cdef void _rhs(const double[:] p, double lam, double[:] c, double[:] out) nogil:
    cdef Py_ssize_t k, n = p.shape[0]
    cdef double mean = 0.0
    _potential_win(p, n, lam, c, n)
    for k in range(n):
        mean += p[k] * c[k]
    for k in range(n):
        out[k] = p[k] * (c[k] - mean)


def replicator_rhs(p, double lam):
    cdef const double[:] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef Py_ssize_t n = pv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double[:] c = np.empty(n)
    _rhs(pv, lam, c, out)
    return out


cdef double _mean_payoff(const double[:] p, double lam, double[:] c) nogil:
    cdef Py_ssize_t k, n = p.shape[0]
    cdef double mean = 0.0
    _potential_win(p, n, lam, c, n)
    for k in range(n):
        mean += p[k] * c[k]
    return mean


def replicator_advance(p0, double lam, double dt, Py_ssize_t n_steps, target,
                       double stop_distance, int norm, double fail_below):
    cdef double[:] p = np.array(p0, dtype=np.float64)
    cdef const double[:] tg = np.ascontiguousarray(target, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], k, steps = 0, clamps = 0
    cdef double[:] c = np.empty(n)
    cdef double[:] k1 = np.empty(n)
    cdef double[:] k2 = np.empty(n)
    cdef double[:] k3 = np.empty(n)
    cdef double[:] k4 = np.empty(n)
    cdef double[:] tmp = np.empty(n)
    cdef double[:] nxt = np.empty(n)
    cdef bint failed = False
    cdef double half = 0.5 * dt, sixth = dt / 6.0
    cdef double total, d, dist, m, worst_drop = 0.0, mean_pay, new_pay
    cdef double min_entry = p[0]
    for k in range(n):
        if p[k] < min_entry:
            min_entry = p[k]
    with nogil:
        mean_pay = _mean_payoff(p, lam, c)
        while steps < n_steps:
            _rhs(p, lam, c, k1)
            for k in range(n):
                tmp[k] = p[k] + half * k1[k]
            _rhs(tmp, lam, c, k2)
            for k in range(n):
                tmp[k] = p[k] + half * k2[k]
            _rhs(tmp, lam, c, k3)
            for k in range(n):
                tmp[k] = p[k] + dt * k3[k]
            _rhs(tmp, lam, c, k4)
            m = 1.0
            for k in range(n):
                nxt[k] = p[k] + sixth * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
                if k == 0 or nxt[k] < m:
                    m = nxt[k]
            if m < min_entry:
                min_entry = m
            if m < fail_below:
                failed = True
                break
            for k in range(n):
                p[k] = nxt[k]
            total = 0.0
            for k in range(n):
                if p[k] < 0.0:
                    clamps += 1
                    p[k] = 0.0
                total += p[k]
            for k in range(n):
                p[k] /= total
            steps += 1
            new_pay = _mean_payoff(p, lam, c)
            if mean_pay - new_pay > worst_drop:
                worst_drop = mean_pay - new_pay
            mean_pay = new_pay
            dist = 0.0
            for k in range(n):
                d = p[k] - tg[k]
                if norm == 1:
                    dist += fabs(d)
                else:
                    dist += d * d
            if norm != 1:
                dist = sqrt(dist)
            if dist < stop_distance:
                break
    return np.asarray(p), steps, clamps, worst_drop, min_entry, failed


def lowest_unique(counts):
    cdef const cnp.int64_t[:, :] cv = np.ascontiguousarray(counts, dtype=np.int64)
    cdef Py_ssize_t rows = cv.shape[0], cols = cv.shape[1], i, j
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(rows, dtype=np.int64)
    cdef cnp.int64_t[:] ov = out
    with nogil:
        for i in range(rows):
            for j in range(cols):
                if cv[i, j] == 1:
                    ov[i] = j + 1
                    break
    return out


def sample_distinct(weights, uniforms):
    cdef const double[:] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[:, :] uv = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t rows = uv.shape[0], m = uv.shape[1], k = wv.shape[0]
    cdef Py_ssize_t i, j, t, idx, last
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.empty((rows, m), dtype=np.int64)
    cdef cnp.int64_t[:, :] ov = out
    cdef double[:] w = np.empty(k)
    cdef double total, target, acc
    with nogil:
        for i in range(rows):
            for t in range(k):
                w[t] = wv[t]
            for j in range(m):
                total = 0.0
                for t in range(k):
                    total += w[t]
                target = uv[i, j] * total
                acc = 0.0
                idx = k
                last = -1
                for t in range(k):
                    acc += w[t]
                    if w[t] > 0.0:
                        last = t
                    if acc > target:
                        idx = t
                        break
                if idx == k:
                    idx = last
                ov[i, j] = idx + 1
                w[idx] = 0.0
    return out
