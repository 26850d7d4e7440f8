"""Pure-Python/numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and, given identical inputs, the same output. The compiled module is
preferred at import time (see ``luba._backend``).
"""
import math

import numpy as np

_SERIES_SWITCH = 0.5


def _log_emf(f):
    """Return ln(e**f - f) without cancellation for small or large f."""
    if f < _SERIES_SWITCH:
        # e**f - 1 - f as a series; 18 terms is exact to double at f=0.5
        term = f * f / 2.0
        acc = term
        n = 2
        while n < 20:
            n += 1
            term *= f / n
            acc += term
        return math.log1p(acc)
    return f + math.log1p(-f * math.exp(-f))


def recurrence_infinite(lam, tail_eps, k_max):
    """Iterate the V -> infinity equal-payoff recurrence from f_1 = ln(1+lam).

    Returns ``(f, next_value, truncated)`` where ``f`` holds every iterate
    >= tail_eps, ``next_value`` is the first discarded iterate and
    ``truncated`` is True when k_max was hit first.
    """
    out = []
    f = math.log1p(lam)
    while f >= tail_eps:
        if len(out) >= k_max:
            return np.array(out, dtype=np.float64), f, True
        out.append(f)
        f = _log_emf(f)
    return np.array(out, dtype=np.float64), f, False


def recurrence_finite(f1, item_value, k_max):
    """Iterate the finite-V recurrence from ``f1``.

    Stops at the first non-positive or non-finite iterate, or once
    k >= item_value, or after k_max entries.
    """
    out = []
    f = f1
    k = 1
    while k < item_value and len(out) < k_max:
        if not (f > 0.0) or math.isinf(f):
            break
        out.append(f)
        shrink = 1.0 - 1.0 / (item_value - k)
        if shrink <= 0.0:
            break
        f = _log_emf(f) + math.log(shrink)
        k += 1
    return np.array(out, dtype=np.float64)


def potential_win(f, length):
    """Potential-winning probabilities c_k for k = 1..length.

    ``f`` is zero-padded up to ``length``. Returns ``(c, no_winner)`` where
    ``no_winner`` is the running product over all of ``f``.
    """
    f = np.asarray(f, dtype=np.float64)
    n = max(length, f.shape[0])
    if n == 0:
        return np.zeros(0), 1.0
    full = np.zeros(n)
    full[: f.shape[0]] = f
    e = np.exp(-full)
    q = 1.0 - full * e
    prefix = np.empty(n)
    prefix[0] = 1.0
    if n > 1:
        np.cumprod(q[:-1], out=prefix[1:])
    no_winner = float(prefix[-1] * q[-1])
    return (e * prefix)[:length], no_winner


def replicator_rhs(p, lam):
    p = np.asarray(p, dtype=np.float64)
    c, _ = potential_win(lam * p, p.shape[0])
    return p * (c - np.dot(p, c))


def _distance(p, target, norm):
    d = p - target
    if norm == 1:
        return float(np.abs(d).sum())
    return float(math.sqrt(np.dot(d, d)))


def replicator_advance(p, lam, dt, n_steps, target, stop_distance, norm, fail_below):
    """Advance the replicator ODE by up to ``n_steps`` RK4 steps.

    After each step negative entries are clamped to zero and ``p`` is
    renormalized. Stops early once the distance to ``target`` drops below
    ``stop_distance``, or when an entry falls below ``fail_below`` (the
    offending step is discarded).

    Returns ``(p, steps_taken, clamps, worst_payoff_drop, min_entry, failed)``.
    """
    p = np.array(p, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    clamps = 0
    worst_drop = 0.0
    min_entry = float(p.min())
    c, _ = potential_win(lam * p, p.shape[0])
    mean_pay = float(np.dot(p, c))
    steps = 0
    half = 0.5 * dt
    while steps < n_steps:
        k1 = replicator_rhs(p, lam)
        k2 = replicator_rhs(p + half * k1, lam)
        k3 = replicator_rhs(p + half * k2, lam)
        k4 = replicator_rhs(p + dt * k3, lam)
        nxt = p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        m = float(nxt.min())
        if m < min_entry:
            min_entry = m
        if m < fail_below:
            return p, steps, clamps, worst_drop, min_entry, True
        p = nxt
        if m < 0.0:
            clamps += int((p < 0.0).sum())
            np.maximum(p, 0.0, out=p)
        p /= p.sum()
        steps += 1
        c, _ = potential_win(lam * p, p.shape[0])
        new_pay = float(np.dot(p, c))
        if mean_pay - new_pay > worst_drop:
            worst_drop = mean_pay - new_pay
        mean_pay = new_pay
        if _distance(p, target, norm) < stop_distance:
            break
    return p, steps, clamps, worst_drop, min_entry, False


def lowest_unique(counts):
    """Winning number (1-based) per row of a count matrix, 0 if none."""
    counts = np.asarray(counts)
    uniq = counts == 1
    has = uniq.any(axis=1)
    return np.where(has, np.argmax(uniq, axis=1) + 1, 0).astype(np.int64)


def sample_distinct(weights, uniforms):
    """Draw distinct numbers per row by sequential removal.

    Row i draws ``uniforms.shape[1]`` numbers; each draw picks among the
    not-yet-taken numbers with probability proportional to ``weights``.
    Returns 1-based numbers, shape equal to ``uniforms.shape``.
    """
    weights = np.asarray(weights, dtype=np.float64)
    uniforms = np.asarray(uniforms, dtype=np.float64)
    rows, m = uniforms.shape
    k = weights.shape[0]
    w = np.broadcast_to(weights, (rows, k)).copy()
    out = np.empty((rows, m), dtype=np.int64)
    r = np.arange(rows)
    for j in range(m):
        cum = np.cumsum(w, axis=1)
        total = cum[:, -1]
        target = uniforms[:, j] * total
        idx = (cum <= target[:, None]).sum(axis=1)
        over = idx >= k
        if over.any():
            # u*total rounded up to total: take the last available number
            for i in np.nonzero(over)[0]:
                idx[i] = np.nonzero(w[i] > 0.0)[0][-1]
        out[:, j] = idx + 1
        w[r, idx] = 0.0
    return out
