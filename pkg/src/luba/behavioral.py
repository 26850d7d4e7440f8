"""Bounded-rationality bid distributions: logit choice and geometric fits.

The logit rule is implemented with the sign as usually printed,
``p_k ~ exp(-beta * E_k)``, which favours *low* ``E_k``. Callers who want
"higher payoff is preferred" pass ``-payoff`` (see :func:`exponential_strategy`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError

RATE_CAP = 50.0


@dataclass(frozen=True)
class LogitModel:
    beta: float
    payoffs: np.ndarray

    def __post_init__(self):
        E = np.atleast_1d(np.asarray(self.payoffs, dtype=np.float64))
        if E.ndim != 1 or E.size < 1:
            raise DomainError("need at least one payoff")
        if not self.beta >= 0:
            raise DomainError(f"beta must be non-negative, got {self.beta}")
        if not np.any(np.isfinite(E)):
            raise DomainError("all payoffs are infinite")
        if not np.all(np.isfinite(E)):
            raise DomainError("payoffs must be finite")
        object.__setattr__(self, "payoffs", E)


def logit_strategy(model: LogitModel) -> np.ndarray:
    """Choice probabilities ``exp(-beta E_k) / sum_j exp(-beta E_j)``."""
    E = model.payoffs
    if math.isinf(model.beta):
        best = E == E.min()
        return best / best.sum()
    z = -model.beta * E
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def uniform_prior_payoffs(v: float, fee: float, win_prior: float, k_range: int) -> np.ndarray:
    """Expected payoff ``(v - k) * win_prior - fee`` under a flat win prior."""
    if k_range < 1:
        raise DomainError("k_range must be >= 1")
    if not v > k_range:
        raise DomainError(f"item value {v} must exceed k_range={k_range}")
    if not fee >= 0:
        raise DomainError("fee must be non-negative")
    if not 0 <= win_prior < 1:
        raise DomainError("win_prior must lie in [0, 1)")
    k = np.arange(1, k_range + 1, dtype=np.float64)
    return (v - k) * win_prior - fee


def exponential_strategy(beta: float, v: float, fee: float, win_prior: float,
                         k_range: int) -> np.ndarray:
    """Logit play on uniform-prior payoffs, preferring the higher payoff.

    Successive ratios are ``exp(-beta * win_prior)``: a geometric law.
    """
    E = uniform_prior_payoffs(v, fee, win_prior, k_range)
    return logit_strategy(LogitModel(beta, -E))


@dataclass(frozen=True)
class ExponentialFit:
    """Geometric fit ``p_k ~ exp(-rate * k)`` on bins ``1..n_bins``.

    ``flagged`` marks a boundary solution (flat or increasing histogram gives
    ``rate = 0``; all mass in bin 1 gives ``rate = RATE_CAP``).
    """

    rate: float
    log_likelihood: float
    n_bins: int
    flagged: bool = False

    def probabilities(self, length: int | None = None) -> np.ndarray:
        return _geometric(self.rate, self.n_bins if length is None else length)


def _geometric(rate, n):
    k = np.arange(n, dtype=np.float64)
    w = np.exp(-rate * k)
    return w / w.sum()


def _geom_mean(rate, n):
    return float(np.dot(np.arange(1, n + 1), _geometric(rate, n)))


def geometric_log_likelihood(counts, rate: float) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    p = _geometric(rate, counts.size)
    mask = counts > 0
    with np.errstate(divide="ignore"):
        return float(np.dot(counts[mask], np.log(p[mask])))


def fit_exponential_rate(histogram) -> ExponentialFit:
    """Maximum-likelihood geometric rate for counts over bins ``1..K``.

    The law is truncated to the histogram's bins, so trailing empty bins
    matter: pad the histogram to the range of numbers a player could bid.

    The truncated-geometric MLE matches the model mean to the sample mean,
    which is monotone in the rate and solved by Brent's method.
    """
    counts = np.asarray(histogram, dtype=np.float64)
    if counts.ndim != 1 or counts.size < 2:
        raise DomainError("need a histogram with at least two bins")
    if np.any(counts < 0):
        raise DomainError("counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise DomainError("histogram is empty")
    n = counts.size
    mean = float(np.dot(np.arange(1, n + 1), counts) / total)

    flat_mean = (n + 1) / 2.0
    if mean >= flat_mean - 1e-12:
        rate, flagged = 0.0, mean > flat_mean + 1e-12
    elif mean <= _geom_mean(RATE_CAP, n):
        rate, flagged = RATE_CAP, True
    else:
        rate = brentq(lambda r: _geom_mean(r, n) - mean, 0.0, RATE_CAP, xtol=1e-14)
        flagged = False
    return ExponentialFit(rate=float(rate), log_likelihood=geometric_log_likelihood(counts, rate),
                          n_bins=n, flagged=flagged)
