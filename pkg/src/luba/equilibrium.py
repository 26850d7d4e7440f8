"""Symmetric Nash equilibrium of the Poissonized lowest unique bid auction.

With a Poisson number of bids of mean ``lam`` and a shared strategy ``p``,
the number of bids on each number ``k`` is an independent Poisson variable
of mean ``f_k = lam * p_k``. Everything below is expressed in terms of these
mean bid counts ("frequencies").
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from ._pykernels import _log_emf as log_emf
from .errors import ConvergenceError, DomainError, InfeasibleError, SchemaError, TruncationError

DEFAULT_TAIL_EPS = 1e-12
DEFAULT_K_MAX = 10**6
EULER_GAMMA = 0.57721566490153286061


@dataclass(frozen=True)
class Strategy:
    """Mean bid counts ``freqs[k-1]`` on numbers ``k = 1..support_end``."""

    lam: float
    freqs: np.ndarray = field(repr=False)

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=np.float64)
        if f.ndim != 1:
            raise DomainError("freqs must be one-dimensional")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise DomainError("freqs must be finite and non-negative")
        # drop trailing zeros so that support_end == len(freqs)
        nz = np.nonzero(f > 0)[0]
        f = f[: nz[-1] + 1] if nz.size else f[:0]
        f.setflags(write=False)
        object.__setattr__(self, "freqs", f)

    @property
    def support_end(self) -> int:
        return int(self.freqs.shape[0])

    @property
    def total(self) -> float:
        return float(self.freqs.sum())

    def probabilities(self, length: int | None = None) -> np.ndarray:
        """Bid distribution ``p_k``, normalized, zero-padded to ``length``."""
        n = self.support_end if length is None else max(length, self.support_end)
        p = np.zeros(n)
        if self.support_end:
            p[: self.support_end] = self.freqs / self.freqs.sum()
        return p

    def padded(self, length: int) -> np.ndarray:
        f = np.zeros(max(length, self.support_end))
        f[: self.support_end] = self.freqs
        return f

    @classmethod
    def from_probabilities(cls, p, lam: float) -> "Strategy":
        p = np.asarray(p, dtype=np.float64)
        s = p.sum()
        if s <= 0:
            raise DomainError("probability vector has no mass")
        return cls(lam, lam * p / s)

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# lambda={float(self.lam)!r}\n")
        for k, f in enumerate(self.freqs, start=1):
            buf.write(f"{k} {float(f)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "Strategy":
        lam = None
        rows = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("lambda="):
                    try:
                        lam = float(body[len("lambda="):])
                    except ValueError:
                        raise SchemaError("bad lambda header", lineno) from None
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise SchemaError("expected two columns: k f_k", lineno)
            try:
                k, f = int(parts[0]), float(parts[1])
            except ValueError:
                raise SchemaError("non-numeric entry", lineno) from None
            if k != len(rows) + 1:
                raise SchemaError(f"numbers must run 1,2,...; got {k}", lineno)
            if f < 0:
                raise SchemaError("negative frequency", lineno)
            rows.append(f)
        if not rows:
            raise SchemaError("strategy table is empty")
        freqs = np.array(rows)
        if lam is None:
            lam = float(freqs.sum())
        return cls(lam, freqs)


@dataclass(frozen=True)
class WinProfile:
    """Winning (``w``) and potential-winning (``c``) probabilities per number."""

    w: np.ndarray
    c: np.ndarray
    p_no_winner: float


@dataclass(frozen=True)
class AuctionSpec:
    """Item value ``item_value`` (``math.inf`` allowed), per-bid ``fee`` and mean bid count ``lam``."""

    item_value: float
    fee: float
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"lambda must be positive, got {self.lam}")
        if not self.fee >= 0:
            raise DomainError(f"fee must be non-negative, got {self.fee}")
        v = self.item_value
        if math.isinf(v):
            if v < 0:
                raise DomainError("item value must be positive")
        elif v != int(v) or v < 2:
            raise DomainError(f"finite item value must be an integer >= 2, got {v}")

    @property
    def finite(self) -> bool:
        return not math.isinf(self.item_value)


def solve_infinite_v(lam: float, tail_eps: float = DEFAULT_TAIL_EPS,
                     k_max: int = DEFAULT_K_MAX) -> Strategy:
    """Equilibrium for an item of unbounded value.

    Starts from ``f_1 = ln(1 + lam)`` and iterates
    ``f_{k+1} = ln(exp(f_k) - f_k)`` while ``f_k >= tail_eps``.

    Raises
    ------
    DomainError
        ``lam``, ``tail_eps`` or ``k_max`` out of range.
    TruncationError
        ``k_max`` entries computed before the tail fell below ``tail_eps``;
        the partial strategy is attached as ``.partial``.
    """
    if not lam > 0 or not math.isfinite(lam):
        raise DomainError(f"lambda must be positive and finite, got {lam}")
    if not tail_eps > 0:
        raise DomainError(f"tail_eps must be positive, got {tail_eps}")
    if k_max < 1:
        raise DomainError(f"k_max must be >= 1, got {k_max}")
    f, _, truncated = kernels.recurrence_infinite(float(lam), float(tail_eps), int(k_max))
    strategy = Strategy(float(lam), f)
    if truncated:
        raise TruncationError(
            f"support not closed after k_max={k_max} numbers (last f={f[-1]:.3g})", strategy)
    return strategy


def infinite_v_next(strategy: Strategy) -> float:
    """The first discarded iterate ``f_{K+1}`` of an infinite-V solution."""
    if strategy.support_end == 0:
        return math.log1p(strategy.lam)
    return log_emf(float(strategy.freqs[-1]))


def _finite_sum(f1, item_value, k_max):
    f = kernels.recurrence_finite(float(f1), float(item_value), int(k_max))
    return f, float(f.sum())


def solve_finite_v(spec: AuctionSpec, tol: float = 1e-9, max_iter: int = 400,
                   k_max: int = DEFAULT_K_MAX) -> Strategy:
    """Equilibrium for a finite item value by bisection on ``f_1``.

    The total ``sum_k f_k`` is increasing in ``f_1``; the recurrence is cut at
    the first non-positive iterate, which keeps all frequencies positive and
    the support below the item value.
    """
    if not spec.finite:
        raise DomainError("solve_finite_v needs a finite item value; use solve_infinite_v")
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    lam = spec.lam
    V = spec.item_value

    lo, hi = 0.0, math.log1p(lam)
    f_hi, s_hi = _finite_sum(hi, V, k_max)
    while s_hi < lam:
        lo = hi
        hi = 2.0 * hi + 1.0
        if hi > 700.0:
            raise InfeasibleError(
                f"no f_1 below exp-overflow reaches total {lam} with item value {V}")
        f_hi, s_hi = _finite_sum(hi, V, k_max)
    if abs(s_hi - lam) <= tol:
        return Strategy(lam, f_hi)

    # coarse scan of the bracket; the bisection assumes a single crossing
    grid = np.linspace(lo, hi, 17)
    sums = np.array([_finite_sum(x, V, k_max)[1] for x in grid])
    crossings = np.count_nonzero(np.diff(np.sign(sums - lam)))
    if np.any(np.diff(sums) < -tol) or crossings > 1:
        warnings.warn(
            f"total bid count is not monotone in f_1 on [{lo:.6g}, {hi:.6g}] "
            f"({crossings} sign changes); equilibrium may not be unique",
            RuntimeWarning, stacklevel=2)

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid, s_mid = _finite_sum(mid, V, k_max)
        if abs(s_mid - lam) <= tol:
            return Strategy(lam, f_mid)
        if s_mid < lam:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.spacing(hi):
            break
    raise ConvergenceError(
        f"bisection on f_1 stalled at [{lo!r}, {hi!r}] without |sum f - lambda| <= {tol}")


def solve(spec: AuctionSpec, tol: float = 1e-9, tail_eps: float = DEFAULT_TAIL_EPS) -> Strategy:
    """Dispatch to the finite- or infinite-value solver."""
    if spec.finite:
        return solve_finite_v(spec, tol=tol)
    return solve_infinite_v(spec.lam, tail_eps=tail_eps)


def win_profile(strategy: Strategy, length: int | None = None) -> WinProfile:
    """Winning and potential-winning probabilities for every number.

    ``length`` extends ``c`` (and the zero ``w``) past the support; the
    no-winner probability always runs over the whole support.
    """
    n = strategy.support_end if length is None else max(length, 0)
    c, no_winner = kernels.potential_win(strategy.freqs, n)
    w = strategy.padded(n)[:n] * c
    return WinProfile(w=w, c=c, p_no_winner=float(no_winner))


def expected_payoffs(strategy: Strategy, spec: AuctionSpec, length: int | None = None) -> np.ndarray:
    """Expected payoff ``(V - k) * w_k / f_k - fee`` of one bid on each number.

    Unsupported numbers use the potential-winning probability ``c_k`` (the
    chance a marginal bid there would win).
    """
    if not spec.finite:
        raise DomainError("expected payoffs need a finite item value")
    n = strategy.support_end if length is None else length
    prof = win_profile(strategy, n)
    f = strategy.padded(n)[:n]
    rate = prof.c.copy()
    pos = f > 0
    rate[pos] = prof.w[pos] / f[pos]
    k = np.arange(1, n + 1)
    return (spec.item_value - k) * rate - spec.fee


def _ei_series(x):
    # Ei(x) = gamma + ln x + sum x^n / (n n!)
    term = 1.0
    acc = 0.0
    n = 0
    while True:
        n += 1
        term *= x / n
        inc = term / n
        acc += inc
        if inc < 1e-17 * acc:
            break
    return EULER_GAMMA + math.log(x) + acc


def _ei_asymptotic(x):
    # Ei(x) ~ e^x / x * sum n! / x^n, truncated at the smallest term
    term = 1.0
    acc = 1.0
    n = 0
    while True:
        n += 1
        nxt = term * n / x
        if nxt >= term or nxt < 1e-17:
            break
        term = nxt
        acc += term
    return math.exp(x) / x * acc


def log_integral(z: float) -> float:
    """Principal-value logarithmic integral ``li(z)`` for ``z > 1``.

    Evaluated as ``Ei(ln z)``: power series up to ``ln z = 40``, asymptotic
    series beyond.
    """
    z = float(z)
    if not z > 1.0 + 1e-12:
        raise DomainError(f"log_integral needs z > 1, got {z}")
    x = math.log(z)
    if x <= 40.0:
        return _ei_series(x)
    return _ei_asymptotic(x)


def cutoff_li(lam: float, C: float = 0.0) -> float:
    """Cutoff estimate ``li(1 + lam) + C``."""
    if not lam > 0.5:
        raise DomainError(f"cutoff_li needs lambda > 0.5, got {lam}")
    return log_integral(1.0 + lam) + C


def cutoff_asymptotic(n: float) -> float:
    """Large-``n`` cutoff ``(1 + 1/ln n) n / ln n``."""
    if not n > math.e:
        raise DomainError(f"cutoff_asymptotic needs n > e, got {n}")
    L = math.log(n)
    return (1.0 + 1.0 / L) * n / L


def fit_cutoff_constant(lams, tail_eps: float = 1e-9) -> tuple[float, np.ndarray]:
    """Least-squares ``C`` in ``support_end(lam) ~ li(1 + lam) + C``.

    Returns ``(C, residuals)`` with ``residuals = support_end - li(1+lam) - C``.
    """
    lams = np.asarray(lams, dtype=np.float64)
    diffs = np.array([
        solve_infinite_v(lam, tail_eps=tail_eps).support_end - log_integral(1.0 + lam)
        for lam in lams
    ])
    C = float(diffs.mean())
    return C, diffs - C
