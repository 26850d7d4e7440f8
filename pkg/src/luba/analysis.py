"""Auction datasets: ingestion, averaged histograms and comparison with theory.

Dataset CSV layout (``luba-v1``)::

    # schema=luba-v1
    auction_id,item_value,fee,timestamp,player_id,number
    a1,100,0.5,2010-03-01,p7,3
    ...

One row per bid, UTF-8, LF line endings. Further ``#`` comment lines may
precede the header. Winners are always recomputed from the bids.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .behavioral import fit_exponential_rate
from .equilibrium import AuctionSpec, Strategy, cutoff_asymptotic, solve_finite_v, solve_infinite_v, win_profile
from .errors import DomainError, EmptyDatasetError, SchemaError, SelectionError

SCHEMA_LINE = "# schema=luba-v1"
HEADER = ["auction_id", "item_value", "fee", "timestamp", "player_id", "number"]
NASH_FLOOR = 1e-9
REGIME_MARGIN = 2.0


@dataclass
class AuctionRecord:
    auction_id: str
    item_value: int
    fee: float
    timestamp: str
    bids: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.bids)

    @property
    def numbers(self) -> np.ndarray:
        return np.fromiter((b[1] for b in self.bids), dtype=np.int64, count=len(self.bids))

    def counts(self, length: int | None = None) -> np.ndarray:
        nums = self.numbers
        size = int(nums.max()) if nums.size else 0
        return np.bincount(nums - 1, minlength=max(size, length or 0)) if nums.size else np.zeros(length or 0, np.int64)

    @property
    def winner(self) -> int | None:
        c = self.counts()
        w = int(kernels.lowest_unique(c[None, :])[0])
        return w or None

    def date(self) -> dt.datetime | None:
        return _parse_time(self.timestamp) if self.timestamp else None


@dataclass(frozen=True)
class HistogramBundle:
    """Bid counts per number averaged over ``l_auctions`` auctions."""

    n_label: float
    l_auctions: int
    phi: np.ndarray
    v_label: int | None
    normalized: bool = False


def _parse_time(text):
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    return dt.datetime.fromisoformat(t)


def parse_dataset(text: str) -> list[AuctionRecord]:
    """Parse dataset CSV text; see the module docstring for the layout."""
    lines = text.split("\n")
    if not text.strip():
        raise EmptyDatasetError("dataset is empty")
    schema_seen = False
    i = 0
    while i < len(lines) and (lines[i].startswith("#") or not lines[i].strip()):
        if lines[i].strip().replace(" ", "") == SCHEMA_LINE.replace(" ", ""):
            schema_seen = True
        elif lines[i].startswith("# schema="):
            raise SchemaError(f"unsupported schema {lines[i][2:].strip()!r}", i + 1)
        i += 1
    if i >= len(lines):
        raise EmptyDatasetError("dataset has no header")
    if not schema_seen:
        raise SchemaError(f"missing '{SCHEMA_LINE}' line before the header", i + 1)
    header_line = i + 1
    reader = csv.reader(lines[i:])
    header = next(reader)
    if [h.strip() for h in header] != HEADER:
        raise SchemaError(f"header must be {','.join(HEADER)}", header_line)

    records: dict[str, AuctionRecord] = {}
    for offset, row in enumerate(reader, start=1):
        lineno = header_line + offset
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(HEADER):
            raise SchemaError(f"expected {len(HEADER)} fields, got {len(row)}", lineno)
        aid, v, fee, ts, pid, num = (x.strip() for x in row)
        if not aid:
            raise SchemaError("empty auction_id", lineno)
        try:
            v_i = int(v)
        except ValueError:
            raise SchemaError(f"item_value must be an integer, got {v!r}", lineno) from None
        if v_i < 1:
            raise SchemaError("item_value must be positive", lineno)
        try:
            fee_f = float(fee)
        except ValueError:
            raise SchemaError(f"fee must be a decimal, got {fee!r}", lineno) from None
        if not fee_f >= 0 or math.isinf(fee_f):
            raise SchemaError("fee must be non-negative", lineno)
        if ts:
            try:
                _parse_time(ts)
            except ValueError:
                raise SchemaError(f"timestamp {ts!r} is not ISO-8601", lineno) from None
        try:
            n_i = int(num)
        except ValueError:
            raise SchemaError(f"number must be an integer, got {num!r}", lineno) from None
        if n_i < 1:
            raise SchemaError(f"bid number {n_i} violates numbers >= 1", lineno)
        rec = records.get(aid)
        if rec is None:
            rec = records[aid] = AuctionRecord(aid, v_i, fee_f, ts)
        elif (rec.item_value, rec.fee, rec.timestamp) != (v_i, fee_f, ts):
            raise SchemaError(f"auction {aid!r} has inconsistent item_value/fee/timestamp", lineno)
        rec.bids.append((pid, n_i))
    if not records:
        raise EmptyDatasetError("dataset has no bids")
    return list(records.values())


def load_dataset(path) -> list[AuctionRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_dataset(fh.read())


def format_dataset(records, preamble: list[str] | None = None) -> str:
    buf = io.StringIO()
    for line in preamble or []:
        buf.write(f"# {line}\n")
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for rec in records:
        for pid, num in rec.bids:
            w.writerow([rec.auction_id, rec.item_value, repr(float(rec.fee)), rec.timestamp, pid, num])
    return buf.getvalue()


def write_dataset(records, path, preamble: list[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_dataset(records, preamble))


def records_from_batch(batch, item_value: int, fee: float = 0.0, prefix: str = "sim",
                       timestamp: str = "") -> list[AuctionRecord]:
    """Convert a simulator :class:`~luba.simulator.BatchResult` into records."""
    out = []
    width = len(str(batch.n_auctions))
    for i in range(batch.n_auctions):
        a, b = batch.offsets[i], batch.offsets[i + 1]
        bids = [(f"p{int(pl)}", int(num)) for pl, num in zip(batch.bidder[a:b], batch.bids[a:b])]
        out.append(AuctionRecord(f"{prefix}{i:0{width}d}", int(item_value), float(fee), timestamp, bids))
    return out


def filter_by_date(records, start: str | None = None, end: str | None = None):
    """Keep auctions with ``start <= timestamp <= end``; undated auctions are dropped."""
    lo = _parse_time(start) if start else None
    hi = _parse_time(end) if end else None
    out = []
    for r in records:
        d = r.date()
        if d is None:
            continue
        if lo is not None and _naive(d) < _naive(lo):
            continue
        if hi is not None and _naive(d) > _naive(hi):
            continue
        out.append(r)
    return out


def _naive(d):
    return d.replace(tzinfo=None) if d.tzinfo is None else d.astimezone(dt.timezone.utc).replace(tzinfo=None)


def bundle_histograms(records, n_min: int = 0, n_max: int | None = None,
                      v_filter: int | None = None, normalize: bool = False) -> HistogramBundle:
    """Average the per-number bid counts of auctions with ``n_min <= N <= n_max``.

    With ``normalize`` each histogram is scaled to unit mass before
    averaging and then rescaled by the mean ``N``.
    """
    sel = [r for r in records
           if r.n >= n_min and (n_max is None or r.n <= n_max)
           and (v_filter is None or r.item_value == v_filter)]
    if not sel:
        raise SelectionError(f"no auctions with {n_min} <= N <= {n_max} and item value {v_filter}")
    K = max(int(r.numbers.max()) for r in sel)
    stack = np.array([r.counts(K) for r in sel], dtype=np.float64)
    mean_n = float(np.mean([r.n for r in sel]))
    if normalize:
        phi = (stack / stack.sum(axis=1, keepdims=True)).mean(axis=0) * mean_n
    else:
        phi = stack.mean(axis=0)
    v_label = v_filter if v_filter is not None else Counter(r.item_value for r in sel).most_common(1)[0][0]
    return HistogramBundle(mean_n, len(sel), phi, v_label, normalize)


def theory_for(n: float, item_value: float | None = None, finite_v: bool = False) -> Strategy:
    """Equilibrium used for comparison with an auction of ``n`` bids (``lam = n``)."""
    if finite_v and item_value is not None and not math.isinf(item_value):
        return solve_finite_v(AuctionSpec(int(item_value), 0.0, float(n)))
    return solve_infinite_v(float(n))


def _observed(obj):
    if isinstance(obj, AuctionRecord):
        return obj.counts().astype(np.float64), float(obj.n), obj.item_value
    if isinstance(obj, HistogramBundle):
        return np.asarray(obj.phi, dtype=np.float64), float(obj.n_label), obj.v_label
    c = np.asarray(obj, dtype=np.float64)
    return c, float(c.sum()), None


def l2_distance(obj, theory: Strategy | None = None, finite_v: bool = False) -> float:
    """``N**-2 * sum_k (f_k - phi_k)**2`` over the union of supports.

    ``obj`` is an :class:`AuctionRecord`, a :class:`HistogramBundle` or a raw
    count vector. ``theory`` defaults to the equilibrium at ``lam = N``.
    """
    phi, n, v = _observed(obj)
    if n <= 0:
        raise DomainError("cannot compare an empty auction")
    if theory is None:
        theory = theory_for(n, v, finite_v)
    f = theory.freqs
    size = max(phi.size, f.size)
    diff = np.zeros(size)
    diff[: phi.size] += phi
    diff[: f.size] -= f
    return float(np.dot(diff, diff) / (n * n))


@dataclass(frozen=True)
class WinStatsRow:
    n_lo: float
    n_hi: float
    n_center: float
    auctions: int
    winners: int
    no_winner: int
    mean_win: float
    std_win: float
    theory_mean: float
    theory_std: float
    cutoff: float
    flagged: bool


def winner_distribution(lam: float) -> np.ndarray:
    """Distribution of the winning number given that there is a winner."""
    w = win_profile(solve_infinite_v(lam)).w
    return w / w.sum()


def winning_number_stats(records, bins) -> list[WinStatsRow]:
    """Mean and spread of winning numbers per auction-size bin, with theory.

    Each bin is ``(lo, hi)`` inclusive on ``N``. Theory columns use the
    equilibrium winner distribution at ``lam`` equal to the bin's mean ``N``.
    """
    rows = []
    for lo, hi in bins:
        sel = [r for r in records if lo <= r.n <= hi]
        if not sel:
            rows.append(WinStatsRow(lo, hi, math.nan, 0, 0, 0, math.nan, math.nan,
                                    math.nan, math.nan, math.nan, True))
            continue
        center = float(np.mean([r.n for r in sel]))
        winners = np.array([w for w in (r.winner for r in sel) if w is not None], dtype=np.float64)
        q = winner_distribution(center)
        k = np.arange(1, q.size + 1)
        t_mean = float(np.dot(k, q))
        t_std = float(math.sqrt(np.dot((k - t_mean) ** 2, q)))
        cutoff = cutoff_asymptotic(center) if center > math.e else math.nan
        if winners.size:
            mean, std = float(winners.mean()), float(winners.std())
        else:
            mean = std = math.nan
        rows.append(WinStatsRow(lo, hi, center, len(sel), int(winners.size),
                                len(sel) - int(winners.size), mean, std, t_mean, t_std,
                                cutoff, winners.size == 0))
    return rows


def empirical_win_chances(bundle: HistogramBundle, extend: int = 10):
    """Win chance of one extra bid on each number, against the bundle's bids.

    Returns ``(k, c_hat, ratio)`` arrays where ``ratio = c_hat * (N + 1)``
    compares with the equilibrium value ``1 / (N + 1)``.
    """
    phi = np.asarray(bundle.phi, dtype=np.float64)
    mass = phi.sum()
    if mass <= 0:
        raise DomainError("bundle has no bids")
    n = float(bundle.n_label)
    f_hat = n * phi / mass
    length = phi.size + max(extend, 0)
    c, _ = kernels.potential_win(f_hat, length)
    return np.arange(1, length + 1), c, c * (n + 1.0)


@dataclass(frozen=True)
class RegimeEntry:
    auction_id: str
    n: int
    d: float
    inv_n: float
    exp_rate: float
    exp_loglik: float
    nash_loglik: float
    bids_per_player: float
    label: str


def nash_log_likelihood(counts, strategy: Strategy, floor: float = NASH_FLOOR) -> float:
    """Multinomial log-likelihood of ``counts`` under the strategy, with a floor."""
    counts = np.asarray(counts, dtype=np.float64)
    p = np.maximum(strategy.probabilities(counts.size), floor)
    p = p / p.sum()
    mask = counts > 0
    return float(np.dot(counts[mask], np.log(p[: counts.size][mask])))


def classify_auction(record: AuctionRecord, margin: float = REGIME_MARGIN) -> RegimeEntry:
    """Label one auction by comparing the Nash and fitted-geometric likelihoods.

    The geometric law is fitted over numbers ``1..max(N, largest bid)`` and
    charged ``0.5 * ln N`` for its free rate (BIC).
    ``Nash-like`` if the Nash log-likelihood wins by more than ``margin``,
    ``exponential-like`` if it loses by more than ``margin``, otherwise
    ``indeterminate``.
    """
    counts = record.counts().astype(np.float64)
    n = record.n
    players = len({b[0] for b in record.bids})
    per_player = n / players if players else math.nan
    if n == 0:
        return RegimeEntry(record.auction_id, 0, math.nan, math.nan, math.nan, math.nan,
                           math.nan, per_player, "indeterminate")
    nash = solve_infinite_v(float(n))
    d = l2_distance(counts, nash)
    ll_nash = nash_log_likelihood(counts, nash)
    try:
        padded = np.zeros(max(counts.size, n, 2))
        padded[: counts.size] = counts
        fit = fit_exponential_rate(padded)
        rate, ll_exp = fit.rate, fit.log_likelihood - 0.5 * math.log(n)
    except DomainError:
        rate, ll_exp = math.nan, math.nan
    if not (math.isfinite(ll_nash) and math.isfinite(ll_exp)):
        label = "indeterminate"
    elif ll_nash - ll_exp > margin:
        label = "Nash-like"
    elif ll_exp - ll_nash > margin:
        label = "exponential-like"
    else:
        label = "indeterminate"
    return RegimeEntry(record.auction_id, n, d, 1.0 / n, rate, ll_exp, ll_nash, per_player, label)


def regime_report(records, margin: float = REGIME_MARGIN) -> dict:
    """Per-auction classification plus totals; thresholds are echoed in the result."""
    if not records:
        raise EmptyDatasetError("no auctions to classify")
    entries = [classify_auction(r, margin) for r in records]
    tally = Counter(e.label for e in entries)
    return {
        "entries": entries,
        "counts": {k: tally.get(k, 0) for k in ("Nash-like", "exponential-like", "indeterminate")},
        "thresholds": {"loglik_margin": margin, "nash_floor": NASH_FLOOR, "exp_penalty": "0.5*ln(N)"},
    }
