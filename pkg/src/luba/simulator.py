"""Monte Carlo simulation of lowest unique bid auctions.

Randomness comes from Philox streams keyed by ``(seed, chunk)``: auctions
are generated in fixed-size chunks, each from its own substream, so results
do not depend on how chunks are scheduled across threads.
"""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._backend import kernels
from .equilibrium import solve_infinite_v
from .errors import DomainError

CHUNK = 8192
P_MIN = 1e-6
ENUMERATION_BUDGET = 2**24
NUMBER_MARGIN = 25


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("LUBA_THREADS", "1")))
    except ValueError:
        return 1


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk)])))


def _as_strategy(strategy) -> np.ndarray:
    p = np.asarray(strategy, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise DomainError("strategy must be a non-empty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise DomainError("strategy entries must be finite and non-negative")
    s = p.sum()
    if s <= 0:
        raise DomainError("strategy has no mass")
    return p / s


@dataclass(frozen=True)
class PopulationModel:
    """How many bids an auction receives.

    ``fixed_n``: exactly ``n_or_lambda`` single bids. ``poisson``: a
    Poisson(``n_or_lambda``) number of single bids. ``multibid``: ``players``
    agents placing ``bids_per_player`` distinct bids each.
    """

    mode: str
    n_or_lambda: float
    players: int = 0
    bids_per_player: int = 1

    def __post_init__(self):
        if self.mode not in ("fixed_n", "poisson", "multibid"):
            raise DomainError(f"unknown population mode {self.mode!r}")
        if self.mode == "fixed_n" and (self.n_or_lambda != int(self.n_or_lambda) or self.n_or_lambda < 0):
            raise DomainError("fixed_n mode needs a non-negative integer N")
        if self.mode == "poisson" and not self.n_or_lambda > 0:
            raise DomainError("poisson mode needs a positive mean")
        if self.mode == "multibid":
            if self.players < 1 or self.bids_per_player < 1:
                raise DomainError("multibid mode needs players >= 1 and bids_per_player >= 1")
            if self.n_or_lambda != self.players * self.bids_per_player:
                raise DomainError("multibid total bids must equal players * bids_per_player")

    @classmethod
    def fixed(cls, n: int) -> "PopulationModel":
        return cls("fixed_n", n)

    @classmethod
    def poisson(cls, lam: float) -> "PopulationModel":
        return cls("poisson", lam)

    @classmethod
    def multibid(cls, players: int, m: int) -> "PopulationModel":
        return cls("multibid", players * m, players, m)


@dataclass(frozen=True)
class AuctionOutcome:
    counts: np.ndarray
    winner: int | None
    realized_n: int


@dataclass
class BatchResult:
    """Outcomes of many auctions.

    ``bids`` is the flat list of bid numbers, auction ``i`` owning
    ``bids[offsets[i]:offsets[i+1]]``; ``bidder`` gives the player index
    of each bid within its auction. ``winners`` uses 0 for "no winner".
    """

    counts: np.ndarray
    winners: np.ndarray
    bids: np.ndarray
    bidder: np.ndarray
    offsets: np.ndarray = field(repr=False)

    @property
    def n_auctions(self) -> int:
        return int(self.winners.shape[0])

    @property
    def realized_n(self) -> np.ndarray:
        return np.diff(self.offsets)

    def outcome(self, i: int) -> AuctionOutcome:
        w = int(self.winners[i])
        return AuctionOutcome(self.counts[i].copy(), w or None, int(self.realized_n[i]))

    def no_winner_rate(self) -> float:
        return float(np.mean(self.winners == 0))

    def winner_histogram(self) -> np.ndarray:
        return np.bincount(self.winners, minlength=self.counts.shape[1] + 1)[1:]


def _draw_single(p, total_bids, rng):
    cum = np.cumsum(p)
    u = rng.random(total_bids)
    # same selection rule as kernels.sample_distinct with one draw
    idx = np.searchsorted(cum, u * cum[-1], side="right")
    np.minimum(idx, p.size - 1, out=idx)
    return idx + 1


def _simulate_chunk(p, pop, n, seed, chunk):
    rng = chunk_rng(seed, chunk)
    K = p.size
    if pop.mode == "multibid":
        P, m = pop.players, pop.bids_per_player
        u = rng.random((n * P, m))
        bids = kernels.sample_distinct(p, u).reshape(n, P * m).ravel()
        sizes = np.full(n, P * m, dtype=np.int64)
        bidder = np.tile(np.repeat(np.arange(P), m), n)
    else:
        if pop.mode == "poisson":
            sizes = rng.poisson(pop.n_or_lambda, size=n).astype(np.int64)
        else:
            sizes = np.full(n, int(pop.n_or_lambda), dtype=np.int64)
        bids = _draw_single(p, int(sizes.sum()), rng)
        bidder = np.arange(bids.size) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    owner = np.repeat(np.arange(n), sizes)
    counts = np.bincount(owner * K + (bids - 1), minlength=n * K).reshape(n, K)
    winners = kernels.lowest_unique(counts)
    return counts, winners, bids.astype(np.int64), bidder.astype(np.int64), sizes


def simulate_batch(strategy, pop: PopulationModel, n_auctions: int, seed: int,
                   threads: int | None = None) -> BatchResult:
    """Simulate ``n_auctions`` independent auctions under a shared strategy."""
    p = _as_strategy(strategy)
    if n_auctions < 1:
        raise DomainError("n_auctions must be >= 1")
    if pop.mode == "multibid" and pop.bids_per_player > np.count_nonzero(p):
        raise DomainError(
            f"{pop.bids_per_player} distinct bids per player but the strategy "
            f"supports only {np.count_nonzero(p)} numbers")
    jobs = []
    start = 0
    chunk = 0
    while start < n_auctions:
        n = min(CHUNK, n_auctions - start)
        jobs.append((n, chunk))
        start += n
        chunk += 1
    threads = thread_count() if threads is None else threads
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda j: _simulate_chunk(p, pop, j[0], seed, j[1]), jobs))
    else:
        parts = [_simulate_chunk(p, pop, n, seed, c) for n, c in jobs]
    counts = np.concatenate([x[0] for x in parts])
    winners = np.concatenate([x[1] for x in parts])
    bids = np.concatenate([x[2] for x in parts])
    bidder = np.concatenate([x[3] for x in parts])
    sizes = np.concatenate([x[4] for x in parts])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return BatchResult(counts, winners, bids, bidder, offsets)


def simulate_auction(strategy, pop: PopulationModel, seed: int) -> AuctionOutcome:
    """One auction: multinomial bids (fixed N) or a Poisson number of them."""
    return simulate_batch(strategy, pop, 1, seed).outcome(0)


def simulate_multibid(strategy, players: int, m: int, seed: int) -> AuctionOutcome:
    """One auction where each player places ``m`` distinct bids.

    Each player draws sequentially from the shared strategy restricted to the
    numbers they have not used yet (the law of redraw-until-distinct).
    """
    return simulate_batch(strategy, PopulationModel.multibid(players, m), 1, seed).outcome(0)


def lowest_unique_scan(counts) -> int | None:
    """Reference adjudication of a single count vector, by plain scan."""
    for k, n in enumerate(counts, start=1):
        if n == 1:
            return k
    return None


def enumerate_fixed_n(strategy, n: int) -> tuple[np.ndarray, float]:
    """Exact winner distribution for ``n`` i.i.d. bids over ``K`` numbers.

    Sums multinomial probabilities over all count vectors. Returns
    ``(w, no_winner)`` with ``w[k-1]`` the probability that ``k`` wins.
    """
    p = np.asarray(strategy, dtype=np.float64)
    K = p.size
    if n < 1 or n > 8 or K < 1 or K > 8:
        raise DomainError("enumeration supports 1 <= n <= 8 and 1 <= K <= 8")
    if K**n > ENUMERATION_BUDGET:
        raise DomainError(f"K^n = {K**n} exceeds the enumeration budget")
    p = p / p.sum()
    w = np.zeros(K)
    none = 0.0
    log_fact = [math.lgamma(i + 1) for i in range(n + 1)]
    for cut in itertools.combinations(range(n + K - 1), K - 1):
        # stars and bars: counts between consecutive bars
        edges = (-1,) + cut + (n + K - 1,)
        counts = [edges[i + 1] - edges[i] - 1 for i in range(K)]
        prob = math.exp(log_fact[n] - sum(log_fact[c] for c in counts))
        for pk, c in zip(p, counts):
            if c:
                prob *= pk**c
        winner = lowest_unique_scan(counts)
        if winner is None:
            none += prob
        else:
            w[winner - 1] += prob
    return w, none


@dataclass
class AdaptiveResult:
    """Outcome of :func:`adaptive_equilibrium`.

    ``strategy`` is the probability vector over numbers ``1..K``;
    ``history`` holds one dict per round.
    """

    strategy: np.ndarray
    converged: bool
    rounds_run: int
    history: list
    settings: dict
    warnings: list


def _win_rate_test(wins, bids, min_bids):
    """Pearson chi-square of equal per-bid win rates.

    Numbers with fewer than ``min_bids`` bids are pooled into one bin.
    Returns ``(statistic, dof, p_value)``.
    """
    total_w = wins.sum()
    total_b = bids.sum()
    if total_w == 0 or total_b == 0:
        return float("nan"), 0, 0.0
    rate = total_w / total_b
    big = bids >= min_bids
    obs = list(wins[big])
    exp = list(bids[big] * rate)
    rest_b = bids[~big].sum()
    if rest_b > 0 and rest_b * rate >= 5:
        obs.append(wins[~big].sum())
        exp.append(rest_b * rate)
    obs = np.asarray(obs, dtype=np.float64)
    exp = np.asarray(exp, dtype=np.float64)
    dof = obs.size - 1
    if dof < 1:
        return 0.0, 0, 1.0
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return stat, dof, float(stats.chi2.sf(stat, dof))


def adaptive_equilibrium(players: int, m: int, rounds: int, batch: int, learning_rate: float,
                         seed: int, n_numbers: int | None = None, p0=None, p_min: float = P_MIN,
                         prior_bids: float = 20.0, patience: int = 3, polish: int = 40,
                         alpha: float = 0.05, min_test_bids: int = 50,
                         anneal: float | None = 25.0) -> AdaptiveResult:
    """Individual-based search for the equilibrium with ``m`` distinct bids per player.

    Each round simulates ``batch`` auctions under the current shared
    strategy, estimates the win rate per bid on each number, and applies
    ``p_k <- p_k * (rate_k / mean_rate) ** step`` followed by a floor at
    ``p_min`` and renormalization. ``step`` is ``learning_rate`` damped as
    ``anneal / (anneal + round)`` (``anneal=None`` keeps it constant).
    Per-number rates are shrunk toward the mean with ``prior_bids``
    pseudo-bids so rarely used numbers do not jump on a handful of
    observations.

    The strategy lives on numbers ``1..n_numbers``; by default the support of
    the Poisson equilibrium at ``lam = players * m`` plus 25.

    Convergence is declared once a chi-square test fails to reject equal
    per-bid win rates at level ``alpha`` in ``patience`` consecutive rounds.
    The search then runs ``polish`` more rounds and returns the average of
    the strategies played from the first of those passing rounds on.
    Without convergence the strategy with the smallest chi-square statistic
    per degree of freedom is returned, flagged.
    """
    if players < 1 or m < 1 or rounds < 1 or batch < 1:
        raise DomainError("players, m, rounds and batch must be >= 1")
    if not 0.0 <= learning_rate <= 1.0:
        raise DomainError("learning_rate must lie in [0, 1]")
    total = players * m
    K = int(n_numbers) if n_numbers is not None else solve_infinite_v(total).support_end + NUMBER_MARGIN
    if m > K:
        raise DomainError(f"{m} distinct bids per player need at least {m} numbers, have {K}")
    if p0 is None:
        p = np.exp(-np.arange(1, K + 1) / 30.0)
    else:
        p = np.array(p0, dtype=np.float64)
        if p.size != K:
            raise DomainError("p0 length must equal n_numbers")
    p = p / p.sum()
    pop = PopulationModel.multibid(players, m)

    history = []
    warnings = []
    streak = []
    played = None
    best = (math.inf, p.copy())
    expected_bids = batch * total
    for r in range(rounds):
        res = simulate_batch(p, pop, batch, seed=(int(seed) * 1_000_003 + r) % 2**63)
        bids = res.counts.sum(axis=0).astype(np.float64)
        wins = np.bincount(res.winners, minlength=K + 1)[1:].astype(np.float64)
        stat, dof, pval = _win_rate_test(wins, bids, min_test_bids)
        supported = p >= 1e-4
        thin = float((p[supported] * expected_bids).min())
        if thin < 50 and not warnings:
            warnings.append(
                f"round {r}: a supported number expects only {thin:.1f} bids per batch (< 50)")
        history.append({"round": r, "chi2": stat, "dof": dof, "p_value": pval,
                        "no_winner_rate": res.no_winner_rate(), "strategy": p.copy()})
        if played is not None:
            played.append(p.copy())
            if len(played) >= patience + polish:
                break
        else:
            if dof > 0 and stat / dof < best[0]:
                best = (stat / dof, p.copy())
            if pval >= alpha:
                streak.append(p.copy())
                if len(streak) >= patience:
                    played = streak
                    if polish == 0:
                        break
            else:
                streak = []
        if learning_rate == 0.0:
            continue
        mean_rate = wins.sum() / max(bids.sum(), 1.0)
        if mean_rate <= 0:
            continue
        rate = (wins + prior_bids * mean_rate) / (bids + prior_bids)
        step = learning_rate if anneal is None else learning_rate * anneal / (anneal + r)
        p = p * (rate / mean_rate) ** step
        p = np.maximum(p / p.sum(), p_min)
        p /= p.sum()
    rounds_run = len(history)
    if played is not None:
        return AdaptiveResult(np.mean(played, axis=0), True, rounds_run, history,
                              _settings(locals()), warnings)
    return AdaptiveResult(best[1], False, rounds_run, history, _settings(locals()), warnings)


def _settings(scope):
    keys = ("players", "m", "rounds", "batch", "learning_rate", "seed", "K", "p_min",
            "prior_bids", "patience", "polish", "alpha", "min_test_bids", "anneal")
    return {k: scope[k] for k in keys}
