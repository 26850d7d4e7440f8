"""Replicator dynamics of the bid distribution.

The payoff of number ``k`` is its potential-winning probability ``c_k``
evaluated at frequencies ``f = lam * p``; neither the item value nor the
fee enters, since a uniform payoff shift leaves the replicator flow
unchanged.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .equilibrium import Strategy, solve_infinite_v
from .errors import DomainError

STATE_MARGIN = 25
DEFAULT_DT = 0.01
NEGATIVE_TOL = 1e-12
FAIL_BELOW = -1e-6


@dataclass(frozen=True)
class ReplicatorState:
    p: np.ndarray
    t: float
    lam: float

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise DomainError("p must be a non-empty vector")
        if not self.lam > 0:
            raise DomainError("lambda must be positive")
        if self.t < 0:
            raise DomainError("time must be non-negative")
        if np.any(p < -NEGATIVE_TOL) or abs(p.sum() - 1.0) > 1e-9:
            raise DomainError("p must be a probability vector")
        object.__setattr__(self, "p", p)


@dataclass
class Trajectory:
    """Samples ``(t, distance, p)`` of one integration.

    ``terminal_reason`` is ``"converged"``, ``"max_time"`` or
    ``"step_failure"``. ``payoff_drop`` is the largest one-step decrease of
    the mean payoff ``sum_k p_k c_k`` seen along the way.
    """

    times: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    states: list = field(default_factory=list)
    terminal_reason: str = "max_time"
    clamps: int = 0
    payoff_drop: float = 0.0
    min_entry: float = 0.0
    lam: float = 0.0
    dt: float = DEFAULT_DT

    @property
    def final_distance(self) -> float:
        return self.distances[-1]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def time_to(self, threshold: float) -> float | None:
        """First sampled time with distance below ``threshold``."""
        for t, d in zip(self.times, self.distances):
            if d < threshold:
                return t
        return None

    def to_text(self, with_states: bool = False) -> str:
        buf = io.StringIO()
        buf.write(f"# lambda={float(self.lam)!r} dt={float(self.dt)!r} terminal={self.terminal_reason} "
                  f"clamps={self.clamps} payoff_drop={self.payoff_drop:.3e}\n")
        buf.write("t,distance" + (",p" if with_states else "") + "\n")
        for t, d, p in zip(self.times, self.distances, self.states):
            row = f"{float(t)!r},{float(d)!r}"
            if with_states:
                row += "," + " ".join(f"{x:.10g}" for x in p)
            buf.write(row + "\n")
        return buf.getvalue()


def replicator_rhs(state: ReplicatorState) -> np.ndarray:
    """``dp_k/dt = p_k (c_k - sum_i p_i c_i)`` with ``c`` at ``f = lam p``."""
    return kernels.replicator_rhs(state.p, state.lam)


def mean_payoff(p, lam: float) -> float:
    p = np.asarray(p, dtype=np.float64)
    c, _ = kernels.potential_win(lam * p, p.size)
    return float(np.dot(p, c))


def _norm_code(norm):
    if norm in ("l2", 2):
        return 2
    if norm in ("l1", 1):
        return 1
    raise DomainError(f"unknown norm {norm!r}; use 'l1' or 'l2'")


def distance_to_nash(p, nash: Strategy | np.ndarray, norm: str = "l2") -> float:
    """Distance between ``p`` and the Nash bid distribution, zero-padding the shorter."""
    code = _norm_code(norm)
    p = np.asarray(p, dtype=np.float64)
    q = nash.probabilities() if isinstance(nash, Strategy) else np.asarray(nash, dtype=np.float64)
    n = max(p.size, q.size)
    d = np.zeros(n)
    d[: p.size] += p
    d[: q.size] -= q
    if code == 1:
        return float(np.abs(d).sum())
    return float(math.sqrt(np.dot(d, d)))


def state_dimension(nash: Strategy, margin: int = STATE_MARGIN) -> int:
    return nash.support_end + margin


def exponential_start(n: int, scale: float = 30.0) -> np.ndarray:
    """``p_k ~ exp(-k / scale)`` normalized over ``k = 1..n``."""
    if not scale > 0:
        raise DomainError("scale must be positive")
    p = np.exp(-np.arange(1, n + 1) / scale)
    return p / p.sum()


def integrate(p0, lam: float, dt: float, t_max: float, nash: Strategy, stop_distance: float,
              sample_every: int = 100, norm: str = "l2", record_states: bool = True) -> Trajectory:
    """Fixed-step RK4 integration of the replicator flow from ``p0``.

    ``p`` is renormalized after each step (negative entries clamped first).
    A sample is recorded at ``t = 0``, every ``sample_every`` steps, and at
    termination.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if not t_max > 0:
        raise DomainError(f"t_max must be positive, got {t_max}")
    if not stop_distance > 0:
        raise DomainError("stop_distance must be positive")
    state = ReplicatorState(np.asarray(p0, dtype=np.float64), 0.0, lam)
    code = _norm_code(norm)
    p = state.p.copy()
    target = nash.probabilities(p.size)
    if target.size > p.size:
        raise DomainError(f"state dimension {p.size} is smaller than the Nash support {target.size}")

    traj = Trajectory(lam=float(lam), dt=float(dt), min_entry=float(p.min()))

    def record(t, q):
        traj.times.append(t)
        traj.distances.append(distance_to_nash(q, target, norm))
        traj.states.append(q.copy() if record_states else None)

    record(0.0, p)
    if traj.distances[0] < stop_distance:
        traj.terminal_reason = "converged"
        return traj
    total_steps = int(math.ceil(t_max / dt - 1e-9))
    done = 0
    while done < total_steps:
        n = min(sample_every, total_steps - done)
        p, steps, clamps, drop, low, failed = kernels.replicator_advance(
            p, float(lam), float(dt), int(n), target, float(stop_distance), code, FAIL_BELOW)
        done += steps
        traj.clamps += int(clamps)
        traj.payoff_drop = max(traj.payoff_drop, float(drop))
        traj.min_entry = min(traj.min_entry, float(low))
        record(done * dt, np.asarray(p))
        if failed:
            traj.terminal_reason = "step_failure"
            return traj
        if steps < n or traj.distances[-1] < stop_distance:
            traj.terminal_reason = "converged"
            return traj
    traj.terminal_reason = "max_time"
    return traj


@dataclass(frozen=True)
class SweepRow:
    lam: float
    t_converge: float | None
    initial_distance: float
    terminal_reason: str

    @property
    def flagged(self) -> bool:
        return self.t_converge is None


def convergence_time_sweep(lambdas, p0_scale: float = 30.0, threshold: float = 0.01,
                           dt: float = DEFAULT_DT, t_max: float = 1e5,
                           margin: int = STATE_MARGIN, norm: str = "l2",
                           keep_trajectories: bool = False):
    """Time for the replicator flow from ``p ~ exp(-k/p0_scale)`` to reach ``threshold``.

    Returns a list of :class:`SweepRow`, plus the trajectories when
    ``keep_trajectories`` is set. Entries that never reach the threshold
    have ``t_converge = None``.
    """
    rows = []
    trajs = []
    for lam in lambdas:
        nash = solve_infinite_v(lam)
        K = state_dimension(nash, margin)
        traj = integrate(exponential_start(K, p0_scale), lam, dt, t_max, nash, threshold,
                         norm=norm, record_states=False)
        t = traj.times[-1] if traj.terminal_reason == "converged" else None
        rows.append(SweepRow(float(lam), t, traj.distances[0], traj.terminal_reason))
        trajs.append(traj)
    if keep_trajectories:
        return rows, trajs
    return rows
