"""Lowest unique bid auctions: Poisson-game equilibrium, simulation and data analysis."""
from ._backend import BACKEND
from .equilibrium import (
    AuctionSpec,
    Strategy,
    WinProfile,
    cutoff_asymptotic,
    cutoff_li,
    expected_payoffs,
    fit_cutoff_constant,
    log_integral,
    solve_finite_v,
    solve_infinite_v,
    win_profile,
)
from .errors import (
    ConvergenceError,
    DomainError,
    InfeasibleError,
    LubaError,
    SchemaError,
    SelectionError,
    TruncationError,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AuctionSpec",
    "Strategy",
    "WinProfile",
    "cutoff_asymptotic",
    "cutoff_li",
    "expected_payoffs",
    "fit_cutoff_constant",
    "log_integral",
    "solve_finite_v",
    "solve_infinite_v",
    "win_profile",
    "ConvergenceError",
    "DomainError",
    "InfeasibleError",
    "LubaError",
    "SchemaError",
    "SelectionError",
    "TruncationError",
]
