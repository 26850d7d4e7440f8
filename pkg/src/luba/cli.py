"""Command-line interface: ``luba {solve,simulate,adapt,dynamics,analyze}``.

Every file written starts with a provenance block (command line, seed,
version). Exit codes: 0 success (including flagged non-convergence),
2 usage or domain error, 3 I/O or schema error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import secrets
import shlex
import sys

import numpy as np

from . import __version__
from ._backend import BACKEND
from .analysis import (
    bundle_histograms,
    empirical_win_chances,
    filter_by_date,
    format_dataset,
    l2_distance,
    load_dataset,
    records_from_batch,
    regime_report,
    theory_for,
    winning_number_stats,
    write_dataset,
)
from .dynamics import (
    DEFAULT_DT,
    distance_to_nash,
    exponential_start,
    integrate,
    state_dimension,
)
from .equilibrium import (
    AuctionSpec,
    Strategy,
    expected_payoffs,
    solve_finite_v,
    solve_infinite_v,
    win_profile,
)
from .errors import LubaError, SchemaError, SelectionError
from .simulator import PopulationModel, adaptive_equilibrium, simulate_batch

EXIT_DOMAIN = 2
EXIT_IO = 3


class _Provenance:
    def __init__(self, argv, seed):
        self.lines = [
            "command: " + " ".join(shlex.quote(a) for a in ["luba", *argv]),
            f"seed: {seed}",
            f"version: {__version__} ({BACKEND} kernels)",
        ]

    def header(self):
        return "".join(f"# {line}\n" for line in self.lines)

    def meta(self):
        return dict(line.split(": ", 1) for line in self.lines)


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _write_table(path, prov, columns, rows, fmt="csv", extra=None):
    with _open_out(path) as fh:
        if fmt == "json":
            doc = {"meta": prov.meta(), **(extra or {}),
                   "columns": columns, "rows": [[_jsonable(x) for x in r] for r in rows]}
            json.dump(doc, fh, indent=1)
            fh.write("\n")
            return
        fh.write(prov.header())
        for k, v in (extra or {}).items():
            fh.write(f"# {k}: {v}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(x) for x in r) + "\n")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _summary_stream(output):
    return sys.stderr if output in (None, "-") else sys.stdout


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _bins(text):
    out = []
    for part in text.split(","):
        lo, sep, hi = part.partition("-")
        try:
            out.append((float(lo), float(hi) if sep and hi else math.inf))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad bin {part!r}; use LO-HI,LO-HI") from None
    return out


# --------------------------------------------------------------------- solve

def cmd_solve(args, prov):
    lam = args.lam
    if args.v is not None:
        spec = AuctionSpec(args.v, args.fee, lam)
        strategy = solve_finite_v(spec, tol=args.tol)
    else:
        spec = AuctionSpec(math.inf, args.fee, lam)
        strategy = solve_infinite_v(lam, tail_eps=args.tail_eps)
    prof = win_profile(strategy)
    p = strategy.probabilities()
    if spec.finite:
        pay = expected_payoffs(strategy, spec)
    else:
        pay = np.full(strategy.support_end, math.nan)
    rows = [(k + 1, strategy.freqs[k], p[k], prof.w[k], prof.c[k], pay[k])
            for k in range(strategy.support_end)]
    summary = {"lambda": lam, "support_end": strategy.support_end,
               "p_no_winner": prof.p_no_winner,
               "item_value": args.v if args.v is not None else "inf"}
    _write_table(args.output, prov, ["k", "f_k", "p_k", "w_k", "c_k", "payoff_k"], rows,
                 args.format, extra=summary)
    if args.strategy_out:
        with open(args.strategy_out, "w", encoding="utf-8") as fh:
            fh.write(prov.header())
            fh.write(strategy.to_text())
    out = _summary_stream(args.output)
    print(f"lambda={lam} support_end={strategy.support_end} "
          f"p_no_winner={prof.p_no_winner:.12g}", file=out)
    return 0


# ------------------------------------------------------------------ simulate

def _load_strategy(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return Strategy.from_text(fh.read())
    except OSError as exc:
        raise SchemaError(f"cannot read strategy file {path}: {exc}") from None


def cmd_simulate(args, prov):
    if args.players is not None:
        pop = PopulationModel.multibid(args.players, args.m)
        mean = args.players * args.m
    elif args.n is not None:
        pop = PopulationModel.fixed(args.n)
        mean = args.n
    else:
        pop = PopulationModel.poisson(args.lam)
        mean = args.lam
    if args.strategy_file:
        p = _load_strategy(args.strategy_file).probabilities()
    else:
        p = solve_infinite_v(mean).probabilities()
    batch = simulate_batch(p, pop, args.auctions, args.seed)
    records = records_from_batch(batch, args.v, args.fee)
    if args.output != "none":
        if args.output in (None, "-"):
            sys.stdout.write(prov.header())
            sys.stdout.write(format_dataset(records))
        else:
            write_dataset(records, args.output, preamble=prov.lines)
    rate = batch.no_winner_rate()
    expected = 1.0 / (mean + 1.0)
    sigma = math.sqrt(expected * (1 - expected) / batch.n_auctions)
    hist = batch.winner_histogram()
    summary = {
        "auctions": batch.n_auctions,
        "mode": pop.mode,
        "no_winner_rate": rate,
        "equilibrium_no_winner": expected,
        "equilibrium_stderr": sigma,
        "winner_histogram": {int(k + 1): int(c) for k, c in enumerate(hist) if c},
    }
    out = _summary_stream(args.output)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            json.dump({"meta": prov.meta(), **summary}, fh, indent=1)
            fh.write("\n")
    print(json.dumps({k: v for k, v in summary.items() if k != "winner_histogram"}), file=out)
    return 0


# --------------------------------------------------------------------- adapt

def cmd_adapt(args, prov):
    res = adaptive_equilibrium(args.players, args.m, rounds=args.rounds, batch=args.batch,
                               learning_rate=args.lr, seed=args.seed, n_numbers=args.numbers)
    nash = solve_infinite_v(args.players * args.m)
    q = nash.probabilities(res.strategy.size)
    rows = [(k + 1, res.strategy[k], q[k]) for k in range(res.strategy.size)]
    l1 = distance_to_nash(res.strategy, nash, "l1")
    extra = {"converged": res.converged, "rounds_run": res.rounds_run,
             "l1_to_poisson_nash": l1, **{f"setting_{k}": v for k, v in res.settings.items()}}
    for i, w in enumerate(res.warnings):
        extra[f"warning_{i}"] = w
    _write_table(args.output, prov, ["k", "p_k", "nash_p_k"], rows, args.format, extra)
    if args.trace:
        trace = [(h["round"], h["chi2"], h["dof"], h["p_value"],
                  distance_to_nash(h["strategy"], nash, "l1"), h["no_winner_rate"])
                 for h in res.history]
        _write_table(args.trace, prov, ["round", "chi2", "dof", "p_value", "l1_to_nash",
                                        "no_winner_rate"], trace, args.format)
    out = _summary_stream(args.output)
    flag = "converged" if res.converged else "NOT converged (best iterate returned)"
    print(f"{flag} after {res.rounds_run} rounds; l1 distance to Poisson Nash = {l1:.4f}", file=out)
    return 0


# ------------------------------------------------------------------ dynamics

def cmd_dynamics(args, prov):
    os.makedirs(args.out_dir, exist_ok=True)
    sweep = []
    for lam in args.lambdas:
        nash = solve_infinite_v(lam)
        K = state_dimension(nash)
        p0 = nash.probabilities(K) if args.start == "nash" else exponential_start(K, args.p0_scale)
        traj = integrate(p0, lam, args.dt, args.tmax, nash, args.threshold,
                         sample_every=args.sample_every, norm=args.norm, record_states=args.states)
        path = os.path.join(args.out_dir, f"trajectory_lambda{lam:g}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(prov.header())
            fh.write(traj.to_text(with_states=args.states))
        t_conv = traj.times[-1] if traj.terminal_reason == "converged" else None
        sweep.append((lam, t_conv, traj.distances[0], traj.final_distance, traj.terminal_reason,
                      traj.clamps, traj.payoff_drop))
        if traj.terminal_reason == "step_failure":
            print(f"lambda={lam:g}: step failure at t={traj.times[-1]:g}", file=sys.stderr)
    cols = ["lambda", "t_converge", "initial_distance", "final_distance", "terminal",
            "clamps", "max_payoff_drop"]
    _write_table(os.path.join(args.out_dir, f"sweep.{args.format}"), prov, cols, sweep, args.format)
    for row in sweep:
        t = "not reached" if row[1] is None else f"{row[1]:g}"
        print(f"lambda={row[0]:g} t_converge={t} final_distance={row[3]:.3e} ({row[4]})")
    return 0


# ------------------------------------------------------------------- analyze

def cmd_analyze(args, prov):
    records = load_dataset(args.dataset)
    if args.date_range:
        start, _, end = args.date_range.partition(":")
        records = filter_by_date(records, start or None, end or None)
    if args.v_filter is not None:
        records = [r for r in records if r.item_value == args.v_filter]
    if not records:
        raise SelectionError("no auctions left after the date/item-value filters")
    os.makedirs(args.out_dir, exist_ok=True)
    bins = args.bins or [(min(r.n for r in records), max(r.n for r in records))]
    ext = args.format

    def path(name):
        return os.path.join(args.out_dir, f"{name}.{ext}")

    fig1, fig4 = [], []
    for lo, hi in bins:
        try:
            b = bundle_histograms(records, lo, None if math.isinf(hi) else hi,
                                  normalize=args.normalize)
        except LubaError:
            continue
        theory = theory_for(b.n_label, b.v_label, args.finite_v)
        f = theory.padded(b.phi.size)
        for k in range(max(b.phi.size, theory.support_end)):
            phi = b.phi[k] if k < b.phi.size else 0.0
            fig1.append((f"{lo:g}-{hi:g}", b.n_label, b.l_auctions, b.v_label, k + 1, phi, f[k]))
        ks, c, ratio = empirical_win_chances(b)
        for k, ck, rk in zip(ks, c, ratio):
            fig4.append((f"{lo:g}-{hi:g}", b.n_label, int(k), ck, rk))
    _write_table(path("fig1_histograms"), prov,
                 ["bin", "n_label", "L", "v_label", "k", "phi_k", "theory_f_k"], fig1, ext)
    _write_table(path("fig4_win_chances"), prov, ["bin", "n_label", "k", "c_hat", "ratio"], fig4, ext)

    fig2 = [(r.auction_id, r.n, l2_distance(r, finite_v=args.finite_v), 1.0 / r.n) for r in records]
    _write_table(path("fig2_distance"), prov, ["auction_id", "N", "d", "inv_N"], fig2, ext)

    stats = winning_number_stats(records, bins)
    fig3 = [(f"{s.n_lo:g}-{s.n_hi:g}", s.n_center, s.auctions, s.winners, s.no_winner, s.mean_win,
             s.std_win, s.theory_mean, s.theory_std, s.cutoff, int(s.flagged)) for s in stats]
    _write_table(path("fig3_winning_numbers"), prov,
                 ["bin", "N", "auctions", "winners", "no_winner", "mean_win", "std_win",
                  "theory_mean", "theory_std", "cutoff", "flagged"], fig3, ext)

    rep = regime_report(records)
    reg = [(e.auction_id, e.n, e.d, e.inv_n, e.exp_rate, e.exp_loglik, e.nash_loglik,
            e.bids_per_player, e.label) for e in rep["entries"]]
    _write_table(path("regime"), prov,
                 ["auction_id", "N", "d", "inv_N", "exp_rate", "exp_loglik", "nash_loglik",
                  "bids_per_player", "label"], reg, ext,
                 extra={f"threshold_{k}": v for k, v in rep["thresholds"].items()})
    dn = np.array([row[2] * row[1] for row in fig2])
    print(f"auctions={len(records)} mean d*N={dn.mean():.4f} "
          f"regimes={json.dumps(rep['counts'])}")
    return 0


# ---------------------------------------------------------------------- main

def build_parser():
    parser = argparse.ArgumentParser(prog="luba", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt=True):
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (default: drawn from OS entropy and echoed)")
        if fmt:
            p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("solve", help="equilibrium bid frequencies")
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="mean number of bids")
    p.add_argument("--v", type=int, default=None, help="item value (default: unbounded)")
    p.add_argument("--fee", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--tail-eps", type=float, default=1e-12)
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--strategy-out", default=None, help="also write a two-column strategy file")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo auctions")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--lambda", dest="lam", type=float, help="Poisson mean number of bids")
    g.add_argument("--n", type=int, help="fixed number of single bids")
    g.add_argument("--players", type=int, help="players placing --m distinct bids each")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--auctions", type=int, default=1000)
    p.add_argument("--strategy-file", default=None)
    p.add_argument("--v", type=int, default=1000, help="item value written to records")
    p.add_argument("--fee", type=float, default=0.0)
    p.add_argument("--output", "-o", default=None, help="dataset CSV ('none' to skip)")
    p.add_argument("--summary", default=None, help="write the JSON summary here")
    common(p, fmt=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("adapt", help="individual-based adaptive equilibrium")
    p.add_argument("--players", type=int, default=100)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--rounds", type=int, default=400)
    p.add_argument("--batch", type=int, default=5000)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--numbers", type=int, default=None, help="number range (default: Nash support + 25)")
    p.add_argument("--output", "-o", default=None)
    p.add_argument("--trace", default=None, help="per-round diagnostics file")
    common(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("dynamics", help="replicator dynamics convergence sweep")
    p.add_argument("--lambdas", type=_float_list, default=[100.0, 500.0, 1000.0, 2000.0])
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--tmax", type=float, default=1e5)
    p.add_argument("--p0-scale", type=float, default=30.0)
    p.add_argument("--start", choices=["exp", "nash"], default="exp")
    p.add_argument("--norm", choices=["l2", "l1"], default="l2")
    p.add_argument("--sample-every", type=int, default=100)
    p.add_argument("--states", action="store_true", help="include full p rows in trajectories")
    p.add_argument("--out-dir", default="dynamics_out")
    common(p)
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("analyze", help="figure-analog tables from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--bins", type=_bins, default=None, help="N ranges, e.g. 0-200,200-1000,1000-")
    p.add_argument("--v-filter", type=int, default=None)
    p.add_argument("--date-range", default=None, help="START:END (ISO-8601, either side optional)")
    p.add_argument("--normalize", action="store_true", help="normalize histograms before averaging")
    p.add_argument("--finite-v", action="store_true", help="use the finite item-value solver")
    p.add_argument("--out-dir", default="analysis_out")
    common(p)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = secrets.randbits(32)
    prov = _Provenance(argv, args.seed)
    try:
        return args.func(args, prov)
    except SchemaError as exc:
        print(f"luba {args.command}: schema error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"luba {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LubaError as exc:
        print(f"luba {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
