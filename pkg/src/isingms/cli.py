"""Command-line interface: ``isingms {recover,bench,windows,corr,table}``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .bench import METHODS, BenchConfig, run_synthetic_benchmark, summarize
from .classifier import decision_table
from .evidence import SaddlePointError
from .pipeline import PriorMode, RecoveryConfig, run_recovery
from .synth import TOPOLOGIES, TopologySpec
from .windows import rolling_windows, windowed_correlations

JOBS_ENV = "ISINGMS_JOBS"
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("isingms")


def default_jobs() -> int:
    value = os.environ.get(JOBS_ENV, "1")
    try:
        jobs = int(value)
    except ValueError:
        raise io.InputError(f"{JOBS_ENV}={value!r} is not an integer") from None
    if jobs < 1:
        raise io.InputError(f"{JOBS_ENV} must be >= 1")
    return jobs


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _prior(text: str) -> PriorMode:
    try:
        return PriorMode.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isingms", description="Sparse Ising graph recovery by pairwise model selection.")
    sub = p.add_subparsers(dest="command", required=True)
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    def common(sp, recovery=True):
        sp.add_argument("--input", required=True, help="CSV of samples, one row per observation")
        sp.add_argument("--encoding", choices=("pm1", "01"), default="pm1")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--jobs", type=_positive, default=None, help=f"worker count (default ${JOBS_ENV} or 1)")
        sp.add_argument("--seed", type=int, default=None)
        if recovery:
            sp.add_argument("--prior", type=_prior, default=PriorMode(), help="flat | fixed=E | selfcon=E0 | ndep=RG")
            sp.add_argument("--correct", choices=("none", "avg", "min", "prod"), default="none")

    rec = sub.add_parser("recover", parents=[shared], help="recover the interaction graph of a sample matrix")
    common(rec)

    win = sub.add_parser("windows", parents=[shared], help="recovery on rolling windows")
    common(win)
    win.add_argument("--window", type=_positive, required=True)
    win.add_argument("--stride", type=_positive, default=None, help="default: the window length")

    corr = sub.add_parser("corr", parents=[shared], help="windowed delayed and connected correlations")
    common(corr, recovery=False)
    corr.add_argument("--window", type=_positive, required=True)
    corr.add_argument("--stride", type=_positive, default=1)
    corr.add_argument("--tau", type=_int_list, default=[0, 1])

    bench = sub.add_parser("bench", parents=[shared], help="synthetic benchmark")
    bench.add_argument("--topology", choices=[t for t in TOPOLOGIES if t != "custom"], required=True)
    bench.add_argument("--nodes", type=_positive, required=True)
    bench.add_argument("--degree", type=float, default=3.0)
    bench.add_argument("--dilution", type=float, default=0.3)
    bench.add_argument("--beta", type=float, required=True)
    bench.add_argument("--couplings", choices=("bimodal", "ferromagnetic"), default="bimodal")
    bench.add_argument("--samples", type=_int_list, required=True, help="comma-separated sample sizes")
    bench.add_argument("--seeds", type=_positive, default=5, help="number of realisations")
    bench.add_argument("--seed", type=int, default=0, help="first seed")
    bench.add_argument("--methods", default="ms_selfcon,plm", help=f"comma-separated subset of {','.join(METHODS)}")
    bench.add_argument("--visible", type=_positive, default=None, help="number of observed nodes")
    bench.add_argument("--rg", type=float, default=0.01, help="r_g for the ms_ndep method")
    bench.add_argument("--roc-points", type=int, default=0)
    bench.add_argument("--burn-in", type=int, default=1000)
    bench.add_argument("--thin", type=_positive, default=10)
    bench.add_argument("--out", required=True)
    bench.add_argument("--jobs", type=_positive, default=None)

    table = sub.add_parser("table", parents=[shared], help="export the decision table for one sample size")
    table.add_argument("--samples", type=_positive, required=True)
    table.add_argument("--out", required=True, help="output CSV path")
    return p


def _jobs(args) -> int:
    return args.jobs if args.jobs is not None else default_jobs()


def cmd_recover(args) -> None:
    data = io.read_samples(args.input, args.encoding)
    config = RecoveryConfig(args.prior, args.correct, seed=args.seed)
    graph, meta = run_recovery(data, config, jobs=_jobs(args))
    meta["input"] = str(args.input)
    if "epsilon_trace" in meta:
        log.info("epsilon trace: %s", meta["epsilon_trace"])
    io.write_graph(args.out, graph, meta)


def cmd_windows(args) -> None:
    data = io.read_samples(args.input, args.encoding)
    stride = args.stride or args.window
    config = RecoveryConfig(args.prior, args.correct, args.window, stride, args.seed)
    res = rolling_windows(data, args.window, stride, config, jobs=_jobs(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{"start": int(t), "epsilon": g.epsilon_used, "n_bonds": g.n_bonds, "ratio": r}
            for t, g, r in zip(res.starts, res.graphs, res.ratios)]
    io.write_rows(out / "sparsity.csv", rows, ["start", "epsilon", "n_bonds", "ratio"])
    io.write_matrix(out / "mean_eta.csv", np.nan_to_num(res.mean_eta, nan=0.0))
    io.write_json(out / "meta.json", {"prior": str(args.prior), "correction": args.correct, "window": args.window,
                                      "stride": stride, "n_windows": len(res.starts), "seed": args.seed,
                                      "input": str(args.input)})


def cmd_corr(args) -> None:
    data = io.read_samples(args.input, args.encoding)
    stats = windowed_correlations(data, args.window, args.tau, args.stride)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{"start": int(t), "tau": int(tau), "c_diag": stats.c_diag[a, b], "c_off": stats.c_off[a, b]}
            for a, t in enumerate(stats.starts) for b, tau in enumerate(stats.taus)]
    io.write_rows(out / "delayed_rms.csv", rows, ["start", "tau", "c_diag", "c_off"])
    io.write_rows(out / "connected_rms.csv",
                  [{"start": int(t), "c_off": v} for t, v in zip(stats.starts, stats.c_conn_off)], ["start", "c_off"])
    io.write_matrix(out / "mean_connected.csv", stats.mean_connected)


def cmd_bench(args) -> None:
    try:
        spec = TopologySpec(args.topology, args.nodes, args.degree, args.dilution)
        config = BenchConfig(spec, args.beta, args.couplings, tuple(args.samples),
                             tuple(m.strip() for m in args.methods.split(",") if m.strip()),
                             args.visible, args.burn_in, args.thin, args.rg, roc_points=args.roc_points)
    except ValueError as exc:
        raise io.InputError(str(exc)) from None
    seeds = range(args.seed, args.seed + args.seeds)
    rows, roc = run_synthetic_benchmark(config, seeds, jobs=_jobs(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_rows(out / "metrics.csv", rows)
    io.write_rows(out / "summary.csv", summarize(rows))
    if roc:
        io.write_roc(out / "roc.csv", roc)


def cmd_table(args) -> None:
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    io.write_decision_table(path, decision_table(args.samples))


COMMANDS = {"recover": cmd_recover, "windows": cmd_windows, "corr": cmd_corr, "bench": cmd_bench, "table": cmd_table}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except SaddlePointError as exc:
        print(f"isingms: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (io.InputError, ValueError) as exc:
        print(f"isingms: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
