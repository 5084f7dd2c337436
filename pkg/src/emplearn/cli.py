"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 relevance or identification
failure, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiment as ex
from .config import ExperimentConfig
from .errors import ConfigError, EmplearnError


def _load(args):
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig.from_mapping()
    over = {}
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        over["simulation.seed"] = args.seed
    if getattr(args, "reps", None) is not None:
        over["replication.n_reps"] = args.reps
    if getattr(args, "jobs", None) is not None:
        over["replication.jobs"] = args.jobs
    return cfg.with_overrides(**over) if over else cfg


def cmd_simulate(args):
    cfg = _load(args)
    panels = ex.simulate_samples(cfg)
    with ex.AtomicDir(args.out) as sink:
        ex.write_config(sink, cfg)
        ex.write_panels(sink, cfg, panels)


def cmd_estimate(args):
    cfg = _load(args)
    src = Path(args.input or args.out)
    panels = ex.load_panels(src, cfg.regimes)
    estimates = ex.estimate_samples(cfg, panels)
    fits = ex.fit_all(cfg, estimates)
    with ex.AtomicDir(args.out) as sink:
        ex.write_fits(sink, cfg, estimates, fits)


def cmd_analyze(args):
    cfg = _load(args)
    fit = ex.load_fit(Path(args.input or args.out), cfg)
    dec, summary = ex.analyze_fit(cfg, fit)
    with ex.AtomicDir(args.out) as sink:
        ex.write_analysis(sink, cfg, dec, summary)


def cmd_run(args):
    ex.run_experiment(_load(args), args.out)


def cmd_montecarlo(args):
    cfg = _load(args)
    summary = ex.run_replications(cfg)
    with ex.AtomicDir(args.out) as sink:
        ex.write_config(sink, cfg)
        sink.write("replication_summary.csv", ex.summary_text(cfg, summary))
    for rep, msg in summary.failures:
        print(f"replication {rep} failed: {msg}", file=sys.stderr)


def cmd_report(args):
    sys.stdout.write(ex.emit_report(Path(args.input or args.out)))


COMMANDS = {
    "simulate": (cmd_simulate, "simulate panels and write them as CSV"),
    "estimate": (cmd_estimate, "estimate profiles and fits from simulated panels"),
    "analyze": (cmd_analyze, "decomposition and IRR from a fit summary"),
    "montecarlo": (cmd_montecarlo, "replicate the pipeline and summarise the estimates"),
    "report": (cmd_report, "print the parameter / weight / IRR table of a bundle"),
    "run": (cmd_run, "simulate, estimate, fit and analyse in one go"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="emplearn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--seed", type=int, help="override simulation.seed")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--in", dest="input", help="input directory (default: --out)")
        p.add_argument("--reps", type=int, help="override replication.n_reps")
        p.add_argument("--jobs", type=int, help="override replication.jobs")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command][0](args)
    except EmplearnError as exc:
        stage = getattr(exc, "stage", args.command)
        print(f"emplearn {args.command}: {stage} failed: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
