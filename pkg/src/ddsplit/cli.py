"""Command line front end: run experiments, audit configs, list demos."""

from __future__ import annotations

import argparse
import os
import sys

from .demos import demo_config, demo_names
from .errors import DDSplitError
from .harness import emit_csv, load_config, run_check, run_convergence_study, summary_lines


def _add_run_options(parser):
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for per-piece solves (default 1)")
    parser.add_argument("--out", default=".",
                        help="directory for the emitted CSV (default cwd)")
    parser.add_argument("--timing", action="store_true",
                        help="keep measured wall times in the CSV "
                             "(off by default so repeated runs are byte-identical)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ddsplit",
        description="Domain-decomposition splitting schemes for nonlinear "
                    "diffusion: run convergence experiments and structural audits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment in a YAML config")
    p_run.add_argument("config", help="path to the experiment YAML")
    _add_run_options(p_run)

    p_check = sub.add_parser("check", help="audit a config without time stepping")
    p_check.add_argument("config", help="path to the experiment YAML")

    p_demo = sub.add_parser("demo", help="run a built-in experiment")
    p_demo.add_argument("name", nargs="?", help="demo name (omit with --list)")
    p_demo.add_argument("--list", action="store_true", help="list demo names")
    _add_run_options(p_demo)

    return parser


def _run_and_emit(config, threads, out_dir, timing):
    report = run_convergence_study(config, threads=threads)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{config.name}.csv")
    emit_csv(report, path, include_timing=timing)
    for line in summary_lines(report):
        print(line)
    print(f"wrote {path}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run_and_emit(load_config(args.config), args.threads,
                                 args.out, args.timing)
        if args.command == "check":
            ok, lines = run_check(load_config(args.config))
            for line in lines:
                print(line)
            return 0 if ok else 1
        if args.command == "demo":
            if args.list or args.name is None:
                for name in demo_names():
                    print(name)
                return 0
            return _run_and_emit(demo_config(args.name), args.threads,
                                 args.out, args.timing)
    except (DDSplitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
