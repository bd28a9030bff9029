"""Command line: one subcommand per experiment plus ``compare``.

Exit status is 0 when every verdict passes, 2 when any verdict fails and
1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys

from .baseline import BaselineError, compare_baseline
from .config import EXPERIMENTS, ConfigError, load_config
from .experiments import SCHEMAS, run_experiment

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _set_pair(text):
    key, sep, value = text.partition("=")
    if not sep or "." not in key:
        raise argparse.ArgumentTypeError(f"expected section.key=value, got {text!r}")
    return key.strip(), value.strip()


def _tol_pair(text):
    key, sep, value = text.partition("=")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected column=tolerance, got {text!r}") from None


def build_parser():
    parser = _Parser(prog="spdelab", description="Numerical checks for stochastic reaction-diffusion equations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        epilog = "CSV artifacts:\n  " + "\n  ".join(SCHEMAS[name] + ["verdicts.csv: name,verdict,margin,seed,detail"])
        p = sub.add_parser(name, help=f"run the {name} experiment", epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="key=value config file with [section] headers")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", default="runs", help="output root; artifacts go to OUT/<experiment>")
        p.add_argument("--workers", type=int, help="worker threads (default: $SPDELAB_WORKERS or 1)")
        p.add_argument("--baseline", help="compare the run against this artifact directory")
        p.add_argument("--tol", action="append", type=_tol_pair, default=[], metavar="COLUMN=TOL",
                       help="baseline tolerance for a column (repeatable)")
        p.add_argument("--set", action="append", type=_set_pair, default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
        p.add_argument("--no-plots", action="store_true", help="skip SVG plots")
    c = sub.add_parser("compare", help="compare an artifact directory with a baseline")
    c.add_argument("run_dir")
    c.add_argument("baseline_dir")
    c.add_argument("--tol", action="append", type=_tol_pair, default=[], metavar="COLUMN=TOL")
    return parser


def _print_report(report):
    for col in report.columns:
        print(f"{'PASS' if col.passed else 'FAIL'}  {col.file}:{col.column}  max_rel_diff={col.max_diff:.3g}")


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command == "compare":
            report = compare_baseline(args.run_dir, args.baseline_dir, dict(args.tol))
            _print_report(report)
            return EXIT_OK if report.passed else EXIT_FAIL
        text = None
        if args.config:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        overrides = dict(args.set)
        if args.seed is not None:
            overrides["run.seed"] = str(args.seed)
        if args.no_plots:
            overrides["run.plots"] = "false"
        cfg = load_config(args.command, text, overrides, out=args.out)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        art = run_experiment(cfg, workers=args.workers)
        print(art.summary())
        passed = art.passed
        if args.baseline:
            report = compare_baseline(art.directory, args.baseline, dict(args.tol))
            _print_report(report)
            print(report.verdict(cfg.seed).label + "  baseline")
            passed &= report.passed
        print(f"artifacts: {os.path.abspath(art.directory)}")
        return EXIT_OK if passed else EXIT_FAIL
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except (ConfigError, BaselineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
