"""Regression comparison of an artifact directory against a stored baseline."""

from __future__ import annotations

import configparser
import csv
import math
import os
from dataclasses import dataclass, field

from ..measure_lab import Verdict
from .artifacts import MANIFEST

ANALYTIC_TOL = 1e-12


class BaselineError(ValueError):
    pass


@dataclass
class ColumnDiff:
    file: str
    column: str
    passed: bool
    max_diff: float
    tol: float


@dataclass
class BaselineReport:
    passed: bool
    columns: list = field(default_factory=list)

    def verdict(self, seed=None):
        bad = [f"{c.file}:{c.column}" for c in self.columns if not c.passed]
        worst = min((c.tol - c.max_diff for c in self.columns), default=0.0)
        detail = "all columns match" if not bad else "differs in " + ", ".join(bad)
        return Verdict("baseline", self.passed, worst, seed, detail)


def _experiment(directory):
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(os.path.join(directory, MANIFEST)):
        raise BaselineError(f"no {MANIFEST} in {directory}")
    return parser["experiment"]["name"]


def _read(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return reader.fieldnames or [], list(reader)


def _num(s):
    try:
        return float(s)
    except ValueError:
        return None


def _diff(a, b):
    x, y = _num(a), _num(b)
    if x is None or y is None:
        return 0.0 if a == b else math.inf
    if x == y or (math.isnan(x) and math.isnan(y)):
        return 0.0
    return abs(x - y) / max(1.0, abs(y))


def compare_baseline(run_dir, baseline_dir, tolerances=None):
    """Compare every CSV column of ``baseline_dir`` with the same column in ``run_dir``.

    ``tolerances`` maps ``column`` or ``file:column`` to a relative
    tolerance (relative to max(1, |baseline|)); every other column must
    agree to 1e-12. Non-numeric cells must match exactly.
    """
    tolerances = tolerances or {}
    name_run, name_base = _experiment(run_dir), _experiment(baseline_dir)
    if name_run != name_base:
        raise BaselineError(f"experiment mismatch: {name_run!r} vs baseline {name_base!r}")
    files = sorted(f for f in os.listdir(baseline_dir) if f.endswith(".csv"))
    report = BaselineReport(True)
    for fname in files:
        path = os.path.join(run_dir, fname)
        if not os.path.exists(path):
            raise BaselineError(f"missing file {fname} in {run_dir}")
        base_cols, base_rows = _read(os.path.join(baseline_dir, fname))
        run_cols, run_rows = _read(path)
        missing = [c for c in base_cols if c not in run_cols]
        if missing:
            raise BaselineError(f"{fname}: missing columns {', '.join(missing)}")
        for col in base_cols:
            tol = tolerances.get(f"{fname}:{col}", tolerances.get(col, ANALYTIC_TOL))
            if len(run_rows) != len(base_rows):
                worst = math.inf
            else:
                worst = max((_diff(r[col], b[col]) for r, b in zip(run_rows, base_rows)), default=0.0)
            ok = worst <= tol
            report.columns.append(ColumnDiff(fname, col, ok, worst, tol))
            report.passed &= ok
    return report
