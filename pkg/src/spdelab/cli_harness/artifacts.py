"""Artifact directory: CSV tables, SVG plots, verdict summary and run manifest."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .. import __version__

MANIFEST = "manifest.ini"
VERDICTS = "verdicts.csv"


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


@dataclass
class ArtifactSet:
    directory: str
    files: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)

    def __post_init__(self):
        os.makedirs(self.directory, exist_ok=True)

    def path(self, name):
        return os.path.join(self.directory, name)

    def write_csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        self.files.append(name)

    def write_columns(self, name, columns):
        """CSV from a dict of equal-length columns."""
        header = list(columns)
        rows = zip(*[np.asarray(columns[h]).tolist() if not isinstance(columns[h], list) else columns[h]
                     for h in header])
        self.write_csv(name, header, rows)

    def write_text(self, name, text):
        with open(self.path(name), "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
        self.files.append(name)

    def add_verdict(self, verdict):
        self.verdicts.append(verdict)

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts)

    def summary(self):
        lines = [f"{v.label}  {v.name}  margin={v.margin:.6g}" + (f"  ({v.detail})" if v.detail else "")
                 for v in self.verdicts]
        return "\n".join(lines)

    def finish(self, config, extra=None):
        """Write verdicts and the manifest (config echo, seeds, code version)."""
        self.write_csv(VERDICTS, ["name", "verdict", "margin", "seed", "detail"],
                       [(v.name, v.label, v.margin, "" if v.seed is None else v.seed, v.detail)
                        for v in self.verdicts])
        text = config.to_text()
        lines = ["[manifest]", f"code_version = spdelab {__version__}", f"seed = {config.seed}"]
        for k, v in sorted((extra or {}).items()):
            lines.append(f"{k} = {_cell(v)}")
        lines.append("files = " + ",".join(sorted(set(self.files))))
        self.write_text(MANIFEST, text + "\n".join(lines) + "\n")
        return self


def plot_series(artifacts, name, curves, title, xlabel="t", ylabel="", logy=False):
    """Static SVG of (label, x, y[, yerr]) curves; output is byte-stable."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "spdelab", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for curve in curves:
            label, x, y = curve[:3]
            ax.plot(x, y, label=label, lw=1.2)
            if len(curve) > 3 and curve[3] is not None:
                y, e = np.asarray(y), np.asarray(curve[3])
                ax.fill_between(x, y - 3 * e, y + 3 * e, alpha=0.2, lw=0)
        if logy:
            ax.set_yscale("log")
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(artifacts.path(name), format="svg", metadata={"Date": None})
        plt.close(fig)
    artifacts.files.append(name)
