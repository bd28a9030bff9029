"""Experiment configuration: flat key=value sections with typed per-experiment defaults."""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field

EXPERIMENTS = ("spectrum", "lemma1", "lemma2", "thm1", "thm2", "picard", "thm4lin", "thm5", "uniqueness", "doob")


class ConfigError(ValueError):
    pass


# Common sections; each experiment overrides some values below.
BASE = {
    "run": {"seed": 20240601, "M": 512, "chunk": 128, "plots": True},
    "grid": {"backend": "gauss", "d": 1, "cutoff": 32, "order": 0, "R": 0.0, "resolution": 32, "dt": 0.01,
             "horizon": 1.0, "burn_in": 7.0, "stride": 1},
    "weight": {"kind": "gaussian", "gamma": 1.0, "n": 0},
    "noise": {"K": 8, "a_total": 1.0, "basis": "trig", "window_length": 2 * math.pi, "centered": False},
    "reaction": {"L": 0.0, "f0": 0.0, "s0": 0.0, "phi_amp": 1.0, "phi_width": 1.0, "psi_amp": 1.0,
                 "psi_width": 1.0, "sigma0": 1.0, "N": 0.0},
}

OVERRIDES = {
    "spectrum": {"grid": {"cutoff": 32}, "check": {"count": 5, "fd_xmax": 8.0, "fd_h": 1e-3, "fd_count": 3,
                                                    "rel_tol": 1e-4}},
    "lemma1": {"check": {"n_vectors": 100, "times": "0.1,0.5,1,2", "rel_tol": 1e-10}},
    "lemma2": {"run": {"M": 10000, "chunk": 2000}, "grid": {"horizon": 1.0, "dt": 0.01},
               "reaction": {"s0": 1.0}, "check": {"n_steps": 512}},
    "thm1": {"run": {"M": 512, "chunk": 64}, "grid": {"backend": "heat", "d": 3, "resolution": 32, "dt": 0.25,
                                                     "horizon": 50.0},
             "weight": {"kind": "exp_decay", "gamma": 2.0},
             "noise": {"K": 10, "window_length": 4 * math.pi, "centered": True},
             "reaction": {"phi_amp": 1.0, "phi_width": 1.0, "sigma0": 1.0}},
    "thm2": {"run": {"M": 512, "chunk": 64}, "grid": {"backend": "heat", "d": 3, "resolution": 32, "dt": 0.25,
                                                     "horizon": 50.0},
             "weight": {"kind": "exp_decay", "gamma": 2.0},
             "noise": {"K": 10, "window_length": 4 * math.pi, "centered": True},
             "reaction": {"phi_amp": 1.0, "phi_width": 1.0, "psi_amp": 2.0, "psi_width": 2.0, "N": 0.04}},
    "picard": {"run": {"M": 512}, "grid": {"horizon": 1.0, "dt": 0.01},
               "reaction": {"L": 0.1, "f0": 1.0, "s0": 0.5}, "check": {"max_iters": 8, "tol": 1e-8,
                                                                        "iter_limit": 6}},
    "thm4lin": {"run": {"M": 10000, "chunk": 2000}, "grid": {"cutoff": 4, "dt": 0.001, "burn_in": 7.0,
                                                            "horizon": 0.0},
                "noise": {"K": 1, "basis": "eigen", "a_total": 0.5},
                "reaction": {"s0": 1.0, "f0": 0.5},
                "check": {"stability_M": 256, "stability_horizon": 2.0, "stability_dt": 0.01}},
    "thm5": {"run": {"M": 1000}, "grid": {"dt": 0.01, "burn_in": 7.0, "horizon": 2.0},
             "reaction": {"L": 0.2, "f0": 1.0, "s0": 0.5},
             "check": {"iters": 8, "stability_M": 256, "stability_horizon": 3.0}},
    "uniqueness": {"run": {"M": 1000}, "grid": {"dt": 0.01, "burn_in": 7.0, "horizon": 2.0},
                   "reaction": {"L": 0.2, "f0": 1.0, "s0": 0.5},
                   "check": {"n_checkpoints": 6, "target": 1e-4, "stationary_M": 2000, "stationary_iters": 6,
                             "t1": 0.5, "t2": 1.5, "stability_M": 256, "stability_horizon": 3.0}},
    "doob": {"run": {"M": 10000, "chunk": 2000}, "grid": {"horizon": 1.0}, "check": {"n_steps": 1000}},
}


def defaults(name):
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    out = {sec: dict(vals) for sec, vals in BASE.items()}
    for sec, vals in OVERRIDES[name].items():
        out.setdefault(sec, {}).update(vals)
    return out


def _coerce(raw, default, where):
    try:
        if isinstance(default, bool):
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw).strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {type(default).__name__}") from None


@dataclass
class ExperimentConfig:
    name: str
    values: dict
    out: str = "runs"
    explicit: dict = field(default_factory=dict)

    def __getitem__(self, key):
        sec, _, k = key.partition(".")
        return self.values[sec][k]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    def to_text(self):
        """Manifest echo of every resolved value, one section per block."""
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser["experiment"] = {"name": self.name}
        for sec, vals in self.values.items():
            parser[sec] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in vals.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()


def load_config(name, text=None, overrides=None, out="runs"):
    """Resolve a config: defaults, then the key=value text, then ``overrides`` {"sec.key": value}."""
    values = defaults(name)
    explicit = {}

    def assign(sec, key, raw, where):
        if sec not in values:
            raise ConfigError(f"{where}: unknown section [{sec}]")
        if key not in values[sec]:
            raise ConfigError(f"{where}: unknown key {key!r} in [{sec}]")
        values[sec][key] = _coerce(raw, values[sec][key], where)
        explicit[f"{sec}.{key}"] = values[sec][key]

    if text:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"config parse error: {exc}") from None
        for sec in parser.sections():
            if sec == "manifest":
                continue  # run metadata; lets a manifest be replayed as a config
            for key, raw in parser[sec].items():
                if sec == "experiment":
                    if key != "name":
                        raise ConfigError(f"unknown key {key!r} in [experiment]")
                    if raw.strip() != name:
                        raise ConfigError(f"config is for experiment {raw.strip()!r}, not {name!r}")
                    continue
                assign(sec, key, raw, f"[{sec}] {key}")
    for dotted, raw in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        assign(sec, key, raw, dotted)
    return ExperimentConfig(name, values, out, explicit)
