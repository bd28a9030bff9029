import filecmp
import os
import shutil

import pytest

from spdelab.cli_harness import EXPERIMENTS, ConfigError, compare_baseline, defaults, load_config
from spdelab.cli_harness.baseline import BaselineError
from spdelab.cli_harness.cli import main

FAST_PICARD = ["--set", "run.M=32", "--set", "grid.cutoff=8", "--set", "grid.dt=0.05", "--no-plots"]


def _csvs(d):
    return sorted(f for f in os.listdir(d) if f.endswith(".csv"))


def test_every_experiment_has_defaults():
    for name in EXPERIMENTS:
        cfg = load_config(name)
        assert cfg.seed == defaults(name)["run"]["seed"]
        assert "[experiment]" in cfg.to_text()


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown key"):
        load_config("spectrum", "[grid]\nbogus = 1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        load_config("spectrum", "[nope]\nx = 1\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("spectrum", overrides={"run.M": "many"})
    with pytest.raises(ConfigError, match="not 'spectrum'"):
        load_config("spectrum", "[experiment]\nname = thm1\n")
    with pytest.raises(ConfigError):
        load_config("nonsense")


def test_config_echo_round_trip():
    cfg = load_config("thm5", overrides={"reaction.L": "0.15", "run.seed": "5"})
    again = load_config("thm5", cfg.to_text())
    assert again.values == cfg.values


def test_exit_codes(tmp_path, capsys):
    assert main(["spectrum", "--out", str(tmp_path), "--no-plots"]) == 0
    assert "PASS  spectrum_fd" in capsys.readouterr().out
    assert main(["spectrum", "--out", str(tmp_path), "--set", "check.rel_tol=1e-16"]) == 2
    assert main(["spectrum", "--out", str(tmp_path), "--set", "grid.bogus=1"]) == 1
    assert main(["spectrum", "--config", str(tmp_path / "missing.ini")]) == 1
    assert main(["nonsense"]) == 1
    assert main(["spectrum", "--set", "novalue"]) == 1
    assert main(["spectrum", "--out", str(tmp_path), "--workers", "0"]) == 1


def test_help_documents_csv_schema(capsys):
    with pytest.raises(SystemExit):
        main(["picard", "--help"])
    out = capsys.readouterr().out
    assert "picard_gamma.csv: iteration,gamma,tol,theory" in out
    assert "verdicts.csv" in out


def test_artifacts_and_manifest(tmp_path):
    assert main(["lemma1", "--out", str(tmp_path)]) == 0
    d = tmp_path / "lemma1"
    files = set(os.listdir(d))
    assert {"lemma1.csv", "verdicts.csv", "manifest.ini"} <= files
    manifest = (d / "manifest.ini").read_text()
    assert "code_version = spdelab" in manifest and "seed = 20240601" in manifest
    # the manifest alone reproduces the run
    assert main(["lemma1", "--config", str(d / "manifest.ini"), "--out", str(tmp_path / "replay")]) == 0
    for f in _csvs(d):
        assert filecmp.cmp(d / f, tmp_path / "replay" / "lemma1" / f, shallow=False)


def test_rerun_is_byte_identical(tmp_path):
    for out, workers in (("a", "1"), ("b", "3")):
        assert main(["picard", "--out", str(tmp_path / out), "--workers", workers, "--set", "run.chunk=8",
                     *FAST_PICARD]) in (0, 2)
    a, b = tmp_path / "a" / "picard", tmp_path / "b" / "picard"
    assert _csvs(a) == _csvs(b)
    for f in _csvs(a):
        assert filecmp.cmp(a / f, b / f, shallow=False), f


def test_svg_is_byte_stable(tmp_path):
    for out in ("a", "b"):
        main(["lemma2", "--out", str(tmp_path / out), "--set", "run.M=200", "--set", "grid.cutoff=8"])
    a, b = tmp_path / "a" / "lemma2" / "lemma2.svg", tmp_path / "b" / "lemma2" / "lemma2.svg"
    assert a.exists() and filecmp.cmp(a, b, shallow=False)


def test_baseline_comparison(tmp_path, capsys):
    base = tmp_path / "base"
    assert main(["lemma1", "--out", str(base)]) == 0
    assert main(["lemma1", "--out", str(tmp_path / "same"), "--baseline", str(base / "lemma1")]) == 0
    rep = compare_baseline(tmp_path / "same" / "lemma1", base / "lemma1")
    assert rep.passed
    main(["lemma1", "--out", str(tmp_path / "other"), "--seed", "7"])
    rep = compare_baseline(tmp_path / "other" / "lemma1", base / "lemma1")
    status = {(c.file, c.column): c.passed for c in rep.columns}
    assert not rep.passed
    assert not status[("lemma1.csv", "max_ratio")]
    assert status[("lemma1.csv", "t")] and status[("lemma1.csv", "bound")] and status[("lemma1.csv", "sq_bound")]
    # a loose tolerance on the stochastic columns passes
    loose = {"max_ratio": 1.0, "max_sq_ratio": 1.0, "margin": 1.0, "seed": 1e9}
    assert compare_baseline(tmp_path / "other" / "lemma1", base / "lemma1", loose).passed
    assert main(["compare", str(tmp_path / "other" / "lemma1"), str(base / "lemma1")]) == 2


def test_baseline_errors(tmp_path):
    main(["lemma1", "--out", str(tmp_path)])
    main(["spectrum", "--out", str(tmp_path), "--no-plots"])
    with pytest.raises(BaselineError, match="mismatch"):
        compare_baseline(tmp_path / "lemma1", tmp_path / "spectrum")
    shutil.copytree(tmp_path / "lemma1", tmp_path / "trimmed")
    target = tmp_path / "trimmed" / "lemma1.csv"
    lines = target.read_text().splitlines()
    target.write_text("\n".join(",".join(line.split(",")[:-1]) for line in lines) + "\n")
    with pytest.raises(BaselineError, match="missing columns"):
        compare_baseline(tmp_path / "trimmed", tmp_path / "lemma1")
    assert main(["compare", str(tmp_path / "trimmed"), str(tmp_path / "lemma1")]) == 1
