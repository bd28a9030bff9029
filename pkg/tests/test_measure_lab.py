import math

import dcor
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdelab.measure_lab import (EmpiricalMeasure, MomentSeries, doob_probe, energy_distance, energy_statistic,
                                 fit_decay, kb_average, moment_series, plateau_test, sup_verdict,
                                 write_series_csv, write_verdicts_csv)
from spdelab.noise_field import make_noise
from spdelab.spde_engine import GaussSpectralBackend, Trajectory


def _series(est, se=None, t=None):
    est = np.asarray(est, dtype=float)
    t = np.arange(est.size, dtype=float) if t is None else t
    return MomentSeries(t, est, np.zeros_like(est) if se is None else np.asarray(se), 10)


def test_moment_series_basic():
    s = MomentSeries.from_samples([0, 1], np.zeros((5, 2)))
    assert np.all(s.estimate == 0) and np.all(s.stderr == 0)
    with pytest.raises(ValueError):
        MomentSeries.from_samples([0], np.zeros((1, 1)))
    samples = np.random.default_rng(0).normal(size=(400, 3))
    s = MomentSeries.from_samples(np.arange(3), samples)
    assert np.allclose(s.stderr, samples.std(axis=0, ddof=1) / 20)


def test_moment_series_from_nodal_samples():
    from spdelab.weighted_space import build_quadrature, make_weight

    q = build_quadrature("full_space", order=10)
    w = make_weight("gaussian")
    arr = np.ones((3, 2, q.size))
    s = moment_series((np.array([0.0, 1.0]), arr), w, q)
    assert np.allclose(s.estimate, math.sqrt(math.pi))


def test_sup_verdict():
    assert sup_verdict(_series(np.zeros(4)), 1.0).passed
    spike = np.zeros(6)
    spike[4] = 2.0
    v = sup_verdict(_series(spike), 1.0)
    assert not v.passed and v.index == 4 and v.margin == pytest.approx(-1.0)
    # the 3 sigma allowance
    assert sup_verdict(_series([1.2], [0.1]), 1.0).passed
    with pytest.raises(ValueError):
        sup_verdict(_series([]), 1.0)


def test_fit_decay_exact():
    t = np.linspace(0, 2, 41)
    fit = fit_decay(_series(np.exp(-4 * t), t=t))
    assert fit.rate == pytest.approx(4.0, abs=1e-6)
    assert not fit.shortened


def test_fit_decay_shortens_at_floor():
    t = np.linspace(0, 2, 41)
    y = np.exp(-3 * t)
    y[30:] = -1e-3
    fit = fit_decay(_series(y, t=t))
    assert fit.shortened and fit.n_used == 30
    assert fit.rate == pytest.approx(3.0, abs=1e-9)
    with pytest.raises(ValueError):
        fit_decay(_series([1.0, -1.0, 1.0]))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(-3, 3))
def test_fit_decay_recovers_any_rate(r, c):
    t = np.linspace(0, 1, 21)
    fit = fit_decay(_series(np.exp(c - r * t), t=t))
    assert fit.rate == pytest.approx(r, rel=1e-8)
    assert fit.intercept == pytest.approx(c, abs=1e-8)


def test_energy_statistic_matches_reference():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(60, 3)), rng.normal(0.3, 1.0, size=(50, 3))
    assert energy_statistic(x, y) == pytest.approx(dcor.energy_distance(x, y), rel=1e-12)


def test_energy_distance_properties():
    rng = np.random.default_rng(2)
    names = ("a", "b")
    A = EmpiricalMeasure(rng.normal(size=(200, 2)), names)
    assert energy_distance(A, A, n_perm=99).statistic == pytest.approx(0.0, abs=1e-12)
    B = EmpiricalMeasure(rng.normal(size=(200, 2)), names)
    assert not energy_distance(A, B, n_perm=199, seed=3).rejected
    with pytest.raises(ValueError):
        energy_distance(A, EmpiricalMeasure(B.samples, ("a", "c")))


def test_energy_distance_power_for_ou_variances():
    # stationary OU coefficient laws with variances 0.125 and 0.5
    rng = np.random.default_rng(4)
    A = EmpiricalMeasure(rng.normal(0, math.sqrt(0.125), (1000, 1)), ("c0",))
    B = EmpiricalMeasure(rng.normal(0, math.sqrt(0.5), (1000, 1)), ("c0",))
    res = energy_distance(A, B, n_perm=199, seed=5)
    assert res.rejected and res.statistic > res.threshold


def test_energy_distance_is_seeded():
    rng = np.random.default_rng(6)
    A = EmpiricalMeasure(rng.normal(size=(80, 1)), ("x",))
    B = EmpiricalMeasure(rng.normal(size=(80, 1)), ("x",))
    assert energy_distance(A, B, n_perm=99, seed=1) == energy_distance(A, B, n_perm=99, seed=1)


def test_kb_average():
    states = np.ones((3, 5, 2))
    traj = Trajectory(np.linspace(0, 1, 5), {}, states[:, -1], "gauss", 0, 3, states)
    meas = kb_average(traj, {"x": lambda s: s[..., 0]}, 1.0, 7)
    assert np.all(meas.samples == 1.0) and not meas.flags["with_replacement"]
    assert kb_average(traj, {"x": lambda s: s[..., 0]}, 1.0, 100).flags["with_replacement"]
    with pytest.raises(ValueError):
        kb_average(traj, {"x": lambda s: s[..., 0]}, 2.0, 3)


def test_doob_probe_oracles():
    spec = make_noise(1, a=(1.0,), seed=0)
    zero = doob_probe(spec, lambda s: 0.0 * s, 1.0, 200, seed=1)
    assert zero.lhs == 0.0 and zero.rhs == 0.0 and zero.verdict.passed
    one = doob_probe(spec, lambda s: np.ones_like(s), 1.0, 2000, seed=1)
    assert one.rhs == pytest.approx(4.0) and one.verdict.passed and one.lhs < 4.0
    root = doob_probe(spec, lambda s: np.sqrt(s), 1.0, 500, seed=1)
    assert root.rhs == pytest.approx(2.0)
    with pytest.raises(ValueError):
        doob_probe(spec, lambda s: s, 1.0, 10, seed=1)


def test_plateau_test():
    rng = np.random.default_rng(7)
    assert plateau_test(1.0 + 0.01 * rng.normal(size=200)).passed
    assert not plateau_test(np.linspace(0, 1, 200) + 0.01 * rng.normal(size=200)).passed
    assert plateau_test(np.ones(10)).passed


def test_csv_writers(tmp_path):
    s = _series([1.0, 0.5], [0.1, 0.1])
    write_series_csv(tmp_path / "s.csv", s)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "t,estimate,stderr"
    write_verdicts_csv(tmp_path / "v.csv", [sup_verdict(s, 2.0, seed=3)])
    assert (tmp_path / "v.csv").read_text().splitlines()[1].startswith("sup_bound,PASS,")


def test_ou_series_matches_oracle():
    # the stationary OU second moment sits within 3 sigma of a1 / (2 |mu1|)
    from spdelab.spde_engine import constant_reaction, stochastic_convolution

    noise = make_noise(1, a=(0.5,), seed=8, kind="eigen", cutoff=4)
    b = GaussSpectralBackend(noise, d=1, cutoff=4)
    traj = stochastic_convolution(None, lambda t, x: np.ones(x.shape[0]), (-4.0, 0.0), noise, 0.005, b, M=2000)
    s = MomentSeries.from_samples(traj.times[-1:], b.norm_sq_H(traj.final)[:, None])
    assert abs(s.estimate[0] - 0.125) <= 3 * s.stderr[0] + 0.125 * 0.01
