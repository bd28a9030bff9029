import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdelab.noise_field import NoisePath, make_noise, sample_path
from spdelab.spde_engine import (GaussSpectralBackend, HeatTorusBackend, NonContraction, ReactionSpec,
                                 SmallnessCertificate, SolveError, bounded_reaction, build_stationary,
                                 constant_reaction, cutoff_reaction, lipschitz_reaction, picard_gamma,
                                 picard_solve, probe_constraints, smooth_switch, solve, stability_pair, step,
                                 stochastic_convolution, switch_lipschitz, time_grid, zero_reaction)
from spdelab.spde_engine.reaction import bump_norms, cutoff_vanishes


@pytest.fixture(scope="module")
def gauss():
    noise = make_noise(4, a=(0.4, 0.3, 0.2, 0.1), seed=1)
    return noise, GaussSpectralBackend(noise, d=1, cutoff=8)


@pytest.fixture(scope="module")
def ou():
    noise = make_noise(1, a=(0.5,), seed=2, kind="eigen", cutoff=4)
    return noise, GaussSpectralBackend(noise, d=1, cutoff=4)


def test_time_grid():
    g = time_grid(-1.0, 1.0, 0.25)
    assert g.size == 9 and g[4] == 0.0
    with pytest.raises(ValueError):
        time_grid(0.0, 1.0, 0.3)
    with pytest.raises(ValueError):
        time_grid(1.0, 1.0, 0.1)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10.0), st.lists(st.floats(0.0, 20.0), min_size=2, max_size=20))
def test_smooth_switch(N, s):
    s = np.array(s)
    v = smooth_switch(s, N)
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(v[s <= 0.9 * N] == 1.0) and np.all(v[s >= N] == 0.0)
    ds = np.abs(np.diff(s))
    ok = ds > 1e-9
    assert np.all(np.abs(np.diff(v))[ok] <= switch_lipschitz(N) * ds[ok] * (1 + 1e-9))


def test_reaction_families_satisfy_their_constraints():
    x = np.linspace(-3, 3, 9)[:, None]
    for r in (bounded_reaction(d=1), lipschitz_reaction(0.2, 1.0, 0.5), constant_reaction(1.0, 0.5),
              cutoff_reaction(1.0, d=1)):
        rep = probe_constraints(r, x)
        assert rep.ok, (r.name, rep.violations)
    liar = ReactionSpec(f=lambda x, u: 2 * u, L=1.0, name="liar")
    assert not probe_constraints(liar, x).ok


def test_cutoff_reaction_vanishes_above_N():
    x = np.linspace(-3, 3, 16)[:, None]
    r = cutoff_reaction(0.5, d=1)
    l2 = lambda u: np.sqrt(np.sum(u * u, axis=-1) * 6 / 16)
    assert cutoff_vanishes(r, x, l2)


def test_bump_norms_oracle():
    sup, l1, l2sq = bump_norms(2.0, 1.0, 3)
    assert sup == 2.0
    assert l1 == pytest.approx(2 * math.pi ** 1.5)
    assert l2sq == pytest.approx(4 * (math.pi / 2) ** 1.5)


def test_certificate_values():
    c = SmallnessCertificate(0.2, 1.0)
    assert c.cond1 == pytest.approx(0.08) and c.cond2 == pytest.approx(0.06)
    assert c.eligible and c.decay_rate == pytest.approx(1.82)
    assert not SmallnessCertificate(1.0, 1.0).eligible
    assert picard_gamma(0.1, 1.0, 1.0) == pytest.approx(0.0075)


def test_deterministic_ensemble_has_zero_stderr(gauss):
    noise, b = gauss
    traj = solve(np.ones(b.state_size), (0.0, 0.5), zero_reaction(), noise, 0.05, backend=b, M=4)
    assert np.all(np.ptp(traj.observables["norm_sq_H"], axis=0) == 0.0)
    c = np.ones(b.state_size) * np.exp(b.mu * 0.5)
    assert np.allclose(traj.final[0], c, rtol=1e-12)


def test_flow_property(gauss):
    noise, b = gauss
    r = lipschitz_reaction(0.3, 0.5, 0.2)
    u0 = np.zeros(b.state_size)
    whole = solve(u0, (0.0, 1.0), r, noise, 0.05, backend=b, M=3)
    first = solve(u0, (0.0, 0.4), r, noise, 0.05, backend=b, M=3)
    second = solve(first.final, (0.4, 1.0), r, noise, 0.05, backend=b, M=3)
    assert np.array_equal(second.final, whole.final)


def test_adaptedness(gauss):
    noise, b = gauss
    grid = time_grid(0.0, 1.0, 0.05)
    path = sample_path(noise, grid, paths=2)
    inc = path.increments.copy()
    inc[..., 10:] += 1.0
    changed = NoisePath(grid, inc, False, path.seed)
    r = lipschitz_reaction(0.3, 0.5, 0.2)
    kw = dict(backend=b, store_states=True)
    a = solve(np.zeros(b.state_size), (0.0, 1.0), r, path, 0.05, **kw)
    c = solve(np.zeros(b.state_size), (0.0, 1.0), r, changed, 0.05, **kw)
    assert np.array_equal(a.states[:, :11], c.states[:, :11])
    assert not np.array_equal(a.states[:, 11], c.states[:, 11])


def test_workers_do_not_change_results(gauss):
    noise, b = gauss
    r = lipschitz_reaction(0.3, 0.5, 0.2)
    kw = dict(backend=b, M=40, chunk=8)
    one = solve(np.zeros(b.state_size), (0.0, 0.5), r, noise, 0.05, workers=1, **kw)
    many = solve(np.zeros(b.state_size), (0.0, 0.5), r, noise, 0.05, workers=4, **kw)
    assert np.array_equal(one.final, many.final)
    assert np.array_equal(one.observables["norm_sq_H"], many.observables["norm_sq_H"])


def test_step_matches_solver(gauss):
    noise, b = gauss
    r = lipschitz_reaction(0.3, 0.5, 0.2)
    grid = time_grid(0.0, 0.1, 0.1)
    path = sample_path(noise, grid)
    u = step(np.zeros(b.state_size), 0.0, 0.1, r, path.increments[:, :, 0], b)
    traj = solve(np.zeros(b.state_size), (0.0, 0.1), r, path, 0.1, backend=b)
    assert np.array_equal(u, traj.final)


def test_blow_up_raises(gauss):
    noise, b = gauss
    r = ReactionSpec(f=lambda x, u: 1e200 * u * u * u, L=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(SolveError) as err:
            solve(np.ones(b.state_size), (0.0, 1.0), r, noise, 0.1, backend=b)
    assert err.value.step >= 0


def test_strong_order_for_linear_single_mode(ou):
    # additive noise: the exponential-Euler error must shrink at least like dt^(1/2)
    noise, b = ou
    T, fine, M = 1.0, 2 ** -10, 200
    grid_f = time_grid(0.0, T, fine)
    pf = sample_path(noise, grid_f, paths=M)
    sigma = constant_reaction(0.0, 1.0)
    ref = solve(np.zeros(b.state_size), (0.0, T), sigma, pf, fine, backend=b).final[:, 0]
    errs, dts = [], [2 ** -k for k in (3, 4, 5, 6)]
    for dt in dts:
        r = int(round(dt / fine))
        inc = pf.increments.reshape(M, 1, -1, r).sum(axis=-1)
        pc = NoisePath(time_grid(0.0, T, dt), inc, False, pf.seed)
        c = solve(np.zeros(b.state_size), (0.0, T), sigma, pc, dt, backend=b).final[:, 0]
        errs.append(math.sqrt(np.mean((c - ref) ** 2)))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope >= 0.5


def test_stochastic_convolution_checks(gauss):
    noise, b = gauss
    with pytest.raises(ValueError):
        stochastic_convolution(None, None, (0.0, 1.0), noise, 0.1, b)
    heat = HeatTorusBackend(make_noise(2, d=3, seed=0), d=3, R=20.0, resolution=8)
    with pytest.raises(ValueError):
        stochastic_convolution(None, None, (-1.0, 1.0), noise, 0.1, heat)


def test_heat_backend_weighted_norm():
    noise = make_noise(2, d=3, seed=0)
    b = HeatTorusBackend(noise, d=3, R=20.0, resolution=16)
    assert b.norm_sq_H(np.ones(b.state_size)) == pytest.approx(b.rho_l1_discrete())
    assert b.l2_norm(np.ones(b.state_size)) == pytest.approx(40.0 ** 1.5)


def test_picard_exact_for_zero_reaction(gauss):
    noise, b = gauss
    res = picard_solve(np.ones(b.state_size), 1.0, zero_reaction(), noise, 0.05, b, M=8, max_iters=4)
    assert res.converged and res.iterations == 1


def test_picard_contracts(gauss):
    noise, b = gauss
    res = picard_solve(np.zeros(b.state_size), 1.0, lipschitz_reaction(0.1, 1.0, 0.5), noise, 0.05, b, M=64,
                       max_iters=8, tol=1e-8)
    assert res.converged and res.iterations <= 6
    assert np.all(res.gamma_series <= res.gamma_theory + res.gamma_tol)


def test_picard_non_contraction(gauss):
    noise, b = gauss
    r = ReactionSpec(f=lambda x, u: 40.0 * u, L=40.0)
    with pytest.raises(NonContraction):
        picard_solve(np.ones(b.state_size), 2.0, r, noise, 0.05, b, M=4, max_iters=6, tol=1e-30)


def test_stationary_requires_eligibility(gauss):
    noise, b = gauss
    with pytest.raises(ValueError, match="smallness"):
        build_stationary(lipschitz_reaction(2.0), noise, 1.0, 2.0, 3, 8, 0.1, b)


def test_stationary_iteration_small(gauss):
    noise, b = gauss
    ens = build_stationary(lipschitz_reaction(0.2, 1.0, 0.5), noise, 0.5, 3.0, 4, 32, 0.05, b,
                           sample_times=(0.0, 0.5))
    assert ens.samples.shape == (32, 2, b.state_size)
    assert np.all(ens.ratios <= ens.certificate.iteration_ratio + ens.ratio_tol)
    assert np.all(ens.norm_B <= ens.uniform_bound + 3 * ens.norm_B_stderr)


def test_linear_stability_is_exact_in_the_first_mode(gauss):
    noise, b = gauss
    v = np.zeros(b.state_size)
    v[0] = 1.0
    pair = stability_pair(np.zeros(b.state_size), v, zero_reaction(), noise, (0.0, 1.0), 0.05, b, M=4)
    assert np.allclose(pair.estimate, np.exp(-4 * pair.times), rtol=1e-12)
    assert pair.envelope_rate == 4.0 and pair.envelope_K == 1.0
