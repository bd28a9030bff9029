"""One experiment per claim: build the model from a config, run it, emit artifacts and verdicts."""

from __future__ import annotations

import math

import numpy as np

from ..gauss_operator import eigenvalue, fd_spectrum, gauss_basis, mode_table, semigroup_factors, spectrum
from ..heat_semigroup import thm1_constant, thm2_constant
from ..measure_lab import (N_SIGMA, MomentSeries, Verdict, default_functionals, doob_probe, energy_distance,
                           fit_decay, measure_from_states, plateau_test, sup_verdict)
from ..noise_field import basis_gram, default_variances, ito_isometry_probe, make_noise, sample_path
from ..spde_engine import (GaussSpectralBackend, HeatTorusBackend, bounded_reaction, build_stationary,
                           constant_reaction, cutoff_reaction, lipschitz_reaction, picard_solve, solve,
                           stability_pair, stochastic_convolution, torus_radius, zero_reaction)
from ..spde_engine.reaction import bump_norms
from ..weighted_space import make_weight
from .artifacts import ArtifactSet, plot_series

# CSV schemas, shown by ``--help`` of each subcommand
SCHEMAS = {
    "spectrum": ["spectrum.csv: index,p,eigenvalue,exact,fd,fd_rel_err (fd empty past fd_count)"],
    "lemma1": ["lemma1.csv: t,max_ratio,bound,max_sq_ratio,sq_bound"],
    "lemma2": ["isometry.csv: probe,mc_lhs,mc_stderr,analytic,analytic_err",
               "lemma2.csv: t,estimate,stderr,exact_discrete,bound"],
    "thm1": ["series.csv: t,estimate,stderr (weighted squared norm)", "bound.csv: thm1_constant terms and inputs"],
    "thm2": ["series.csv: t,estimate,stderr (squared L2 norm)", "bound.csv: thm2_constant terms and inputs"],
    "picard": ["picard_gamma.csv: iteration,gamma,tol,theory", "picard_diff.csv: iteration,diff_B,norm_B"],
    "thm4lin": ["ou.csv: burn_in,estimate,stderr,exact", "drift.csv: c,mean_coefficient,target",
                "stability.csv: t,estimate,stderr,envelope"],
    "thm5": ["ratios.csv: iteration,ratio,tol,target", "norms.csv: iteration,diff_B,norm_B,norm_B_stderr,bound",
             "stability.csv: t,estimate,stderr,envelope"],
    "uniqueness": ["distance.csv: t,statistic,p_value,threshold", "tests.csv: test,statistic,p_value,threshold",
                   "stability.csv: t,estimate,stderr,envelope"],
    "doob": ["doob.csv: probe,lhs,lhs_stderr,rhs"],
}


# -- model construction --------------------------------------------------


def build_noise(cfg):
    K, d, total = cfg["noise.K"], cfg["grid.d"], cfg["noise.a_total"]
    a = np.asarray(default_variances(K))
    a = tuple((a * total / a.sum()).tolist())
    windows = ((-0.5,) * d,) if cfg["noise.centered"] else None
    return make_noise(K, d, a, seed=cfg.seed, windows=windows, window_length=cfg["noise.window_length"],
                      kind=cfg["noise.basis"], cutoff=cfg["grid.cutoff"])


def build_weight(cfg):
    kind = cfg["weight.kind"]
    kw = {"gamma": cfg["weight.gamma"]} if kind == "exp_decay" else {"n": cfg["weight.n"]} if kind == "poly_decay" else {}
    return make_weight(kind, d=cfg["grid.d"], **kw)


def build_backend(cfg, noise=None):
    noise = build_noise(cfg) if noise is None else noise
    if cfg["grid.backend"] == "gauss":
        order = cfg["grid.order"] or None
        return GaussSpectralBackend(noise, d=cfg["grid.d"], cutoff=cfg["grid.cutoff"], order=order)
    if cfg["grid.backend"] == "heat":
        weight = build_weight(cfg)
        R = cfg["grid.R"] or torus_radius(weight)
        return HeatTorusBackend(noise, d=cfg["grid.d"], R=R, resolution=cfg["grid.resolution"], weight=weight)
    raise ValueError(f"unknown backend {cfg['grid.backend']!r}")


def _pack(series_like):
    return series_like.times, series_like.estimate, series_like.stderr


def _envelope_verdict(pair, name, seed):
    env = pair.envelope()
    slack = (env + N_SIGMA * pair.stderr - pair.estimate)[1:]  # equality at t0
    worst = int(np.argmin(slack)) + 1
    return Verdict(name, bool(np.all(slack >= 0)), float(slack[worst - 1]), seed,
                   f"K={pair.envelope_K:g} rate={pair.envelope_rate:g}, worst at t={pair.times[worst]:g}", worst)


def _rate_verdict(pair, name, seed):
    fit = fit_decay(pair, floor_sigma=N_SIGMA)
    margin = fit.rate + fit.ci - pair.envelope_rate
    detail = f"rate={fit.rate:.6g} ci={fit.ci:.3g} target={pair.envelope_rate:g} n={fit.n_used}"
    if fit.shortened:
        detail += " (window shortened at noise floor)"
    return Verdict(name, bool(margin >= 0), float(margin), seed, detail), fit


def _write_pair(art, name, pair):
    art.write_columns(name, {"t": pair.times, "estimate": pair.estimate, "stderr": pair.stderr,
                             "envelope": pair.envelope()})


def _plots(cfg):
    return bool(cfg["run.plots"])


# -- experiments -----------------------------------------------------------


def exp_spectrum(cfg, art, workers):
    d, cutoff, count = cfg["grid.d"], cfg["grid.cutoff"], cfg["check.count"]
    mus = spectrum(d, cutoff)[:count]
    table = mode_table(d, cutoff)[:count]
    exact = np.array([-2.0 - 4.0 * p[-1] - 2.0 * sum(p[:-1]) for p in table])
    err = float(np.max(np.abs(mus - exact)))
    art.add_verdict(Verdict("spectrum_formula", err == 0.0, -err, None, f"max |mu - exact| = {err:g}"))
    fd = fd_spectrum(cfg["check.fd_xmax"], cfg["check.fd_h"], cfg["check.fd_count"]) if d == 1 else np.array([])
    rel = np.abs(fd - exact[: fd.size]) / np.abs(exact[: fd.size])
    rows = []
    for i, (p, mu, ex) in enumerate(zip(table, mus, exact)):
        row = [i, "-".join(map(str, p)), float(mu), float(ex)]
        row += [float(fd[i]), float(rel[i])] if i < fd.size else ["", ""]
        rows.append(row)
    art.write_csv("spectrum.csv", ["index", "p", "eigenvalue", "exact", "fd", "fd_rel_err"], rows)
    if fd.size:
        worst = float(rel.max())
        art.add_verdict(Verdict("spectrum_fd", worst <= cfg["check.rel_tol"], cfg["check.rel_tol"] - worst, None,
                                f"max relative error {worst:.3g} (h={cfg['check.fd_h']:g})"))
    return {"eigenvalue_exact": exact[0]}


def exp_lemma1(cfg, art, workers):
    basis = gauss_basis(cfg["grid.d"], cfg["grid.cutoff"], cfg["grid.order"] or 2 * cfg["grid.cutoff"])
    rng = np.random.default_rng(cfg.seed)
    C = rng.standard_normal((cfg["check.n_vectors"], basis.n_modes))
    tol = cfg["check.rel_tol"]
    times = [float(t) for t in cfg["check.times"].split(",")]
    rows, m1, m2 = [], math.inf, math.inf
    n0 = np.sqrt(np.sum(C * C, axis=1))
    for t in times:
        St = C * semigroup_factors(basis.mu, t)
        r = np.sqrt(np.sum(St * St, axis=1)) / n0
        b, b2 = math.exp(-2 * t), math.exp(-4 * t)
        rows.append([t, float(r.max()), b, float((r * r).max()), b2])
        m1 = min(m1, b * (1 + tol) - float(r.max()))
        m2 = min(m2, b2 * (1 + tol) - float((r * r).max()))
    art.write_csv("lemma1.csv", ["t", "max_ratio", "bound", "max_sq_ratio", "sq_bound"], rows)
    art.add_verdict(Verdict("lemma1_norm", m1 >= 0, m1, cfg.seed, "|S(t)u| <= exp(-2t) |u|"))
    art.add_verdict(Verdict("lemma1_sq", m2 >= 0, m2, cfg.seed, "|S(t)u|^2 <= exp(-4t) |u|^2"))
    return {}


def exp_lemma2(cfg, art, workers):
    noise = build_noise(cfg)
    backend = build_backend(cfg, noise)
    T, M, seed = cfg["grid.horizon"], cfg["run.M"], cfg.seed
    n_steps = cfg["check.n_steps"]
    rows = []
    probes = {"g=1": lambda s: np.ones_like(np.asarray(s, dtype=float)),
              "g=exp(-s)": lambda s: np.exp(-np.asarray(s, dtype=float))}
    for i, (label, g) in enumerate(probes.items()):
        res = ito_isometry_probe(g, noise, T, M, seed + i, n_steps)
        rows.append([label, res.mc_lhs, res.mc_stderr, res.analytic_rhs, res.analytic_err])
        art.add_verdict(Verdict(f"isometry[{label}]", res.within_3sigma,
                                N_SIGMA * res.mc_stderr + res.analytic_err - abs(res.mc_lhs - res.analytic_rhs),
                                seed + i))
    # trace class: E|W(T)|_2^2 = T sum a_k, with the norm assembled by quadrature
    W = sample_path(noise, np.linspace(0.0, T, 2), seed=seed + len(probes), paths=M)
    coef = W.increments[:, :, 0] * noise.sqrt_a()
    gram = basis_gram(noise.basis)
    sq = np.einsum("mk,kl,ml->m", coef, gram, coef)
    est, se = float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(M))
    rows.append(["trace_class", est, se, T * noise.total, 0.0])
    art.add_verdict(Verdict("trace_class", abs(est - T * noise.total) <= N_SIGMA * se,
                            N_SIGMA * se - abs(est - T * noise.total), seed + len(probes)))
    art.write_csv("isometry.csv", ["probe", "mc_lhs", "mc_stderr", "analytic", "analytic_err"], rows)

    # Lemma 2 with constant intensity: E|int_0^t S(t-s) s0 dW|_H^2
    s0 = cfg["reaction.s0"]
    traj = solve(backend.zero_state(1)[0], (0.0, T), constant_reaction(0.0, s0), noise, cfg["grid.dt"], seed=seed,
                 backend=backend, M=M, chunk=cfg["run.chunk"], workers=workers)
    series = MomentSeries.from_samples(traj.times, traj.observables["norm_sq_H"])
    sigma_sq = s0 * s0 * float(np.sum(backend.basis.rho_weights))
    bound = noise.total * sigma_sq * (1.0 - np.exp(-4.0 * series.times)) / 4.0
    # exact second moment of the discrete scheme u+ = S(dt)(u + s0 dW)
    B = backend.from_nodal(s0 * backend.noise_matrix)  # (K, modes)
    b = np.sum(B * B, axis=0)
    dt = cfg["grid.dt"]
    q = np.exp(2.0 * backend.mu * dt)
    n = np.rint(series.times / dt)
    exact = np.array([float(np.sum(b * dt * q * (1 - q ** k) / (1 - q))) for k in n])
    slack = (bound + N_SIGMA * series.stderr - series.estimate)[1:]  # both sides vanish at t = 0
    w = int(np.argmin(slack)) + 1
    art.add_verdict(Verdict("lemma2_bound", bool(np.all(slack >= 0)), float(slack[w - 1]), seed,
                            f"worst at t={series.times[w]:g}", w))
    dev = N_SIGMA * series.stderr[-1] - abs(series.estimate[-1] - exact[-1])
    art.add_verdict(Verdict("lemma2_exact", bool(dev >= 0), float(dev), seed,
                            f"E|u(T)|^2 = {series.estimate[-1]:.6g} vs {exact[-1]:.6g}"))
    art.write_columns("lemma2.csv", {"t": series.times, "estimate": series.estimate, "stderr": series.stderr,
                                     "exact_discrete": exact, "bound": bound})
    if _plots(cfg):
        plot_series(art, "lemma2.svg", [("MC", series.times, series.estimate, series.stderr),
                                        ("exact", series.times, exact), ("bound", series.times, bound)],
                    "stochastic convolution second moment", ylabel="E|u|_H^2")
    return {}


def _heat_run(cfg, art, workers, reaction, observable, tag):
    noise = build_noise(cfg)
    backend = build_backend(cfg, noise)
    traj = solve(backend.zero_state(1)[0], (0.0, cfg["grid.horizon"]), reaction, noise, cfg["grid.dt"],
                 seed=cfg.seed, backend=backend, M=cfg["run.M"], chunk=cfg["run.chunk"],
                 observables={tag: observable(backend)}, stride=cfg["grid.stride"], workers=workers)
    series = MomentSeries.from_samples(traj.times, traj.observables[tag], tag)
    art.write_columns("series.csv", {"t": series.times, "estimate": series.estimate, "stderr": series.stderr})
    plateau = plateau_test(series)
    art.add_verdict(Verdict(f"{cfg.name}_plateau", plateau.passed, plateau.p_value - 0.05, cfg.seed,
                            f"Mann-Kendall {plateau.trend}, p={plateau.p_value:.3g}, n={plateau.n}"))
    return noise, backend, series


def exp_thm1(cfg, art, workers):
    d = cfg["grid.d"]
    reaction = bounded_reaction(cfg["reaction.phi_amp"], cfg["reaction.phi_width"], cfg["reaction.sigma0"], d)
    noise, backend, series = _heat_run(cfg, art, workers, reaction, lambda b: b.norm_sq_H, "norm_sq_H")
    phi_sup, phi_l1, _ = bump_norms(cfg["reaction.phi_amp"], cfg["reaction.phi_width"], d)
    weight = backend.weight
    rho_l1 = max(weight.l1_norm(), backend.rho_l1_discrete())
    report = thm1_constant(phi_sup, phi_l1, weight.sup_norm(), rho_l1, cfg["reaction.sigma0"], noise.total, d, 0.0)
    row = report.csv_row()
    art.write_csv("bound.csv", list(row), [list(row.values())])
    art.write_text("bound.txt", report.text())
    art.add_verdict(sup_verdict(series, report.total, "thm1_bound", cfg.seed))
    if _plots(cfg):
        plot_series(art, "series.svg", [("E|u|_H^2", *_pack(series))], "weighted second moment", ylabel="E|u|_H^2")
    return {"bound_total": report.total}


def exp_thm2(cfg, art, workers):
    d = cfg["grid.d"]
    reaction = cutoff_reaction(cfg["reaction.N"], cfg["reaction.phi_amp"], cfg["reaction.phi_width"],
                               cfg["reaction.psi_amp"], cfg["reaction.psi_width"], d)
    noise, backend, series = _heat_run(cfg, art, workers, reaction, lambda b: (lambda s: b.l2_norm(s) ** 2),
                                       "norm_sq_L2")
    _, _, psi_l2sq = bump_norms(cfg["reaction.psi_amp"], cfg["reaction.psi_width"], d)
    report = thm2_constant(cfg["reaction.N"], 0.0, psi_l2sq, noise.total, d)
    fields = ["level", "noise_term", "total", "bounded", "N", "u0_l2", "psi_l2sq", "a", "d"]
    art.write_csv("bound.csv", fields, [[getattr(report, f) for f in fields]])
    art.add_verdict(sup_verdict(series, report.total, "thm2_bound", cfg.seed))
    if _plots(cfg):
        plot_series(art, "series.svg", [("E|u|_2^2", *_pack(series))], "L2 second moment", ylabel="E|u|_2^2")
    return {"bound_total": report.total}


def _lipschitz(cfg):
    return lipschitz_reaction(cfg["reaction.L"], cfg["reaction.f0"], cfg["reaction.s0"])


def exp_picard(cfg, art, workers):
    noise = build_noise(cfg)
    backend = build_backend(cfg, noise)
    res = picard_solve(backend.zero_state(1)[0], cfg["grid.horizon"], _lipschitz(cfg), noise, cfg["grid.dt"],
                       backend, M=cfg["run.M"], max_iters=cfg["check.max_iters"], tol=cfg["check.tol"],
                       seed=cfg.seed, chunk=cfg["run.chunk"], workers=workers)
    art.write_csv("picard_gamma.csv", ["iteration", "gamma", "tol", "theory"],
                  [[i + 1, g, t, res.gamma_theory] for i, (g, t) in enumerate(zip(res.gamma_series, res.gamma_tol))])
    art.write_csv("picard_diff.csv", ["iteration", "diff_B", "norm_B"],
                  [[i + 1, res.diff_B[i], res.norm_B[i + 1]] for i in range(res.diff_B.size)])
    if res.gamma_series.size:
        slack = res.gamma_theory + res.gamma_tol - res.gamma_series
        w = int(np.argmin(slack))
        art.add_verdict(Verdict("picard_gamma", bool(np.all(slack >= 0)), float(slack[w]), cfg.seed,
                                f"max gamma {res.gamma_series.max():.3g} vs {res.gamma_theory:g}", w))
    else:
        art.add_verdict(Verdict("picard_gamma", True, res.gamma_theory, cfg.seed, "exact after one iteration"))
    limit = cfg["check.iter_limit"]
    ok = res.converged and res.iterations <= limit
    art.add_verdict(Verdict("picard_iterations", ok, float(limit - res.iterations), cfg.seed,
                            f"{res.iterations} iterations to tol {cfg['check.tol']:g} (converged={res.converged})"))
    if _plots(cfg):
        it = np.arange(1, res.diff_B.size + 1)
        plot_series(art, "picard.svg", [("|v^m - v^(m-1)|_B", it, np.maximum(res.diff_B, 1e-300))],
                    "Picard differences", xlabel="iteration", logy=True)
    return {"gamma_theory": res.gamma_theory}


def exp_thm4lin(cfg, art, workers):
    noise = build_noise(cfg)
    backend = build_backend(cfg, noise)
    T0, dt, M, seed = cfg["grid.burn_in"], cfg["grid.dt"], cfg["run.M"], cfg.seed
    s0, f0 = cfg["reaction.s0"], cfg["reaction.f0"]
    a1, mu1 = noise.a[0], eigenvalue(mode_table(backend.d, backend.basis.cutoff)[0])
    target = a1 * s0 * s0 / (2.0 * abs(mu1))
    ones = np.ones(backend.nodes.shape[0])
    rows, est = [], []
    for burn in (T0, 2.0 * T0):
        traj = stochastic_convolution(None, lambda t, x: s0 * ones, (-burn, cfg["grid.horizon"]), noise, dt,
                                      backend, M=M, seed=seed, chunk=cfg["run.chunk"], workers=workers)
        sq = backend.norm_sq_H(traj.final)
        est.append((float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(M))))
        rows.append([burn, est[-1][0], est[-1][1], target])
    art.write_csv("ou.csv", ["burn_in", "estimate", "stderr", "exact"], rows)
    (e1, s1), (e2, s2) = est
    art.add_verdict(Verdict("ou_variance", abs(e1 - target) <= N_SIGMA * s1, N_SIGMA * s1 - abs(e1 - target), seed,
                            f"{e1:.6g} +- {s1:.3g} vs {target:g}"))
    art.add_verdict(Verdict("ou_burn_in", abs(e2 - e1) < s1, s1 - abs(e2 - e1), seed,
                            f"doubling burn-in moves the estimate by {abs(e2 - e1):.3g}"))
    # deterministic forcing alpha = f0 phi_0 gives the stationary coefficient f0 / |mu_1|
    phi0 = backend.basis.phi[0]
    drift = stochastic_convolution(lambda t, x: f0 * phi0, None, (-T0, cfg["grid.horizon"]), noise, dt, backend,
                                   M=2, seed=seed, workers=1)
    c0 = float(drift.final[0, 0])
    goal = f0 / abs(mu1)
    tol = abs(goal) * dt * abs(mu1) + 1e-12  # first-order bias of the exponential-Euler quadrature
    art.write_csv("drift.csv", ["c", "mean_coefficient", "target"], [[f0, c0, goal]])
    art.add_verdict(Verdict("ou_drift", abs(c0 - goal) <= tol, tol - abs(c0 - goal), seed,
                            f"coefficient {c0:.8g} vs {goal:g}"))
    # linear stability: f = sigma = 0, squared difference decays like exp(-4 t)
    pair = stability_pair(backend.zero_state(1)[0], np.ones(backend.state_size), zero_reaction(), noise,
                          (0.0, cfg["check.stability_horizon"]), cfg["check.stability_dt"], backend,
                          M=cfg["check.stability_M"], seed=seed, chunk=cfg["run.chunk"], workers=workers, linear=True)
    _write_pair(art, "stability.csv", pair)
    v, _ = _rate_verdict(pair, "linear_decay_rate", seed)
    art.add_verdict(v)
    art.add_verdict(_envelope_verdict(pair, "linear_envelope", seed))
    if _plots(cfg):
        plot_series(art, "stability.svg", [("E|u_a - u_b|^2", pair.times, pair.estimate),
                                           ("envelope", pair.times, pair.envelope())],
                    "linear stability", logy=True)
    return {"ou_target": target}


def exp_thm5(cfg, art, workers):
    noise = build_noise(cfg)
    backend = build_backend(cfg, noise)
    reaction, seed = _lipschitz(cfg), cfg.seed
    ens = build_stationary(reaction, noise, cfg["grid.horizon"], cfg["grid.burn_in"], cfg["check.iters"],
                           cfg["run.M"], cfg["grid.dt"], backend, seed=seed, chunk=cfg["run.chunk"], workers=workers)
    cert = ens.certificate
    L, a = cert.L, cert.a_total
    target = min(cert.iteration_ratio, 0.5 * L * L * (1.0 + 0.5 * a))
    art.write_csv("ratios.csv", ["iteration", "ratio", "tol", "target"],
                  [[i + 1, r, t, target] for i, (r, t) in enumerate(zip(ens.ratios, ens.ratio_tol))])
    art.write_csv("norms.csv", ["iteration", "diff_B", "norm_B", "norm_B_stderr", "bound"],
                  [[i, (ens.diff_B[i - 1] if i else 0.0), ens.norm_B[i], ens.norm_B_stderr[i], ens.uniform_bound]
                   for i in range(ens.norm_B.size)])
    if ens.ratios.size:
        slack = target + ens.ratio_tol - ens.ratios
        w = int(np.argmin(slack))
        art.add_verdict(Verdict("stationary_ratio", bool(np.all(slack >= 0)), float(slack[w]), seed,
                                f"max ratio {ens.ratios.max():.3g} vs {target:g}", w))
    else:
        art.add_verdict(Verdict("stationary_ratio", False, -math.inf, seed, "no ratio above the round-off floor"))
    slack = ens.uniform_bound + N_SIGMA * ens.norm_B_stderr - ens.norm_B
    w = int(np.argmin(slack))
    art.add_verdict(Verdict("stationary_uniform_bound", bool(np.all(slack >= 0)), float(slack[w]), seed,
                            f"C2={ens.C2:.4g}, cond1={cert.cond1:g}, bound={ens.uniform_bound:.4g}", w))
    pair = stability_pair(backend.zero_state(1)[0], np.ones(backend.state_size), reaction, noise,
                          (0.0, cfg["check.stability_horizon"]), cfg["grid.dt"], backend,
                          M=cfg["check.stability_M"], seed=seed, chunk=cfg["run.chunk"], workers=workers)
    _write_pair(art, "stability.csv", pair)
    v, _ = _rate_verdict(pair, "nonlinear_decay_rate", seed)
    art.add_verdict(v)
    art.add_verdict(_envelope_verdict(pair, "nonlinear_envelope", seed))
    if _plots(cfg):
        it = np.arange(1, ens.diff_B.size + 1)
        plot_series(art, "stationary.svg", [("|u^(n+1) - u^n|_B", it, np.maximum(ens.diff_B, 1e-300))],
                    "stationary iteration", xlabel="iteration", logy=True)
    return {"iteration_ratio": cert.iteration_ratio, "decay_rate": cert.decay_rate}


def exp_uniqueness(cfg, art, workers):
    noise = build_noise(cfg)
    backend = build_backend(cfg, noise)
    reaction, seed, dt, M = _lipschitz(cfg), cfg.seed, cfg["grid.dt"], cfg["run.M"]
    u0 = backend.zero_state(1)[0]
    v0 = np.ones(backend.state_size)
    pair = stability_pair(u0, v0, reaction, noise, (0.0, cfg["check.stability_horizon"]), dt, backend,
                          M=cfg["check.stability_M"], seed=seed, chunk=cfg["run.chunk"], workers=workers)
    _write_pair(art, "stability.csv", pair)
    fit = fit_decay(pair, floor_sigma=N_SIGMA)
    funcs = default_functionals(backend)
    n_cp = cfg["check.n_checkpoints"]
    # horizon with exp(-r T) < target, on a grid whose checkpoints are step multiples
    block = (n_cp - 1) * dt
    T = block * math.ceil(math.log(1.0 / cfg["check.target"]) / fit.rate / block)
    stride = int(round(T / dt)) // (n_cp - 1)
    run = dict(backend=backend, M=M, chunk=cfg["run.chunk"], stride=stride, store_states=True, workers=workers)
    A = solve(u0, (0.0, T), reaction, noise, dt, seed=seed, **run)
    B = solve(v0, (0.0, T), reaction, noise, dt, seed=seed + 1, **run)
    rows, tests = [], []
    for j, t in enumerate(A.times):
        res = energy_distance(measure_from_states(A.states[:, j], funcs), measure_from_states(B.states[:, j], funcs),
                              seed=seed + j)
        rows.append([t, res.statistic, res.p_value, res.threshold])
        tests.append(res)
    art.write_csv("distance.csv", ["t", "statistic", "p_value", "threshold"], rows)
    final = tests[-1]
    art.add_verdict(Verdict("uniqueness_final", final.below_threshold, final.threshold - final.statistic, seed,
                            f"T={T:g} (rate {fit.rate:.3g}), p={final.p_value:.3g}"))
    mono = [tests[j].statistic + tests[j + 1].threshold - tests[j + 1].statistic for j in range(len(tests) - 1)]
    w = int(np.argmin(mono))
    art.add_verdict(Verdict("uniqueness_monotone", bool(min(mono) >= 0), float(min(mono)), seed,
                            "statistic non-increasing up to the null 95% quantile", w))
    out = []
    # time shift: the law at T from time 0 equals the law at 0 from time -T
    S = solve(u0, (-T, 0.0), reaction, noise, dt, seed=seed, backend=backend, M=M, chunk=cfg["run.chunk"],
              store_states=False, workers=workers)
    res = energy_distance(measure_from_states(A.final, funcs), measure_from_states(S.final, funcs), seed=seed + 100)
    out.append(["time_shift", res.statistic, res.p_value, res.threshold])
    art.add_verdict(Verdict("time_shift", not res.rejected, res.p_value - 0.05, seed, f"p={res.p_value:.3g}"))
    # stationarity of u* at two times, on disjoint halves of the paths
    t1, t2 = cfg["check.t1"], cfg["check.t2"]
    ens = build_stationary(reaction, noise, t2, cfg["grid.burn_in"], cfg["check.stationary_iters"],
                           cfg["check.stationary_M"], dt, backend, seed=seed, sample_times=(t1, t2),
                           chunk=cfg["run.chunk"], workers=workers)
    half = ens.samples.shape[0] // 2
    res = energy_distance(measure_from_states(ens.samples[:half, 0], funcs),
                          measure_from_states(ens.samples[half:, 1], funcs), seed=seed + 200)
    out.append(["stationarity", res.statistic, res.p_value, res.threshold])
    art.add_verdict(Verdict("stationarity", not res.rejected, res.p_value - 0.05, seed,
                            f"t1={t1:g} t2={t2:g}, p={res.p_value:.3g}"))
    art.write_csv("tests.csv", ["test", "statistic", "p_value", "threshold"], out)
    if _plots(cfg):
        d = np.array(rows, dtype=float)
        plot_series(art, "distance.svg", [("energy statistic", d[:, 0], d[:, 1]), ("null 95%", d[:, 0], d[:, 3])],
                    "distance between laws", logy=True)
    return {"rate": fit.rate, "horizon_T": T}


def exp_doob(cfg, art, workers):
    noise = build_noise(cfg)
    T, M, seed, n = cfg["grid.horizon"], cfg["run.M"], cfg.seed, cfg["check.n_steps"]
    probes = {"g=1": lambda s: np.ones_like(np.asarray(s, dtype=float)),
              "g=sqrt(s)": lambda s: np.sqrt(np.asarray(s, dtype=float))}
    rows = []
    for i, (label, g) in enumerate(probes.items()):
        res = doob_probe(noise, g, T, M, seed + i, n)
        rows.append([label, res.lhs, res.lhs_stderr, res.rhs])
        v = res.verdict
        v.name, v.detail = f"doob[{label}]", f"{res.lhs:.4g} <= {res.rhs:.4g}"
        art.add_verdict(v)
    art.write_csv("doob.csv", ["probe", "lhs", "lhs_stderr", "rhs"], rows)
    return {}


RUNNERS = {
    "spectrum": exp_spectrum, "lemma1": exp_lemma1, "lemma2": exp_lemma2, "thm1": exp_thm1, "thm2": exp_thm2,
    "picard": exp_picard, "thm4lin": exp_thm4lin, "thm5": exp_thm5, "uniqueness": exp_uniqueness, "doob": exp_doob,
}


def run_experiment(cfg, directory=None, workers=None):
    """Run ``cfg`` and write its artifact directory; returns the ArtifactSet."""
    import os

    from ..spde_engine.stepping import default_workers

    art = ArtifactSet(directory or os.path.join(cfg.out, cfg.name))
    workers = workers or default_workers()
    extra = RUNNERS[cfg.name](cfg, art, workers) or {}
    return art.finish(cfg, extra)
