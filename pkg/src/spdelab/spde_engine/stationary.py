"""Picard iteration, the nonlinear stationary iteration and stability pairs.

Both fixed-point iterations are causal: iterate m+1 on [t, t+dt] only needs
iterate m up to time t. All iterates are therefore advanced together in a
single time sweep, and only per-time ensemble sums are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .stepping import DEFAULT_CHUNK, _initial, chunk_noise, default_workers, integrate, reaction_terms, \
    record_indices, run_chunks, time_grid


@dataclass(frozen=True)
class SmallnessCertificate:
    L: float
    a_total: float

    @property
    def cond1(self):
        return self.L ** 2 + self.L ** 2 * self.a_total

    @property
    def cond2(self):
        return self.L ** 2 / 2 + self.L ** 2 * self.a_total

    @property
    def eligible(self):
        return self.cond1 < 1.0 and self.cond2 < 2.0 / 3.0

    @property
    def iteration_ratio(self):
        """Contraction factor L^2/2 (1 + a) of the stationary iteration."""
        return self.L ** 2 / 2 * (1.0 + self.a_total)

    @property
    def decay_rate(self):
        """Gronwall exponent r = 2 - 3 (L^2/2 + L^2 a) of the nonlinear envelope."""
        return 2.0 - 3.0 * self.cond2


def picard_gamma(L, T, a_total):
    """Theoretical contraction factor L^2 T / 2 (1 + a / 2) of the well-posedness map."""
    return L ** 2 * T / 2 * (1.0 + 0.5 * a_total)


class NonContraction(RuntimeError):
    def __init__(self, message, gamma_series):
        super().__init__(message)
        self.gamma_series = np.asarray(gamma_series)


class _Sums:
    """Per-time ensemble sums for every level (associative, reduced in chunk order)."""

    def __init__(self, levels, n_times, size, keep_mean):
        self.n = 0
        self.norm = np.zeros((levels + 1, n_times))
        self.norm2 = np.zeros_like(self.norm)
        self.diff = np.zeros((levels + 1, n_times))  # diff[l] = |v^l - v^(l-1)|^2, l >= 1
        self.diff2 = np.zeros_like(self.diff)
        self.mean = np.zeros((levels + 1, n_times, size)) if keep_mean else None

    def add(self, other):
        self.n += other.n
        for name in ("norm", "norm2", "diff", "diff2"):
            getattr(self, name).__iadd__(getattr(other, name))
        if self.mean is not None:
            self.mean += other.mean

    def moments(self, name):
        s, s2 = getattr(self, name), getattr(self, name + "2")
        mean = s / self.n
        var = np.maximum(s2 / self.n - mean ** 2, 0.0) * self.n / max(self.n - 1, 1)
        return mean, np.sqrt(var / self.n)


def _level_sweep(backend, reaction, grid, dt, noise, seed, M, levels, init_fn, chunk, workers, keep_mean=False,
                 sample_idx=()):
    terms = reaction_terms(reaction, backend)
    sample_pos = {i: j for j, i in enumerate(sample_idx)}

    def work(first, m):
        dW = chunk_noise(noise, grid, seed, first, m, dt)
        sums = _Sums(levels, grid.size, backend.state_size, keep_mean)
        sums.n = m
        samples = np.empty((m, len(sample_idx), backend.state_size)) if sample_idx else None
        init = init_fn(first, m)
        state = np.broadcast_to(init, (levels + 1,) + init.shape).copy()

        def lagged(st, t):
            # level 0 only feels the semigroup; level l > 0 is driven by level l-1
            drift, inten = terms(st[:-1], t)
            pad = lambda v: None if v is None else np.concatenate([np.zeros_like(v[:1]), v])
            return pad(drift), pad(inten)

        def record(i, st):
            n = backend.norm_sq_H(st)
            sums.norm[:, i] = n.sum(axis=1)
            sums.norm2[:, i] = (n * n).sum(axis=1)
            dd = backend.norm_sq_H(st[1:] - st[:-1])
            sums.diff[1:, i] = dd.sum(axis=1)
            sums.diff2[1:, i] = (dd * dd).sum(axis=1)
            if keep_mean:
                sums.mean[:, i] = st.sum(axis=1)
            if i in sample_pos:
                samples[:, sample_pos[i]] = st[-1]

        integrate(backend, grid, dW, state, lagged, record, range(grid.size))
        return sums, samples

    parts = run_chunks(M, chunk, work, workers)
    total = _Sums(levels, grid.size, backend.state_size, keep_mean)
    for s, _ in parts:
        total.add(s)
    samples = np.concatenate([p[1] for p in parts]) if sample_idx else None
    return total, samples


def _b_norm(series, mask=None):
    s = series if mask is None else series[..., mask]
    return s.max(axis=-1)


def _ratio_tol(num, num_se, den, den_se):
    r = num / den
    return 3.0 * r * math.sqrt((num_se / num) ** 2 + (den_se / den) ** 2)


@dataclass
class PicardResult:
    times: np.ndarray
    converged: bool
    iterations: int
    gamma_series: np.ndarray
    gamma_tol: np.ndarray
    gamma_theory: float
    diff_B: np.ndarray
    norm_B: np.ndarray
    diff_series: np.ndarray
    diff_stderr: np.ndarray
    final_norm: np.ndarray
    final_norm_stderr: np.ndarray
    meta: dict = field(default_factory=dict)


def picard_solve(u0, T, reaction, noise, dt, backend, M=256, max_iters=8, tol=1e-8, seed=None,
                 chunk=DEFAULT_CHUNK, workers=None):
    """Pathwise Picard iteration v^{m+1} = Psi[v^m] with common noise, v^0(t) = S(t) u0.

    The measured factor is gamma_m = |v^{m+1} - v^m|_B / |v^m - v^{m-1}|_B
    with |w|_B = sup_t E|w(t)|_H^2 over the grid. The iteration converges at
    the first m with |v^m - v^{m-1}|_B <= tol * max(1, |v^m|_B).
    """
    grid = time_grid(0.0, T, dt)
    seed = noise.seed if seed is None else seed
    sums, _ = _level_sweep(backend, reaction, grid, dt, noise, seed, M, max_iters,
                           lambda first, m: _initial(u0, backend, m, first), chunk, workers or default_workers())
    diff, diff_se = sums.moments("diff")
    norm, norm_se = sums.moments("norm")
    diff_B = _b_norm(diff)[1:]
    norm_B = _b_norm(norm)
    iarg = np.argmax(diff, axis=1)[1:]
    se_B = diff_se[np.arange(1, max_iters + 1), iarg]
    iterations, converged = max_iters, False
    for m in range(1, max_iters + 1):
        if diff_B[m - 1] <= tol * max(1.0, norm_B[m]):
            iterations, converged = m, True
            break
    gammas, gtol = [], []
    for m in range(1, iterations):
        if diff_B[m - 1] == 0.0:
            break
        gammas.append(diff_B[m] / diff_B[m - 1])
        gtol.append(_ratio_tol(diff_B[m], se_B[m], diff_B[m - 1], se_B[m - 1]) if diff_B[m] > 0 else 0.0)
    gammas = np.array(gammas)
    streak = 0
    for g in gammas:
        streak = streak + 1 if g >= 1.0 else 0
        if streak >= 3:
            raise NonContraction("Picard map is not contracting (gamma >= 1 for 3 iterations)", gammas)
    last = iterations
    result = PicardResult(
        times=grid, converged=converged, iterations=iterations, gamma_series=gammas, gamma_tol=np.array(gtol),
        gamma_theory=picard_gamma(reaction.L, T, noise.total), diff_B=diff_B, norm_B=norm_B,
        diff_series=diff[1:], diff_stderr=diff_se[1:], final_norm=norm[last], final_norm_stderr=norm_se[last],
        meta={"dt": dt, "T": T, "M": M, "seed": seed, "max_iters": max_iters, "tol": tol,
              "reaction": reaction.echo(), **backend.describe()},
    )
    return result


@dataclass
class StationaryEnsemble:
    """Output of the stationary iteration.

    ``diff_B[n]`` = sup_{t >= 0} E|u^{n+1} - u^n|_H^2 (n = 0 compares u^1 with u^0 = 0),
    ``norm_B[n]`` = sup_{t >= 0} E|u^n|_H^2. ``samples`` holds the last
    iterate at ``sample_times`` for every path.
    """

    times: np.ndarray
    certificate: SmallnessCertificate
    diff_B: np.ndarray
    diff_B_stderr: np.ndarray
    ratios: np.ndarray
    ratio_tol: np.ndarray
    norm_B: np.ndarray
    norm_B_stderr: np.ndarray
    C0: float
    C1: float
    C2: float
    uniform_bound: float
    norm_series: np.ndarray
    norm_series_stderr: np.ndarray
    sample_times: np.ndarray
    samples: np.ndarray | None
    meta: dict = field(default_factory=dict)

    @property
    def final_norm(self):
        return self.norm_series[-1]


def build_stationary(reaction, noise, window, burn_in, picard_iters, M, dt, backend, seed=None,
                     sample_times=(), chunk=DEFAULT_CHUNK, workers=None, rel_floor=1e-20):
    """Iterate du_{n+1} = (A u_{n+1} + f(u_n)) dt + sigma(u_n) dW from u_0 = 0 on (-T0, T1).

    Every iterate is a stochastic convolution started from 0 at -T0 with
    common noise. Contraction ratios are reported while the differences
    stay above ``rel_floor`` times the first one (below that they are
    round-off).
    """
    cert = SmallnessCertificate(reaction.L, noise.total)
    if not cert.eligible:
        raise ValueError(f"smallness conditions fail: cond1={cert.cond1:g}, cond2={cert.cond2:g}")
    if not burn_in > 0:
        raise ValueError("burn-in T0 must be positive")
    if backend.tag != "gauss":
        raise ValueError("the stationary construction needs the exponentially contracting gauss backend")
    grid = time_grid(-burn_in, window, dt)
    seed = noise.seed if seed is None else seed
    sample_idx = [int(np.argmin(np.abs(grid - t))) for t in sample_times]
    sums, samples = _level_sweep(backend, reaction, grid, dt, noise, seed, M, picard_iters,
                                 lambda first, m: backend.zero_state(m), chunk, workers or default_workers(),
                                 keep_mean=True, sample_idx=sample_idx)
    after = grid >= -1e-12
    diff, diff_se = sums.moments("diff")
    norm, norm_se = sums.moments("norm")
    d_after = diff[1:, after]
    arg = np.argmax(d_after, axis=1)
    diff_B = d_after[np.arange(picard_iters), arg]
    diff_B_se = diff_se[1:, after][np.arange(picard_iters), arg]
    n_after = norm[:, after]
    narg = np.argmax(n_after, axis=1)
    norm_B = n_after[np.arange(picard_iters + 1), narg]
    norm_B_se = norm_se[:, after][np.arange(picard_iters + 1), narg]
    ratios, rtol = [], []
    for n in range(1, picard_iters):
        if diff_B[n] <= rel_floor * diff_B[0]:
            break
        ratios.append(diff_B[n] / diff_B[n - 1])
        rtol.append(_ratio_tol(diff_B[n], diff_B_se[n], diff_B[n - 1], diff_B_se[n - 1]))
    # C0, C1 measured on u^1 = int S f(0) ds + int S sigma(0) dW
    mean1 = sums.mean[1] / sums.n
    mean_sq = backend.norm_sq_H(mean1)[after]
    C0 = 2.0 * float(mean_sq.max())
    C1 = 2.0 * float(np.max(norm[1, after] - mean_sq))
    C2 = 2.0 * C0 + 2.0 * C1
    bound = C2 / (1.0 - cert.cond1)
    return StationaryEnsemble(
        times=grid, certificate=cert, diff_B=diff_B, diff_B_stderr=diff_B_se, ratios=np.array(ratios),
        ratio_tol=np.array(rtol), norm_B=norm_B, norm_B_stderr=norm_B_se, C0=C0, C1=C1, C2=C2,
        uniform_bound=bound, norm_series=norm, norm_series_stderr=norm_se,
        sample_times=grid[sample_idx] if sample_idx else np.array([]), samples=samples,
        meta={"dt": dt, "burn_in": burn_in, "T1": window, "M": M, "seed": seed, "iters": picard_iters,
              "reaction": reaction.echo(), **backend.describe()},
    )


@dataclass
class DecaySeries:
    times: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    M: int
    envelope_rate: float
    envelope_K: float
    meta: dict = field(default_factory=dict)

    def envelope(self):
        return self.envelope_K * np.exp(-self.envelope_rate * (self.times - self.times[0])) * self.estimate[0]


def stability_pair(u0_a, u0_b, reaction, noise, window, dt, backend, M=256, seed=None, chunk=DEFAULT_CHUNK,
                   stride=1, workers=None, linear=None):
    """E|u_a(t) - u_b(t)|_H^2 for two initial states driven by identical noise per path.

    The theoretical envelope is exp(-4 (t - t0)) (K = 1) for the linear case
    and 3 exp(-r (t - t0)), r = 2 - 3 (L^2/2 + L^2 a), otherwise.
    """
    t0, T = window
    grid = time_grid(t0, T, dt)
    seed = noise.seed if seed is None else seed
    terms = reaction_terms(reaction, backend)
    idx = record_indices(grid.size, stride)
    pos = {i: j for j, i in enumerate(idx)}

    def work(first, m):
        dW = chunk_noise(noise, grid, seed, first, m, dt)
        a = _initial(u0_a, backend, m, first)
        b = _initial(u0_b, backend, m, first)
        if a.shape != b.shape:
            raise ValueError("mismatched initial states")
        out = np.empty((m, len(idx)))

        def record(i, st):
            out[:, pos[i]] = backend.norm_sq_H(st[0] - st[1])

        integrate(backend, grid, dW, np.stack([a, b]), terms, record, idx)
        return out

    sq = np.concatenate(run_chunks(M, chunk, work, workers or default_workers()))
    mean = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / math.sqrt(M) if M > 1 else np.zeros_like(mean)
    if linear is None:
        linear = reaction.zero_f and reaction.zero_sigma
    cert = SmallnessCertificate(reaction.L, noise.total)
    rate, K = (4.0, 1.0) if linear else (cert.decay_rate, 3.0)
    return DecaySeries(grid[idx], mean, se, M, rate, K,
                       meta={"dt": dt, "window": window, "seed": seed, "reaction": reaction.echo(),
                             **backend.describe()})
