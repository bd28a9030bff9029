"""Monte-Carlo moment series, verdicts, decay fits and distribution tests."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import pymannkendall
from scipy import stats
from scipy.spatial.distance import cdist

from .noise_field import _deterministic_integrals

N_PERMUTATIONS = 999
N_SIGMA = 3.0


@dataclass
class MomentSeries:
    times: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    M: int
    tag: str = "H"

    @classmethod
    def from_samples(cls, times, samples, tag="H"):
        samples = np.asarray(samples, dtype=float)
        M = samples.shape[0]
        if M < 2:
            raise ValueError("need at least 2 trajectories")
        return cls(np.asarray(times, dtype=float), samples.mean(axis=0),
                   samples.std(axis=0, ddof=1) / math.sqrt(M), M, tag)


def moment_series(ensemble, weight=None, quadrature=None, observable="norm_sq_H", tag=None):
    """Pointwise mean and stderr of the squared weighted norm.

    ``ensemble`` is a Trajectory (its recorded observable is used unless a
    weight and quadrature are given together with stored nodal states) or
    an array of nodal samples with shape (M, n_times, N) plus ``times`` in
    the weight/quadrature-free form ``(times, array)``.
    """
    if isinstance(ensemble, tuple):
        times, arr = ensemble
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 3:
            if weight is None or quadrature is None:
                raise ValueError("nodal samples need a weight and a quadrature")
            arr = (arr * arr) @ (quadrature.weights * weight(quadrature.nodes))
        return MomentSeries.from_samples(times, arr, tag or "H")
    if weight is not None and quadrature is not None and ensemble.states is not None:
        states = ensemble.states
        sq = (states * states) @ (quadrature.weights * weight(quadrature.nodes))
        return MomentSeries.from_samples(ensemble.times, sq, tag or weight.kind)
    return MomentSeries.from_samples(ensemble.times, ensemble.observables[observable], tag or observable)


@dataclass
class Verdict:
    name: str
    passed: bool
    margin: float
    seed: int | None = None
    detail: str = ""
    index: int | None = None

    @property
    def label(self):
        return "PASS" if self.passed else "FAIL"


def sup_verdict(series, bound, name="sup_bound", seed=None):
    """PASS iff estimate <= bound + 3 stderr at every time; margin is the worst slack."""
    est = np.asarray(series.estimate, dtype=float)
    if est.size == 0:
        raise ValueError("empty series")
    slack = bound + N_SIGMA * np.nan_to_num(series.stderr) - est
    worst = int(np.argmin(slack))
    passed = bool(np.all(slack >= 0))
    return Verdict(name, passed, float(slack[worst]), seed,
                   f"worst at t={series.times[worst]:g}: {est[worst]:.6g} vs bound {bound:.6g}", worst)


@dataclass
class DecayFit:
    rate: float
    intercept: float
    ci: float
    n_used: int
    shortened: bool
    stderr: float = 0.0


def fit_decay(series, window=None, level=0.95, floor_sigma=None):
    """Least-squares fit log(estimate) = intercept - rate * t.

    The window ends at the first nonpositive estimate (or, with
    ``floor_sigma``, at the first estimate within ``floor_sigma`` stderrs
    of zero), and the fit is then flagged as shortened. ``ci`` is the
    half-width of the two-sided ``level`` interval for the rate.
    """
    t = np.asarray(series.times, dtype=float)
    y = np.asarray(series.estimate, dtype=float)
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
        t, y = t[keep], y[keep]
        se = np.asarray(series.stderr, dtype=float)[keep] if floor_sigma else None
    else:
        se = np.asarray(series.stderr, dtype=float) if floor_sigma else None
    bad = y <= 0
    if floor_sigma:
        bad |= y <= floor_sigma * se
    shortened = bool(bad.any())
    if shortened:
        stop = int(np.argmax(bad))
        t, y = t[:stop], y[:stop]
    if t.size < 3:
        raise ValueError("fewer than 3 positive points in the fit window")
    res = stats.linregress(t, np.log(y))
    q = stats.t.ppf(0.5 + level / 2, t.size - 2)
    return DecayFit(rate=float(-res.slope), intercept=float(res.intercept), ci=float(q * res.stderr),
                    n_used=int(t.size), shortened=shortened, stderr=float(res.stderr))


@dataclass
class EmpiricalMeasure:
    samples: np.ndarray  # (n, p)
    names: tuple
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[1] != len(self.names):
            raise ValueError("sample columns must match the functional names")

    @property
    def n(self):
        return self.samples.shape[0]

    def mean(self):
        return self.samples.mean(axis=0)


def default_functionals(backend, n_coeffs=8):
    """H-norm, the first spectral coefficients and the weighted mean int u rho."""
    funcs = {"norm_H": lambda s: np.sqrt(backend.norm_sq_H(s))}
    if backend.tag == "gauss":
        for j in range(min(n_coeffs, backend.state_size)):
            funcs[f"c{j}"] = (lambda j: lambda s: s[..., j])(j)
        rho_w = backend.basis.rho_weights
    else:
        rho_w = backend.rho_weights
    funcs["mean_rho"] = lambda s: backend.to_nodal(s) @ rho_w
    return funcs


def measure_from_states(states, functionals):
    cols = [np.asarray(fn(states), dtype=float).reshape(-1) for fn in functionals.values()]
    return EmpiricalMeasure(np.stack(cols, axis=1), tuple(functionals))


def kb_average(trajectory, functionals, T, sample_count, seed=0):
    """Krylov-Bogoliubov time average: functional samples at uniform random times in [t0, t0 + T].

    Draws (path, time) pairs; when more samples are requested than there
    are (path, grid time) pairs, sampling is with replacement and flagged.
    """
    times = trajectory.times
    if trajectory.states is None:
        raise ValueError("kb_average needs stored states")
    if times[-1] - times[0] < T * (1 - 1e-12):
        raise ValueError("trajectory horizon shorter than T")
    rng = np.random.default_rng(seed)
    M = trajectory.states.shape[0]
    s = rng.uniform(times[0], times[0] + T, sample_count)
    t_idx = np.clip(np.searchsorted(times, s, side="right") - 1, 0, times.size - 1)
    n_pairs = M * int(np.searchsorted(times, times[0] + T, side="right"))
    replace = sample_count > n_pairs
    paths = rng.integers(0, M, sample_count)
    states = trajectory.states[paths, t_idx]
    meas = measure_from_states(states, functionals)
    meas.flags = {"with_replacement": bool(replace), "T": T}
    return meas


@dataclass
class EnergyTest:
    statistic: float
    p_value: float
    threshold: float
    n_perm: int
    n_a: int
    n_b: int

    @property
    def rejected(self):
        return self.p_value < 0.05

    @property
    def below_threshold(self):
        return self.statistic <= self.threshold


def _energy_from_indicator(D, z, n, m):
    # z: (N, P) 0/1 columns marking membership of the first sample
    Dz = D @ z
    s_aa = np.einsum("ip,ip->p", z, Dz)
    s_all = D.sum()
    s_ab = Dz.sum(axis=0) - s_aa
    s_bb = s_all - 2 * s_ab - s_aa
    return 2.0 * s_ab / (n * m) - s_aa / n ** 2 - s_bb / m ** 2


def energy_statistic(x, y):
    """V-statistic 2 E|X-Y| - E|X-X'| - E|Y-Y'| (nonnegative)."""
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    return float(2 * cdist(x, y).mean() - cdist(x, x).mean() - cdist(y, y).mean())


def energy_distance(A, B, n_perm=N_PERMUTATIONS, seed=0, standardize=True, batch=128):
    """Two-sample energy distance with a permutation p-value.

    Columns are standardized with pooled statistics (invariant under
    relabeling, so the permutation null is unaffected).
    """
    if tuple(A.names) != tuple(B.names):
        raise ValueError("functional families differ")
    x, y = A.samples, B.samples
    n, m = x.shape[0], y.shape[0]
    pooled = np.concatenate([x, y])
    if standardize:
        scale = pooled.std(axis=0)
        scale[scale == 0] = 1.0
        pooled = (pooled - pooled.mean(axis=0)) / scale
    D = cdist(pooled, pooled)
    z0 = np.zeros((n + m, 1))
    z0[:n] = 1.0
    observed = float(_energy_from_indicator(D, z0, n, m)[0])
    observed = max(observed, 0.0)
    rng = np.random.default_rng(seed)
    null = np.empty(n_perm)
    done = 0
    while done < n_perm:
        b = min(batch, n_perm - done)
        z = np.zeros((n + m, b))
        for j in range(b):
            z[rng.permutation(n + m)[:n], j] = 1.0
        null[done:done + b] = _energy_from_indicator(D, z, n, m)
        done += b
    p = (1.0 + np.count_nonzero(null >= observed - 1e-12 * max(1.0, abs(observed)))) / (n_perm + 1.0)
    return EnergyTest(observed, float(p), float(np.quantile(null, 0.95)), n_perm, n, m)


@dataclass
class DoobResult:
    lhs: float
    lhs_stderr: float
    rhs: float
    verdict: Verdict


def doob_probe(noise_spec, g, T, M, seed, n_steps=1000):
    """MC check of E sup_{v <= T} |int_0^v sum sqrt(a_k) g_k dbeta_k|^2 <= 4 sum a_k int_0^T g_k^2."""
    if M < 100:
        raise ValueError("M must be >= 100")
    running, rhs, _ = _deterministic_integrals(g, noise_spec, T, M, seed, n_steps)
    sup_sq = np.max(running ** 2, axis=1, initial=0.0)
    lhs, se = float(sup_sq.mean()), float(sup_sq.std(ddof=1) / math.sqrt(M))
    rhs4 = 4.0 * rhs
    margin = rhs4 + N_SIGMA * se - lhs
    return DoobResult(lhs, se, rhs4, Verdict("doob", bool(margin >= 0), float(margin), seed))


@dataclass
class PlateauResult:
    trend: str
    p_value: float
    passed: bool
    n: int


def plateau_test(series, alpha=0.05, thin=1):
    """Mann-Kendall trend test (Hamed-Rao variance correction) on the second half of a series.

    PASS means no significant trend at level ``alpha``.
    """
    est = np.asarray(series.estimate if hasattr(series, "estimate") else series, dtype=float)
    half = est[est.size // 2:][::thin]
    if half.size < 4 or np.ptp(half) == 0:
        return PlateauResult("no trend", 1.0, True, int(half.size))
    res = pymannkendall.hamed_rao_modification_test(half, alpha=alpha)
    p = float(res.p)
    return PlateauResult(res.trend, p, bool(p >= alpha), int(half.size))


def write_series_csv(path, series):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "estimate", "stderr"])
        for t, e, s in zip(series.times, series.estimate, series.stderr):
            writer.writerow([repr(float(t)), repr(float(e)), repr(float(s))])


def write_verdicts_csv(path, verdicts):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "verdict", "margin", "seed"])
        for v in verdicts:
            writer.writerow([v.name, v.label, repr(float(v.margin)), "" if v.seed is None else v.seed])
