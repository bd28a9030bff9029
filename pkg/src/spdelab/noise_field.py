"""Bounded orthonormal noise bases and truncated Q-Wiener increments.

Increments are stored *unscaled*: ``increments[m, k, i]`` is the increment of
the standard Brownian motion beta_k over the i-th grid interval for path m.
The factor sqrt(a_k) is applied when the noise is assembled into a field.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

TWO_PI = 2.0 * math.pi

# branch tags inside the seed tree
FORWARD, BACKWARD = 0, 1


def default_variances(K):
    """Geometric mode variances a_k = 2^-k, k = 1..K."""
    return tuple(2.0 ** -k for k in range(1, K + 1))


def _trig_1d(j, x):
    # j = 0, 1, 2, ... -> sin(1x), cos(1x), sin(2x), cos(2x), ...
    n = j // 2 + 1
    return np.sin(n * x) if j % 2 == 0 else np.cos(n * x)


def _local_indices(d, count):
    # tensor products of the 1-D trig family, low total order first
    out = []
    level = 0
    while len(out) < count:
        for combo in itertools.product(range(level + 1), repeat=d):
            if sum(combo) == level:
                out.append(combo)
        level += 1
    return out[:count]


def corner_windows(d):
    """The 2^d windows with corners in {-1, 0}^d, i.e. covering [-2pi, 2pi]^d."""
    return tuple(itertools.product((-1, 0), repeat=d))


@dataclass(frozen=True)
class BasisSpec:
    """Windowed trigonometric basis, or the eigenbasis of the Gaussian operator.

    For ``kind='trig'`` mode k (0-based) lives on window ``k % len(windows)``
    and uses local tensor function ``k // len(windows)``, so truncating K
    keeps the lowest frequencies of every window. Each window is the cube
    ``window_length * (corner + [0, 1)^d)``.
    """

    K: int
    d: int = 1
    window_length: float = TWO_PI
    normalization: float = 1.0 / math.sqrt(math.pi)
    windows: tuple = ((0,),)
    kind: str = "trig"
    cutoff: int = 32

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.kind not in ("trig", "eigen"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if any(len(w) != self.d for w in self.windows):
            raise ValueError("window corners must have d components")

    @property
    def factor(self):
        # per-coordinate normalization rescaled to the window length
        return self.normalization * math.sqrt(TWO_PI / self.window_length)

    def mode(self, k):
        nw = len(self.windows)
        return self.windows[k % nw], _local_indices(self.d, k // nw + 1)[-1]

    def evaluate(self, points):
        """Matrix E with E[k, i] = e_k(points[i]); shape (K, N)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if self.kind == "eigen":
            from .gauss_operator import eigenfunction_eval, mode_table

            table = mode_table(self.d, self.cutoff)
            if self.K > len(table):
                raise ValueError("K exceeds the eigenbasis cutoff")
            return np.stack([eigenfunction_eval(table[k], pts) for k in range(self.K)])
        nw = len(self.windows)
        local = _local_indices(self.d, (self.K + nw - 1) // nw)
        L = self.window_length
        out = np.zeros((self.K, pts.shape[0]))
        for w, corner in enumerate(self.windows):
            lo = L * np.asarray(corner, dtype=float)
            inside = np.all((pts >= lo) & (pts < lo + L), axis=1)
            y = (pts[inside] - lo) * (TWO_PI / L)
            for j, combo in enumerate(local):
                k = j * nw + w
                if k >= self.K:
                    break
                vals = np.full(y.shape[0], self.factor ** self.d)
                for axis, c in enumerate(combo):
                    vals = vals * _trig_1d(c, y[:, axis])
                out[k, inside] = vals
        return out

    def sup_bound(self):
        """Analytic sup-norm bound max_k sup |e_k|."""
        if self.kind == "eigen":
            return np.inf
        return self.factor ** self.d


def build_basis(K, d=1, windows=None, window_length=TWO_PI, kind="trig", cutoff=32):
    """Bounded orthonormal basis e_1..e_K of windowed trigonometric functions.

    Each function is a tensor product of sin(n x), cos(n x) (n >= 1), scaled
    by 1/sqrt(pi) per coordinate so the L2 norm on a 2pi window is one and
    the sup-norm is at most one.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if windows is None:
        windows = ((0,) * d,)
    return BasisSpec(K=K, d=d, window_length=window_length, windows=tuple(tuple(w) for w in windows),
                     kind=kind, cutoff=cutoff)


def basis_gram(basis, order=48):
    """Gram matrix of the trig basis by Gauss-Legendre quadrature on every window."""
    x, w = leggauss(order)
    L = basis.window_length
    grids = np.meshgrid(*[x] * basis.d, indexing="ij")
    wgrid = np.prod(np.meshgrid(*[w] * basis.d, indexing="ij"), axis=0).ravel()
    local = np.stack([g.ravel() for g in grids], axis=-1)
    gram = np.zeros((basis.K, basis.K))
    for corner in basis.windows:
        lo = L * np.asarray(corner, dtype=float)
        pts = lo + 0.5 * L * (local + 1.0)
        E = basis.evaluate(pts)
        gram += (E * (wgrid * (0.5 * L) ** basis.d)) @ E.T
    return gram


@dataclass(frozen=True)
class NoiseSpec:
    a: tuple
    basis: BasisSpec
    seed: int = 0

    def __post_init__(self):
        if len(self.a) != self.basis.K:
            raise ValueError("need one variance per basis mode")
        if any(not ak > 0 for ak in self.a):
            raise ValueError("mode variances must be positive")

    @property
    def total(self):
        return float(sum(self.a))

    @property
    def K(self):
        return self.basis.K

    def sqrt_a(self):
        return np.sqrt(np.asarray(self.a, dtype=float))


def make_noise(K, d=1, a=None, seed=0, **basis_kw):
    basis = build_basis(K, d=d, **basis_kw)
    return NoiseSpec(a=tuple(a) if a is not None else default_variances(K), basis=basis, seed=seed)


@dataclass
class NoisePath:
    """Sampled increments on a time grid.

    ``increments`` has shape (M, K, steps); a single path has M = 1 and
    ``path(0)`` returns its (K, steps) block.
    """

    time_grid: np.ndarray
    increments: np.ndarray
    two_sided: bool
    seed: int
    first_path: int = 0
    seed_negative: int | None = None

    @property
    def M(self):
        return self.increments.shape[0]

    @property
    def dt(self):
        return np.diff(self.time_grid)

    def path(self, m=0):
        return self.increments[m]

    def values(self):
        """beta_k(t) on the grid, zero at t = 0 (or at the first grid time)."""
        cum = np.concatenate([np.zeros(self.increments.shape[:-1] + (1,)), np.cumsum(self.increments, axis=-1)],
                             axis=-1)
        zero = int(np.flatnonzero(self.time_grid == 0.0)[0]) if self.two_sided else 0
        return cum - cum[..., zero:zero + 1]


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("time grid must be a 1-D array")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return grid


def _normals(seed, branch, path, mode, n):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(branch, path, mode))
    return np.random.default_rng(ss).standard_normal(n)


def _branch_increments(seed, branch, paths, K, dts):
    out = np.empty((len(paths), K, dts.size))
    scale = np.sqrt(dts)
    for i, p in enumerate(paths):
        for k in range(K):
            out[i, k] = _normals(seed, branch, p, k, dts.size) * scale
    return out


def sample_path(spec, grid, seed=None, paths=1, first_path=0):
    """Sample one-sided increments, one independent substream per (path, mode).

    Parameters
    ----------
    spec : NoiseSpec
    grid : array_like
        Strictly increasing times; increments are drawn per interval.
    seed : int, optional
        Overrides ``spec.seed``.
    paths : int
        Number of trajectories; path indices are ``first_path + m``.
    """
    grid = _check_grid(grid)
    seed = spec.seed if seed is None else seed
    dts = np.diff(grid)
    idx = range(first_path, first_path + paths)
    inc = _branch_increments(seed, FORWARD, idx, spec.K, dts)
    return NoisePath(grid, inc, False, seed, first_path)


def extend_two_sided(spec, grid, seed=None, seed_negative=None, paths=1, first_path=0):
    """Two-sided increments W(t) = beta1(t) for t >= 0 and beta2(-t) for t <= 0.

    The negative branch is drawn outward from 0, so extending the grid to
    earlier times keeps the increments already present near 0.
    """
    grid = _check_grid(grid)
    zero = np.flatnonzero(grid == 0.0)
    if zero.size != 1:
        raise ValueError("0 must be a grid point")
    z = int(zero[0])
    seed = spec.seed if seed is None else seed
    seed_neg = seed if seed_negative is None else seed_negative
    idx = range(first_path, first_path + paths)
    pos = _branch_increments(seed, FORWARD, idx, spec.K, np.diff(grid[z:]))
    back_dts = -np.diff(grid[:z + 1][::-1])
    neg = _branch_increments(seed_neg, BACKWARD, idx, spec.K, back_dts)
    inc = np.concatenate([-neg[..., ::-1], pos], axis=-1)
    return NoisePath(grid, inc, True, seed, first_path, seed_negative)


def assemble(spec, coeffs, points):
    """Field sum_k sqrt(a_k) coeffs[..., k] e_k(x) at the given points."""
    E = spec.basis.evaluate(points)
    return (np.asarray(coeffs) * spec.sqrt_a()) @ E


@dataclass
class ProbeResult:
    mc_lhs: float
    mc_stderr: float
    analytic_rhs: float
    analytic_err: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def within_3sigma(self):
        return abs(self.mc_lhs - self.analytic_rhs) <= 3.0 * self.mc_stderr + self.analytic_err


def _as_mode_functions(g, K):
    if callable(g):
        return [g] * K
    g = list(g)
    if len(g) != K:
        raise ValueError("need one integrand per mode")
    return g


def _deterministic_integrals(g, spec, T, M, seed, n_steps):
    grid = np.linspace(0.0, T, n_steps + 1)
    mid = 0.5 * (grid[1:] + grid[:-1])
    gs = _as_mode_functions(g, spec.K)
    G = np.stack([np.broadcast_to(np.asarray(gk(mid), dtype=float), mid.shape) for gk in gs])
    G = G * spec.sqrt_a()[:, None]
    noise = sample_path(spec, grid, seed=seed, paths=M)
    # running stochastic integral per path, midpoint evaluation of the
    # deterministic integrand
    running = np.cumsum(np.einsum("mki,ki->mi", noise.increments, G), axis=1)
    rhs, err = 0.0, 0.0
    for ak, gk in zip(spec.a, gs):
        val, e = integrate.quad(lambda s: float(np.asarray(gk(s))) ** 2, 0.0, T, limit=200)
        rhs += ak * val
        err += ak * e
    return running, rhs, err


def ito_isometry_probe(g, spec, T, M, seed, n_steps=512):
    """MC check of E|int_0^T sum_k sqrt(a_k) g_k dbeta_k|^2 = sum_k a_k int_0^T g_k^2.

    ``g`` is a callable of s (shared by all modes) or a list of callables,
    one per mode.
    """
    if M < 100:
        raise ValueError("M must be >= 100")
    running, rhs, err = _deterministic_integrals(g, spec, T, M, seed, n_steps)
    sq = running[:, -1] ** 2
    return ProbeResult(float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(M)), float(rhs), float(err))


def write_noise_csv(path, noise, m=0):
    """Replay file: header with the seed, then rows (t, mode, increment)."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# seed={noise.seed} path={noise.first_path + m} two_sided={str(noise.two_sided).lower()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "mode", "increment"])
        inc = noise.increments[m]
        for k in range(inc.shape[0]):
            for i in range(inc.shape[1]):
                writer.writerow([repr(float(noise.time_grid[i])), k + 1, repr(float(inc[k, i]))])


def read_noise_csv(path):
    """Inverse of :func:`write_noise_csv`; returns (seed, times, increments[K, steps])."""
    with open(path) as fh:
        header = fh.readline().lstrip("# ").split()
        meta = dict(item.split("=") for item in header)
        rows = list(csv.DictReader(fh))
    K = max(int(r["mode"]) for r in rows)
    inc = np.array([float(r["increment"]) for r in rows]).reshape(K, -1)
    times = np.array([float(r["t"]) for r in rows[: inc.shape[1]]])
    return int(meta["seed"]), times, inc
