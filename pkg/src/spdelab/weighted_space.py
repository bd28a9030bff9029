"""Admissible weights, weighted L2 norms and quadrature rules.

A field is a plain numpy array of samples aligned with the nodes of a
:class:`Quadrature` (the last axis indexes nodes; leading axes are batch
axes, e.g. an ensemble of trajectories).
"""

from __future__ import annotations

import csv
import functools
import math
import warnings
from dataclasses import dataclass, field

import mpmath
import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

WEIGHT_KINDS = ("exp_decay", "poly_decay", "gaussian")
DOMAIN_TAGS = ("full_space", "half_space", "torus_truncation")

# largest quadrature order the node generators are allowed to produce
MAX_ORDER = 160


def _radius(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return np.abs(x)
    if x.shape[-1] != d:
        raise ValueError(f"points must have trailing dimension {d}, got shape {x.shape}")
    return np.sqrt(np.sum(x * x, axis=-1))


def sphere_area(d):
    """Surface area of the unit sphere in R^d (2 for d=1)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class WeightFunction:
    """Radial weight rho on R^d or on the half-space {x_d > 0}."""

    kind: str
    d: int = 1
    half_space: bool = False
    gamma: float | None = None
    n: int | None = None

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-r * r)
        if self.kind == "exp_decay":
            return np.exp(-self.gamma * r)
        return 1.0 / (1.0 + r ** self.n)

    def __call__(self, x):
        return self.radial(_radius(x, self.d))

    def sup_norm(self):
        # every family is radially decreasing with rho(0) = 1
        return float(self.radial(0.0))

    def l1_norm(self):
        """Integral of rho over its domain, by radial quadrature."""
        val, err = integrate.quad(lambda r: self.radial(r) * r ** (self.d - 1), 0.0, np.inf, limit=200)
        total = sphere_area(self.d) * val
        return 0.5 * total if self.half_space else total

    def mass_outside_ball(self, radius):
        val, _ = integrate.quad(lambda r: self.radial(r) * r ** (self.d - 1), radius, np.inf, limit=200)
        out = sphere_area(self.d) * val
        return 0.5 * out if self.half_space else out

    def truncation_radius(self, rel_mass=1e-8, start=1.0):
        """Smallest R (on a 1.05 geometric ladder) whose ball keeps all but rel_mass of the weight."""
        total = self.l1_norm()
        r = start
        while self.mass_outside_ball(r) > rel_mass * total:
            r *= 1.05
            if r > 1e6:
                raise ValueError("weight tail too heavy to truncate")
        return r

    def to_config(self):
        lines = [f"kind={self.kind}", f"d={self.d}", f"half_space={str(self.half_space).lower()}"]
        if self.gamma is not None:
            lines.append(f"gamma={self.gamma!r}")
        if self.n is not None:
            lines.append(f"n={self.n}")
        return "\n".join(lines)

    @classmethod
    def from_config(cls, text):
        kv = _parse_block(text)
        return make_weight(
            kv["kind"],
            gamma=float(kv["gamma"]) if "gamma" in kv else None,
            n=int(kv["n"]) if "n" in kv else None,
            d=int(kv.get("d", 1)),
            half_space=kv.get("half_space", "false") == "true",
        )


def make_weight(kind, gamma=None, n=None, d=1, half_space=False):
    """Build an admissible weight.

    ``exp_decay`` is exp(-gamma |x|), ``poly_decay`` is (1 + |x|^n)^-1 and
    ``gaussian`` is exp(-|x|^2).
    """
    if kind not in WEIGHT_KINDS:
        raise ValueError(f"unknown weight kind {kind!r}")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if kind == "exp_decay":
        if gamma is None or not gamma > 0:
            raise ValueError("gamma must be positive")
        gamma = float(gamma)
    elif kind == "poly_decay":
        if n is None or int(n) != n or n < 1:
            raise ValueError("n must be a positive integer")
        if n <= d:
            raise ValueError("n must exceed d")
        n = int(n)
    return WeightFunction(kind=kind, d=d, half_space=half_space, gamma=gamma, n=n)


@dataclass(frozen=True)
class Quadrature:
    """Nodes and positive Lebesgue weights: integral of g ~ sum_i weights[i] * g(nodes[i])."""

    nodes: np.ndarray
    weights: np.ndarray
    domain_tag: str
    d: int
    order: int | None = None
    resolution: int | None = None
    R: float | None = None

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self):
        return self.weights.size

    def integrate(self, values):
        values = np.asarray(values)
        if values.shape[-1] != self.size:
            raise ValueError(f"field has {values.shape[-1]} samples, quadrature has {self.size} nodes")
        return values @ self.weights

    def spacing(self):
        if self.domain_tag != "torus_truncation":
            raise ValueError("spacing is defined for torus truncations only")
        return 2.0 * self.R / self.resolution

    def to_config(self):
        lines = [f"domain_tag={self.domain_tag}", f"d={self.d}"]
        for key in ("order", "resolution", "R"):
            val = getattr(self, key)
            if val is not None:
                lines.append(f"{key}={val!r}")
        return "\n".join(lines)

    @classmethod
    def from_config(cls, text):
        kv = _parse_block(text)
        return build_quadrature(
            kv["domain_tag"],
            order=int(kv["order"]) if "order" in kv else None,
            resolution=int(kv["resolution"]) if "resolution" in kv else None,
            d=int(kv.get("d", 1)),
            R=float(kv["R"]) if "R" in kv else None,
        )


def _parse_block(text):
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("["):
            continue
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()
    return kv


@functools.lru_cache(maxsize=None)
def _half_range_recurrence(n):
    # Recurrence coefficients of polynomials orthonormal for exp(-x^2) on
    # (0, inf), from the Hankel moment matrix in extended precision.
    with mpmath.workdps(30 + 2 * n):
        hankel = mpmath.matrix(n + 1, n + 1)
        for i in range(n + 1):
            for j in range(n + 1):
                hankel[i, j] = mpmath.gamma(mpmath.mpf(i + j + 1) / 2) / 2
        r = mpmath.cholesky(hankel).T
        alpha = []
        beta = []
        for j in range(n):
            a = r[j, j + 1] / r[j, j]
            if j > 0:
                a -= r[j - 1, j] / r[j - 1, j - 1]
            alpha.append(float(a))
            beta.append(float(r[j + 1, j + 1] / r[j, j]))
    return np.array(alpha), np.array(beta)


def _orthonormal_values(x, alpha, beta, count, m0):
    p = np.zeros((count + 1, x.size))
    dp = np.zeros_like(p)
    p[0] = 1.0 / math.sqrt(m0)
    for j in range(count):
        nxt = (x - alpha[j]) * p[j]
        dnxt = p[j] + (x - alpha[j]) * dp[j]
        if j > 0:
            nxt -= beta[j - 1] * p[j - 1]
            dnxt -= beta[j - 1] * dp[j - 1]
        p[j + 1] = nxt / beta[j]
        dp[j + 1] = dnxt / beta[j]
    return p, dp


@functools.lru_cache(maxsize=None)
def half_range_hermite(n):
    """Gauss rule for the weight exp(-x^2) on (0, inf).

    Returns nodes and weights *including* the factor exp(-x^2); exact for
    polynomials of degree <= 2n-1. Weights come from the Christoffel
    function so tail weights keep full relative accuracy.
    """
    _check_order(n)
    alpha, beta = _half_range_recurrence(n)
    jac = np.diag(alpha) + np.diag(beta[:-1], 1) + np.diag(beta[:-1], -1)
    x = np.linalg.eigvalsh(jac)
    m0 = math.sqrt(math.pi) / 2
    for _ in range(3):
        p, dp = _orthonormal_values(x, alpha, beta, n, m0)
        x = x - p[n] / dp[n]
    p, _ = _orthonormal_values(x, alpha, beta, n, m0)
    w = 1.0 / np.sum(p[:n] ** 2, axis=0)
    return x, w


def _check_order(order):
    if order is None or order < 2:
        raise ValueError("quadrature order must be >= 2")
    if order > MAX_ORDER:
        raise OverflowError(f"order {order} overflows the node-generation recurrence (max {MAX_ORDER})")


def _lebesgue(x, w_gauss):
    with np.errstate(over="raise"):
        try:
            w = w_gauss * np.exp(x * x)
        except FloatingPointError as exc:
            raise OverflowError("order overflow of node-generation recurrence") from exc
    return w


def _tensor(rules):
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def build_quadrature(domain_tag, order=None, resolution=None, d=1, R=None, weight=None):
    """Build a quadrature rule.

    Parameters
    ----------
    domain_tag : {'full_space', 'half_space', 'torus_truncation'}
    order : int
        Points per dimension for the Gauss rules (>= 2).
    resolution : int
        Grid points per dimension for ``torus_truncation``.
    d : int
        Dimension.
    R : float
        Half-width of the box for ``torus_truncation``; for ``full_space``
        with d >= 3 (or a non-Gaussian weight) the truncation half-width,
        chosen from ``weight`` when omitted.
    weight : WeightFunction, optional
        Only consulted to pick the truncation radius.

    Notes
    -----
    ``full_space`` in d <= 2 with a Gaussian (or unspecified) weight uses
    tensor Gauss-Hermite nodes, exact for p(x) exp(-|x|^2) with p of degree
    <= 2*order-1 per coordinate. ``half_space`` tensors Gauss-Hermite in
    x_1..x_{d-1} with the half-range Gauss rule in x_d.
    """
    if domain_tag not in DOMAIN_TAGS:
        raise ValueError(f"unknown domain tag {domain_tag!r}")
    if domain_tag == "torus_truncation":
        if R is None or resolution is None or resolution < 2 or R <= 0:
            raise ValueError("torus truncation needs R > 0 and resolution >= 2")
        h = 2.0 * R / resolution
        pts = -R + h * np.arange(resolution)
        nodes, weights = _tensor([(pts, np.full(resolution, h))] * d)
        return Quadrature(nodes, weights, domain_tag, d, resolution=resolution, R=float(R))

    _check_order(order)
    if domain_tag == "half_space":
        full = hermgauss(order)
        half = half_range_hermite(order)
        rules = [(full[0], _lebesgue(*full))] * (d - 1) + [(half[0], _lebesgue(*half))]
        nodes, weights = _tensor(rules)
        return Quadrature(nodes, weights, domain_tag, d, order=order)

    gaussian = weight is None or weight.kind == "gaussian"
    if d <= 2 and gaussian:
        x, w = hermgauss(order)
        nodes, weights = _tensor([(x, _lebesgue(x, w))] * d)
        return Quadrature(nodes, weights, domain_tag, d, order=order)
    if R is None:
        weight = weight if weight is not None else make_weight("gaussian", d=d)
        R = weight.truncation_radius(1e-8)
    x, w = leggauss(order)
    nodes, weights = _tensor([(R * x, R * w)] * d)
    return Quadrature(nodes, weights, domain_tag, d, order=order, R=float(R))


def weighted_inner(u, v, rho, q):
    """<u, v>_H = integral of u v rho, evaluated on the quadrature nodes."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[-1] != q.size or v.shape[-1] != q.size:
        raise ValueError(f"fields must be sampled on the {q.size} quadrature nodes")
    return (u * v) @ (q.weights * rho(q.nodes))


def weighted_norm_sq(u, rho, q):
    return weighted_inner(u, u, rho, q)


@dataclass
class AdmissibilityReport:
    C_hat: float
    admissible: bool
    times: np.ndarray
    x_samples: np.ndarray
    ratios: np.ndarray  # (n_times, n_x)
    witness: tuple | None = None


def heat_smoothed_weight(rho, t, x, gh_order=24):
    """(G(t,.) * rho)(x) for each sample point x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0:
        return rho(x)
    s = math.sqrt(2.0 * t)
    if rho.d == 1:
        pts = x.reshape(-1)
        out = np.empty(pts.size)
        for i, xi in enumerate(pts):
            kink = -xi / s
            breaks = [kink] if -12.0 < kink < 12.0 else None
            val, err = integrate.quad(
                lambda z: math.exp(-0.5 * z * z) * float(rho.radial(abs(xi + s * z))),
                -12.0, 12.0, points=breaks, limit=200, epsabs=1e-14, epsrel=1e-11,
            )
            if not np.isfinite(val) or err > 1e-6 * max(abs(val), 1e-300) + 1e-13:
                raise RuntimeError(f"convolution quadrature failed at x={xi}, t={t}")
            out[i] = val / math.sqrt(2.0 * math.pi)
        return out.reshape(x.shape[:-1] if x.ndim > 1 else x.shape)
    xi, wi = hermgauss(gh_order)
    offsets, w = _tensor([(xi, wi)] * rho.d)
    shifted = x[:, None, :] + 2.0 * math.sqrt(t) * offsets[None, :, :]
    return rho(shifted) @ w / math.pi ** (rho.d / 2)


def check_admissible(rho, T, x_samples, tol=1e-2, n_times=11):
    """Sampled certificate for G(t,.) * rho <= C rho on [0, T].

    The verdict is ``admissible`` unless the ratio (G * rho) / rho grows by
    more than ``tol`` between half the outermost sample radius and the
    outermost radius without slowing down relative to the previous dyadic
    step; the outermost point is then reported as the witness.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    x = np.asarray(x_samples, dtype=float)
    if rho.d == 1:
        x = x.reshape(-1, 1)
    times = np.linspace(0.0, T, n_times)
    base = rho(x)
    ratios = np.empty((times.size, x.shape[0]))
    for k, t in enumerate(times):
        ratios[k] = heat_smoothed_weight(rho, t, x) / base
    ratios[0] = 1.0
    radius = _radius(x, rho.d)
    outer = int(np.argmax(radius))
    mid = int(np.argmin(np.abs(radius - 0.5 * radius[outer])))
    inner = int(np.argmin(np.abs(radius - 0.25 * radius[outer])))
    witness = None
    with np.errstate(divide="ignore", over="ignore"):
        logs = np.log(ratios)
    for k, t in enumerate(times[1:], start=1):
        # a bounded ratio approaches its limit with shrinking increments;
        # growth that does not slow down along the dyadic radii is a witness
        d_inner = logs[k, mid] - logs[k, inner]
        d_outer = logs[k, outer] - logs[k, mid]
        if not np.isfinite(d_outer) or (d_outer > math.log1p(tol) and d_outer >= 0.9 * d_inner):
            witness = (float(t), x[outer].copy())
            break
    return AdmissibilityReport(
        C_hat=float(ratios.max()),
        admissible=witness is None,
        times=times,
        x_samples=x,
        ratios=ratios,
        witness=witness,
    )


@dataclass
class WeightPairReport:
    value: float
    finite: bool
    shell_ratio: float
    excluded_nodes: int = 0
    shells: list = field(default_factory=list)


def check_weight_pair(zeta, rho, q, kmin=1, kmax=9, ratio_threshold=0.95):
    """Estimate the integral of zeta / rho and decide whether it is finite.

    The value is the quadrature sum over the nodes of ``q``. Finiteness is
    decided by the dyadic tail test: radial shell integrals over
    [2^k, 2^(k+1)] must shrink by at least ``ratio_threshold`` between the
    last two non-degenerate shells.
    """
    if zeta.d != rho.d or zeta.half_space != rho.half_space:
        raise ValueError("weights must live on the same domain")
    rho_vals = rho(q.nodes)
    tiny = np.finfo(float).tiny
    ok = rho_vals > tiny
    excluded = int(np.count_nonzero(~ok))
    if excluded:
        warnings.warn(f"{excluded} nodes excluded where rho underflows", RuntimeWarning, stacklevel=2)
    value = float(np.sum(q.weights[ok] * zeta(q.nodes[ok]) / rho_vals[ok]))

    def log_ratio(r):
        # log(zeta/rho) radially, robust to underflow of either weight
        return _log_radial(zeta, r) - _log_radial(rho, r)

    shells = []
    for k in range(kmin, kmax + 1):
        lo, hi = 2.0 ** k, 2.0 ** (k + 1)
        rs = np.linspace(lo, hi, 257)
        logs = log_ratio(rs) + (zeta.d - 1) * np.log(rs)
        peak = logs.max()
        if peak > 700:
            shells.append(np.inf)
            continue
        shells.append(integrate.simpson(np.exp(logs), x=rs))
    ratio = np.nan
    finite = True
    for a, b in zip(shells[-2::-1], shells[::-1]):
        # walk back from the outermost shell to the last informative pair
        if not np.isfinite(b) or not np.isfinite(a):
            finite, ratio = False, np.inf
            break
        if a > 0:
            ratio = b / a
            finite = ratio < ratio_threshold
            break
    return WeightPairReport(value=value, finite=bool(finite), shell_ratio=float(ratio),
                            excluded_nodes=excluded, shells=shells)


def _log_radial(w, r):
    if w.kind == "gaussian":
        return -r * r
    if w.kind == "exp_decay":
        return -w.gamma * r
    return -np.log1p(r ** w.n)


def write_norms_csv(path, rows):
    """Write (name, value, abs_err_est) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "value", "abs_err_est"])
        for name, value, err in rows:
            writer.writerow([name, repr(float(value)), repr(float(err))])


def gaussian_moment(k, half_line=False):
    """Integral of x^k exp(-x^2) over R (or over (0, inf))."""
    if half_line:
        return special.gamma((k + 1) / 2) / 2
    return 0.0 if k % 2 else special.gamma((k + 1) / 2)
