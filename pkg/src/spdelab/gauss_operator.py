r"""Spectral theory of A u = rho^-1 div(rho grad u), rho = exp(-|x|^2), on {x_d > 0} with u = 0 at x_d = 0.

The eigenfunctions are products of Hermite functions; the last coordinate
carries odd Hermite levels only, which enforces the Dirichlet condition. A
mode is a tuple p = (p_1, ..., p_d) and

    A phi_p = mu_p phi_p,   mu_p = -2 (p_1 + ... + p_{d-1}) - (2 + 4 p_d).
"""

from __future__ import annotations

import csv
import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .weighted_space import build_quadrature, make_weight

DEFAULT_CUTOFF = 32


def eigenvalue(p, d=None):
    p = tuple(int(v) for v in np.atleast_1d(p))
    if d is not None and len(p) != d:
        raise ValueError("mode index length must equal d")
    if any(v < 0 for v in p):
        raise ValueError("mode index components must be nonnegative")
    return float(-2 * sum(p[:-1]) - (2 + 4 * p[-1]))


@functools.lru_cache(maxsize=None)
def mode_table(d, cutoff=DEFAULT_CUTOFF):
    """All modes with 0 <= p_i < cutoff, by decreasing eigenvalue then lexicographically."""
    modes = itertools.product(range(cutoff), repeat=d)
    return tuple(sorted(modes, key=lambda p: (-eigenvalue(p), p)))


def hermite_functions(nmax, x):
    """Rows h_0..h_nmax, orthonormal for the weight exp(-x^2) on the real line."""
    x = np.asarray(x, dtype=float)
    h = np.empty((nmax + 1,) + x.shape)
    h[0] = math.pi ** -0.25
    if nmax >= 1:
        h[1] = math.sqrt(2.0) * x * h[0]
    for n in range(1, nmax):
        h[n + 1] = math.sqrt(2.0 / (n + 1)) * x * h[n] - math.sqrt(n / (n + 1)) * h[n - 1]
    return h


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim <= 1):
        return x.reshape(-1, 1)
    return x.reshape(-1, d)


def eigenfunction_eval(p, x):
    """phi_p(x), normalized to unit norm in L2 of exp(-|x|^2) over the half-space."""
    p = tuple(int(v) for v in np.atleast_1d(p))
    d = len(p)
    pts = _as_points(x, d)
    out = np.ones(pts.shape[0])
    for i, pi in enumerate(p[:-1]):
        out *= hermite_functions(pi, pts[:, i])[pi]
    n = 2 * p[-1] + 1
    out *= math.sqrt(2.0) * hermite_functions(n, pts[:, -1])[n]
    return out


@dataclass(frozen=True)
class CoeffVector:
    """Spectral coefficients; the last axis indexes ``mode_table(d, cutoff)``."""

    c: np.ndarray
    cutoff: int
    d: int

    @property
    def eigenvalues(self):
        return spectrum(self.d, self.cutoff)

    def norm(self):
        return np.sqrt(np.sum(self.c * self.c, axis=-1))


@functools.lru_cache(maxsize=None)
def spectrum(d, cutoff=DEFAULT_CUTOFF):
    mus = np.array([eigenvalue(p) for p in mode_table(d, cutoff)])
    mus.setflags(write=False)
    return mus


class GaussBasis:
    """Quadrature nodes, eigenfunction table and eigenvalues for a (d, cutoff) truncation.

    Use :func:`gauss_basis` to get a shared cached instance.
    """

    def __init__(self, d=1, cutoff=DEFAULT_CUTOFF, order=None):
        order = 2 * cutoff if order is None else order
        if 2 * cutoff > order:
            raise ValueError("cutoff exceeds quadrature order / 2")
        self.d, self.cutoff, self.order = d, cutoff, order
        self.weight = make_weight("gaussian", d=d, half_space=True)
        self.quadrature = build_quadrature("half_space", order=order, d=d)
        self.nodes = self.quadrature.nodes
        self.rho_weights = self.quadrature.weights * self.weight(self.nodes)
        self.modes = mode_table(d, cutoff)
        self.mu = spectrum(d, cutoff)
        self.phi = self.evaluate(self.nodes)
        for arr in (self.rho_weights, self.phi):
            arr.setflags(write=False)

    @property
    def n_modes(self):
        return len(self.modes)

    def evaluate(self, points):
        """Matrix of eigenfunction values, shape (n_modes, N)."""
        pts = _as_points(points, self.d)
        nmax = 2 * self.cutoff - 1
        tables = [hermite_functions(nmax, pts[:, i]) for i in range(self.d)]
        out = np.empty((self.n_modes, pts.shape[0]))
        for j, p in enumerate(self.modes):
            v = math.sqrt(2.0) * tables[-1][2 * p[-1] + 1]
            for i, pi in enumerate(p[:-1]):
                v = v * tables[i][pi]
            out[j] = v
        return out

    def inner(self, u, v):
        return (np.asarray(u) * np.asarray(v)) @ self.rho_weights

    def norm_sq(self, u):
        return self.inner(u, u)

    def to_coeffs(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.nodes.shape[0]:
            raise ValueError("field must be sampled on the quadrature nodes")
        return (u * self.rho_weights) @ self.phi.T

    def from_coeffs(self, c, points=None):
        c = np.asarray(c, dtype=float)
        if c.shape[-1] != self.n_modes:
            raise ValueError("coefficient vector does not match the cutoff")
        mat = self.phi if points is None else self.evaluate(points)
        return c @ mat


@functools.lru_cache(maxsize=16)
def gauss_basis(d=1, cutoff=DEFAULT_CUTOFF, order=None):
    return GaussBasis(d, cutoff, order)


def to_coeffs(u, cutoff=DEFAULT_CUTOFF, d=1, order=None):
    """Project a field sampled on the half-space Gauss nodes onto the eigenbasis."""
    basis = gauss_basis(d, cutoff, order if order is not None else 2 * cutoff)
    return CoeffVector(basis.to_coeffs(u), cutoff, d)


def from_coeffs(c, grid=None, order=None):
    """Synthesize a field from coefficients, at the Gauss nodes or at ``grid``."""
    basis = gauss_basis(c.d, c.cutoff, order if order is not None else 2 * c.cutoff)
    return basis.from_coeffs(c.c, grid)


def semigroup_factors(mu, t):
    if t < 0:
        raise ValueError("negative time is not allowed for the semigroup")
    return np.exp(np.asarray(mu) * t)


def apply_semigroup(c, t):
    """S(t) in the eigenbasis: c_p -> c_p exp(mu_p t), t >= 0."""
    return CoeffVector(c.c * semigroup_factors(c.eigenvalues, t), c.cutoff, c.d)


def fd_spectrum(x_max=8.0, h=1e-3, n_eigs=3):
    """Leading eigenvalues of w'' - 2x w' = mu w on (0, x_max), w = 0 at both ends.

    The Sturm-Liouville form (rho w')' = mu rho w is discretized with
    conservative central differences and symmetrized by v = sqrt(rho) w;
    the resulting tridiagonal entries only involve ratios of rho at
    neighbouring points, evaluated in log form.
    """
    n = int(round(x_max / h)) - 1
    x = h * np.arange(1, n + 1)
    diag = -(np.exp(-x * h - h * h / 4) + np.exp(x * h - h * h / 4)) / h ** 2
    off = np.full(n - 1, math.exp(h * h / 4) / h ** 2)
    vals = eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(n - n_eigs, n - 1))
    return np.sort(vals)[::-1]


def write_spectrum_csv(path, d=1, cutoff=DEFAULT_CUTOFF, count=None):
    mus = spectrum(d, cutoff)
    count = len(mus) if count is None else count
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "eigenvalue"])
        for i in range(count):
            writer.writerow([i, repr(float(mus[i]))])


def write_eigenfunction_csv(path, points, d=1, cutoff=DEFAULT_CUTOFF, count=4):
    """Samples of the first ``count`` eigenfunctions for plotting."""
    basis = gauss_basis(d, cutoff)
    vals = basis.evaluate(points)[:count]
    pts = _as_points(points, d)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(d)] + [f"phi{j}" for j in range(count)])
        for i in range(pts.shape[0]):
            writer.writerow([repr(float(v)) for v in pts[i]] + [repr(float(v)) for v in vals[:, i]])
