"""Reaction and noise-intensity terms (f, sigma) with their declared constraints."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CONSTRAINTS = ("envelope_f", "envelope_sigma", "sigma_bound", "cutoff", "f0_bounded")

# width of the smooth switch-off below the cutoff radius, relative to N
RAMP_WIDTH = 0.1


def smooth_switch(s, N):
    """1 for s <= (1 - RAMP_WIDTH) N, 0 for s >= N, C1 smoothstep in between."""
    s = np.asarray(s, dtype=float)
    z = np.clip((N - s) / (RAMP_WIDTH * N), 0.0, 1.0)
    return z * z * (3.0 - 2.0 * z)


def switch_lipschitz(N):
    """Lipschitz constant of :func:`smooth_switch` in s (max slope of 3z^2 - 2z^3 is 3/2)."""
    return 1.5 / (RAMP_WIDTH * N)


@dataclass(frozen=True)
class ReactionSpec:
    """The pair (f, sigma) evaluated pointwise on nodes.

    ``f(x, u)`` and ``sigma(x, u)`` take nodes x of shape (N, d) and values
    u of shape (..., N) and return arrays broadcastable to u. ``None``
    means identically zero. If ``N`` is set, f is multiplied by a smooth
    switch of the path's L2 norm that vanishes for |u|_2 >= N.
    """

    f: object = None
    sigma: object = None
    L: float = 0.0
    phi: object = None
    psi: object = None
    sigma0: float | None = None
    N: float | None = None
    f0_sup: float | None = None
    active: frozenset = frozenset()
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        unknown = set(self.active) - set(CONSTRAINTS)
        if unknown:
            raise ValueError(f"unknown constraint flags {sorted(unknown)}")
        if self.L < 0:
            raise ValueError("Lipschitz constant must be nonnegative")

    @property
    def zero_f(self):
        return self.f is None

    @property
    def zero_sigma(self):
        return self.sigma is None

    def drift(self, x, u, l2norm=None):
        if self.f is None:
            return np.zeros_like(u)
        val = np.broadcast_to(self.f(x, u), u.shape)
        if self.N is not None:
            if l2norm is None:
                raise ValueError("cutoff reaction needs the L2 norm of the state")
            val = val * smooth_switch(l2norm(u), self.N)[..., None]
        return val

    def intensity(self, x, u):
        if self.sigma is None:
            return np.zeros_like(u)
        return np.broadcast_to(self.sigma(x, u), u.shape)

    def echo(self):
        out = {"name": self.name, "L": self.L, "active": ",".join(sorted(self.active))}
        if self.sigma0 is not None:
            out["sigma0"] = self.sigma0
        if self.N is not None:
            out["N"] = self.N
            out["cutoff_lipschitz"] = switch_lipschitz(self.N)
        out.update(self.params)
        return out


@dataclass
class ProbeReport:
    lipschitz_f: float
    lipschitz_sigma: float
    violations: list

    @property
    def ok(self):
        return not self.violations


def probe_constraints(reaction, x, n_probes=200, scale=5.0, seed=0, tol=1e-12):
    """Random-probe check of the Lipschitz constant and of the active envelopes.

    Pointwise probes ignore the cutoff switch (it acts on the whole field).
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    u1 = scale * rng.standard_normal((n_probes, x.shape[0]))
    u2 = u1 + rng.standard_normal((n_probes, x.shape[0])) * rng.uniform(1e-3, scale, (n_probes, 1))
    du = np.abs(u1 - u2)
    violations = []

    def ratio(fn):
        if fn is None:
            return 0.0
        return float(np.max(np.abs(fn(x, u1) - fn(x, u2)) / du))

    lf, ls = ratio(reaction.f), ratio(reaction.sigma)
    if lf > reaction.L * (1 + 1e-9) + tol:
        violations.append(("lipschitz_f", lf))
    if ls > reaction.L * (1 + 1e-9) + tol:
        violations.append(("lipschitz_sigma", ls))
    if "envelope_f" in reaction.active and reaction.f is not None:
        excess = np.max(np.abs(reaction.f(x, u1)) - reaction.phi(x))
        if excess > tol:
            violations.append(("envelope_f", float(excess)))
    if "envelope_sigma" in reaction.active and reaction.sigma is not None:
        excess = np.max(np.abs(reaction.sigma(x, u1)) - reaction.psi(x))
        if excess > tol:
            violations.append(("envelope_sigma", float(excess)))
    if "sigma_bound" in reaction.active and reaction.sigma is not None:
        excess = np.max(np.abs(reaction.sigma(x, u1))) - reaction.sigma0
        if excess > tol:
            violations.append(("sigma_bound", float(excess)))
    if "f0_bounded" in reaction.active and reaction.f is not None:
        f0 = np.abs(reaction.f(x, np.zeros(x.shape[0])))
        if not np.all(np.isfinite(f0)) or (reaction.f0_sup is not None and f0.max() > reaction.f0_sup + tol):
            violations.append(("f0_bounded", float(f0.max())))
    return ProbeReport(lf, ls, violations)


def cutoff_vanishes(reaction, x, l2norm, n_probes=50, seed=0):
    """Check f = 0 on random fields rescaled to L2 norm >= N."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n_probes, np.asarray(x).shape[0]))
    s = l2norm(u)
    u = u * (reaction.N * rng.uniform(1.0, 3.0, n_probes) / s)[:, None]
    return bool(np.all(reaction.drift(x, u, l2norm) == 0.0))


# -- families used by the experiments -------------------------------------


def gaussian_bump(amplitude=1.0, width=1.0):
    def bump(x):
        x = np.asarray(x, dtype=float)
        return amplitude * np.exp(-np.sum(x * x, axis=-1) / width ** 2)
    return bump


def bump_norms(amplitude, width, d):
    """(sup, L1, L2^2) of amplitude * exp(-|x|^2 / width^2) on R^d."""
    l1 = amplitude * (math.sqrt(math.pi) * width) ** d
    l2sq = amplitude ** 2 * (math.sqrt(math.pi / 2) * width) ** d
    return amplitude, l1, l2sq


def zero_reaction():
    return ReactionSpec(name="zero")


def constant_reaction(c=0.0, s0=0.0):
    """f = c, sigma = s0 (constants, possibly zero)."""
    f = None if c == 0 else (lambda x, u: np.full_like(u, c))
    sigma = None if s0 == 0 else (lambda x, u: np.full_like(u, s0))
    return ReactionSpec(f=f, sigma=sigma, L=0.0, sigma0=abs(s0), f0_sup=abs(c),
                        active=frozenset({"sigma_bound", "f0_bounded"}), name="constant",
                        params={"c": c, "s0": s0})


def bounded_reaction(phi_amp=1.0, phi_width=1.0, sigma0=1.0, d=3):
    """f = -phi(x) sin(u), sigma = sigma0 cos(u).

    |f| <= phi, |sigma| <= sigma0, Lipschitz with L = max(phi_amp, sigma0).
    f is odd and sigma even in u, so with u0 = 0 the law is symmetric.
    """
    phi = gaussian_bump(phi_amp, phi_width)
    return ReactionSpec(
        f=lambda x, u: -phi(x) * np.sin(u),
        sigma=lambda x, u: sigma0 * np.cos(u),
        L=max(phi_amp, sigma0), phi=phi, sigma0=sigma0,
        active=frozenset({"envelope_f", "sigma_bound"}), name="bounded",
        params={"phi_amp": phi_amp, "phi_width": phi_width, "d": d},
    )


def cutoff_reaction(N, phi_amp=1.0, phi_width=1.0, psi_amp=1.0, psi_width=1.0, d=3):
    """f = -phi(x) sin(u) switched off for |u|_2 >= N, sigma = psi(x) cos(u) with psi in L2."""
    phi = gaussian_bump(phi_amp, phi_width)
    psi = gaussian_bump(psi_amp, psi_width)
    return ReactionSpec(
        f=lambda x, u: -phi(x) * np.sin(u),
        sigma=lambda x, u: psi(x) * np.cos(u),
        L=max(phi_amp, psi_amp), phi=phi, psi=psi, N=float(N),
        active=frozenset({"envelope_f", "envelope_sigma", "cutoff"}), name="cutoff",
        params={"phi_amp": phi_amp, "phi_width": phi_width, "psi_amp": psi_amp, "psi_width": psi_width, "d": d},
    )


def lipschitz_reaction(L, f0=0.0, s0=0.0):
    """f = L sin(u) + f0, sigma = L cos(u) + s0: Lipschitz L with bounded f(x, 0)."""
    return ReactionSpec(
        f=lambda x, u: L * np.sin(u) + f0,
        sigma=lambda x, u: L * np.cos(u) + s0,
        L=float(L), f0_sup=abs(f0), sigma0=abs(L) + abs(s0),
        active=frozenset({"f0_bounded", "sigma_bound"}), name="lipschitz",
        params={"f0": f0, "s0": s0},
    )
