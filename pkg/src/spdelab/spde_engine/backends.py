"""State representations and exact semigroups for the time stepper.

A backend fixes the state layout (last axis), the nodes where the reaction
is evaluated, the H-norm and the noise basis sampled at the nodes.

* ``GaussSpectralBackend``: coefficients in the Hermite eigenbasis of the
  Gaussian-weighted operator on the half-space; S(dt) is diagonal.
* ``HeatTorusBackend``: nodal values on a periodic truncation of R^d;
  S(dt) is the heat Fourier multiplier.
"""

from __future__ import annotations

import numpy as np

from ..gauss_operator import gauss_basis, semigroup_factors
from ..heat_semigroup import apply_heat
from ..weighted_space import build_quadrature, make_weight


class Backend:
    tag = "abstract"

    def __init__(self, noise):
        self.noise = noise
        # sqrt(a_k) e_k(x_i), shape (K, N)
        self.noise_matrix = noise.basis.evaluate(self.nodes) * noise.sqrt_a()[:, None]
        self.noise_matrix.setflags(write=False)

    def check_state(self, state):
        if np.shape(state)[-1] != self.state_size:
            raise ValueError(f"state has size {np.shape(state)[-1]}, {self.tag} backend expects {self.state_size}")

    def noise_field(self, dW):
        """sum_k sqrt(a_k) dW_k e_k at the nodes; dW has shape (..., K)."""
        return dW @ self.noise_matrix

    def mild_step(self, state, dt, drift=None, intensity=None, dW=None):
        """S(dt)[u + dt f + sigma dW] with f, sigma given as nodal arrays (None = 0)."""
        forcing = None
        if drift is not None:
            forcing = dt * drift
        if intensity is not None:
            noise = intensity * self.noise_field(dW)
            forcing = noise if forcing is None else forcing + noise
        if forcing is not None:
            state = state + self.from_nodal(forcing)
        return self.semigroup(state, dt)

    def l2_norm(self, u_nodal):
        raise NotImplementedError(f"{self.tag} backend has no finite L2 norm")


class GaussSpectralBackend(Backend):
    tag = "gauss"

    def __init__(self, noise, d=1, cutoff=32, order=None):
        self.basis = gauss_basis(d, cutoff, order if order is not None else 2 * cutoff)
        self.d = d
        self.nodes = self.basis.nodes
        self.weight = self.basis.weight
        self.mu = self.basis.mu
        self.state_size = self.basis.n_modes
        self._factor_cache = {}
        super().__init__(noise)

    def semigroup(self, c, t):
        fac = self._factor_cache.get(t)
        if fac is None:
            fac = self._factor_cache[t] = semigroup_factors(self.mu, t)
        return c * fac

    def to_nodal(self, c):
        return self.basis.from_coeffs(c)

    def from_nodal(self, u):
        return self.basis.to_coeffs(u)

    def norm_sq_H(self, c):
        return np.sum(c * c, axis=-1)

    def zero_state(self, m=1):
        return np.zeros((m, self.state_size))

    def describe(self):
        return {"backend": self.tag, "d": self.d, "cutoff": self.basis.cutoff, "order": self.basis.order}


class HeatTorusBackend(Backend):
    tag = "heat"

    def __init__(self, noise, d=3, R=20.0, resolution=32, weight=None):
        self.d = d
        self.torus = build_quadrature("torus_truncation", R=R, resolution=resolution, d=d)
        self.nodes = self.torus.nodes
        self.weight = weight if weight is not None else make_weight("exp_decay", gamma=2.0, d=d)
        self.rho_weights = self.torus.weights * self.weight(self.nodes)
        self.rho_weights.setflags(write=False)
        self.state_size = self.torus.size
        self.cell = self.torus.weights[0]
        super().__init__(noise)

    def semigroup(self, u, t):
        return apply_heat(u, t, self.torus)

    def to_nodal(self, u):
        return u

    def from_nodal(self, u):
        return u

    def norm_sq_H(self, u):
        return (u * u) @ self.rho_weights

    def l2_norm(self, u):
        return np.sqrt(np.sum(u * u, axis=-1) * self.cell)

    def zero_state(self, m=1):
        return np.zeros((m, self.state_size))

    def rho_l1_discrete(self):
        return float(np.sum(self.rho_weights))

    def describe(self):
        return {"backend": self.tag, "d": self.d, "R": self.torus.R, "resolution": self.torus.resolution,
                "spacing": self.torus.spacing(), "weight": self.weight.kind}


def torus_radius(weight, rel_mass=1e-6):
    """R with the weight's relative mass outside the ball of radius R/2 (hence the cube) below rel_mass."""
    return 2.0 * weight.truncation_radius(rel_mass)


def make_backend(tag, noise, **kw):
    if tag == "gauss":
        return GaussSpectralBackend(noise, **kw)
    if tag == "heat":
        return HeatTorusBackend(noise, **kw)
    raise ValueError(f"unknown backend {tag!r}")

