"""Whole-space heat semigroup, its periodic-torus realization and moment-bound constants."""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import fft as sfft

# relative weight of the first periodic image allowed by apply_heat
WRAP_TOL = 1e-3


def _check_t(t):
    if not t > 0:
        raise ValueError("t must be positive")


def green_kernel(t, x, d):
    """G(t, x) = (4 pi t)^(-d/2) exp(-|x|^2 / (4t)); ``x`` has trailing axis d (or is scalar for d=1)."""
    _check_t(t)
    x = np.asarray(x, dtype=float)
    r2 = x * x if (d == 1 and (x.ndim == 0 or x.shape[-1] != 1)) else np.sum(x * x, axis=-1)
    return (4.0 * math.pi * t) ** (-d / 2) * np.exp(-r2 / (4.0 * t))


def kernel_l2sq(t, d):
    """Integral of G(t, y)^2 dy = (8 pi t)^(-d/2)."""
    _check_t(t)
    return (8.0 * math.pi * t) ** (-d / 2)


def kernel_tail(d):
    """(value, finite) for the integral of tau^(-d/2) over [1, inf)."""
    if d <= 2:
        return math.inf, False
    return 2.0 / (d - 2), True


def wavenumbers(torus):
    n, R = torus.resolution, torus.R
    return 2.0 * math.pi * sfft.fftfreq(n, d=2.0 * R / n)


@functools.lru_cache(maxsize=64)
def _multiplier(n, R, d, t):
    k = 2.0 * math.pi * sfft.fftfreq(n, d=2.0 * R / n)
    kr = 2.0 * math.pi * sfft.rfftfreq(n, d=2.0 * R / n)
    axes = [k] * (d - 1) + [kr]
    k2 = sum(np.meshgrid(*[a * a for a in axes], indexing="ij"))
    m = np.exp(-k2 * t)
    m.setflags(write=False)
    return m


def wrap_weight(t, R):
    """Weight of the nearest periodic image of G(t, .) relative to its centre on [-R, R)."""
    return math.exp(-(2.0 * R) ** 2 / (4.0 * t))


def apply_heat(u, t, torus):
    """S(t)u on the periodic truncation, as the Fourier multiplier exp(-|k|^2 t).

    ``u`` has the torus nodes on its last axis (C order over the d
    coordinates); leading axes are batch axes.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    u = np.asarray(u, dtype=float)
    if t == 0:
        return u.copy()
    if torus.domain_tag != "torus_truncation":
        raise ValueError("apply_heat needs a torus_truncation quadrature")
    if wrap_weight(t, torus.R) > WRAP_TOL:
        raise ValueError(f"grid too coarse for t={t}: periodic images of the kernel exceed {WRAP_TOL}")
    n, d = torus.resolution, torus.d
    if u.shape[-1] != n ** d:
        raise ValueError("field does not match the torus grid")
    shape = u.shape[:-1] + (n,) * d
    axes = tuple(range(-d, 0))
    uh = sfft.rfftn(u.reshape(shape), axes=axes)
    uh *= _multiplier(n, float(torus.R), d, float(t))
    return sfft.irfftn(uh, s=(n,) * d, axes=axes).reshape(u.shape)


@dataclass
class BoundReport:
    term_I1: float
    term_I2: float
    term_I3: float
    total: float
    bounded: bool
    phi_sup: float
    phi_l1: float
    rho_sup: float
    rho_l1: float
    sigma0: float
    a: float
    d: int
    E_u0_sq: float

    def csv_row(self):
        return {k: (repr(float(v)) if isinstance(v, float) else v) for k, v in asdict(self).items()}

    def text(self):
        head = "uniform second-moment bound" if self.bounded else "no uniform bound (d < 3)"
        lines = [head]
        lines += [f"  I1 = {self.term_I1:.6g}", f"  I2 = {self.term_I2:.6g}", f"  I3 = {self.term_I3:.6g}"]
        lines += [f"  total = 3 (I1 + I2 + I3) = {self.total:.6g}"]
        lines += [f"  inputs: |phi|_inf={self.phi_sup:g} |phi|_1={self.phi_l1:g} |rho|_inf={self.rho_sup:g} "
                  f"|rho|_1={self.rho_l1:g} sigma0={self.sigma0:g} a={self.a:g} d={self.d} E|u0|^2={self.E_u0_sq:g}"]
        return "\n".join(lines)


def thm1_constant(phi_sup, phi_l1, rho_sup, rho_l1, sigma0, a, d, E_u0_sq):
    """Assemble the bound sup_t E|u(t)|_H^2 <= 3 (I1 + I2 + I3).

    I1 = |rho|_inf E|u0|_2^2,
    I2 = 2 |phi|_inf^2 |rho|_1 + 2 (4 pi)^(-d/2) |rho|_1 |phi|_1^2 tail^2,
    I3 = |rho|_1 a sigma0^2 (tail + 1),
    with tail = int_1^inf tau^(-d/2) dtau = 2 / (d - 2). For d < 3 the
    report is flagged unbounded.
    """
    echo = dict(phi_sup=float(phi_sup), phi_l1=float(phi_l1), rho_sup=float(rho_sup), rho_l1=float(rho_l1),
                sigma0=float(sigma0), a=float(a), d=int(d), E_u0_sq=float(E_u0_sq))
    tail, finite = kernel_tail(d)
    if not finite:
        inf = math.inf
        return BoundReport(inf, inf, inf, inf, False, **echo)
    i1 = rho_sup * E_u0_sq
    i2 = 2.0 * phi_sup ** 2 * rho_l1 + 2.0 * (4.0 * math.pi) ** (-d / 2) * rho_l1 * phi_l1 ** 2 * tail ** 2
    i3 = rho_l1 * a * sigma0 ** 2 * (tail + 1.0)
    return BoundReport(float(i1), float(i2), float(i3), float(3.0 * (i1 + i2 + i3)), True, **echo)


def write_bound_csv(path, reports):
    reports = list(reports)
    with open(path, "w", newline="") as fh:
        rows = [r.csv_row() for r in reports]
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


@dataclass
class CutoffBoundReport:
    level: float
    noise_term: float
    total: float
    bounded: bool
    N: float
    u0_l2: float
    psi_l2sq: float
    a: float
    d: int


def thm2_constant(N, u0_l2, psi_l2sq, a, d):
    """Bound on sup_t E|u(t)|_2^2 for a reaction switched off above |u|_2 = N.

    With M = max(|u0|_2, N) and J = a |psi|_2^2 (1 + (8 pi)^(-d/2) tail),
    the stopping-time split gives (M+1)^2 + 2 [(M+1)^2 + 2 J + 8 J], where
    the 8 J comes from Doob's inequality (factor 4) on the doubled
    supremum term.
    """
    tail, finite = kernel_tail(d)
    level = max(float(u0_l2), float(N)) + 1.0
    if not finite:
        return CutoffBoundReport(level, math.inf, math.inf, False, float(N), float(u0_l2), float(psi_l2sq),
                                 float(a), int(d))
    J = a * psi_l2sq * (1.0 + (8.0 * math.pi) ** (-d / 2) * tail)
    total = 3.0 * level ** 2 + 20.0 * J
    return CutoffBoundReport(level, float(J), float(total), True, float(N), float(u0_l2), float(psi_l2sq),
                             float(a), int(d))
