"""Exponential-Euler stepping of mild solutions and the chunked ensemble driver.

One step of size dt maps u to S(dt)[u + dt f(u) + sigma(u) dW]. The linear
part is applied exactly by the backend, so the scheme has no stiffness
constraint from the unbounded spectrum.

Ensembles are processed in fixed-size chunks of paths. Each path draws its
noise from its own substream, and chunk results are reduced in chunk order,
so results do not depend on the number of workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..noise_field import NoisePath, extend_two_sided, sample_path

DEFAULT_CHUNK = 128
WORKERS_ENV = "SPDELAB_WORKERS"


class SolveError(FloatingPointError):
    """Non-finite state; ``step`` is the index of the offending step."""

    def __init__(self, step, t):
        super().__init__(f"non-finite state after step {step} (t={t:g})")
        self.step = step
        self.t = t


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def time_grid(t0, T, dt):
    """Uniform grid dt * k covering [t0, T]; t0 and T must be multiples of dt."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not T > t0:
        raise ValueError("empty time window")
    k0, k1 = round(t0 / dt), round(T / dt)
    for t, k in ((t0, k0), (T, k1)):
        if abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"window end {t} is not a multiple of dt={dt}")
    return dt * np.arange(k0, k1 + 1)


def chunk_noise(spec, grid, seed, first, m, dt=None):
    """Increments for paths [first, first + m) on a uniform grid dt * k.

    Streams are anchored at t = 0: forward streams start at 0 and the
    negative branch runs outward from 0, so any window sees the same
    increment on the same interval. Pass the nominal ``dt``; the first
    grid spacing can differ from it in the last bit.
    """
    dt = grid[1] - grid[0] if dt is None else dt
    k0, k1 = int(round(grid[0] / dt)), int(round(grid[-1] / dt))
    if k0 < 0:
        full = dt * np.arange(k0, max(k1, 0) + 1)
        inc = extend_two_sided(spec, full, seed=seed, paths=m, first_path=first).increments
        return inc[..., : grid.size - 1]
    full = dt * np.arange(0, k1 + 1)
    inc = sample_path(spec, full, seed=seed, paths=m, first_path=first).increments
    return inc[..., k0:]


def run_chunks(n_paths, chunk, fn, workers=1):
    """Apply fn(first, m) over consecutive path chunks; results in chunk order."""
    starts = list(range(0, n_paths, chunk))
    sizes = [min(chunk, n_paths - s) for s in starts]
    if workers <= 1 or len(starts) == 1:
        return [fn(s, m) for s, m in zip(starts, sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, starts, sizes))


def reaction_terms(reaction, backend):
    """Map state -> (drift, intensity) nodal arrays (None for a zero term)."""
    if reaction.zero_f and reaction.zero_sigma:
        return lambda state, t: (None, None)
    l2 = backend.l2_norm if reaction.N is not None else None

    def terms(state, t):
        u = backend.to_nodal(state)
        drift = None if reaction.zero_f else reaction.drift(backend.nodes, u, l2)
        inten = None if reaction.zero_sigma else reaction.intensity(backend.nodes, u)
        return drift, inten

    return terms


def step(state, t, dt, reaction, dW_slice, backend):
    """One exponential-Euler step u+ = S(dt)[u + dt f(u) + sigma(u) dW]."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    state = np.asarray(state, dtype=float)
    backend.check_state(state)
    drift, inten = reaction_terms(reaction, backend)(state, t)
    return backend.mild_step(state, dt, drift, inten, np.asarray(dW_slice, dtype=float))


def integrate(backend, grid, dW, state, terms, record=None, record_idx=()):
    """Core loop. ``dW`` is (m, K, steps); ``state`` is (..., m, size).

    ``record(i, state)`` is called at every index in ``record_idx``.
    """
    record_idx = set(record_idx)
    if record is not None and 0 in record_idx:
        record(0, state)
    for i in range(grid.size - 1):
        t, dt = grid[i], grid[i + 1] - grid[i]
        drift, inten = terms(state, t)
        state = backend.mild_step(state, dt, drift, inten, dW[:, :, i])
        if not np.all(np.isfinite(state)):
            raise SolveError(i, grid[i + 1])
        if record is not None and i + 1 in record_idx:
            record(i + 1, state)
    return state


@dataclass
class Trajectory:
    times: np.ndarray
    observables: dict
    final: np.ndarray
    backend: str
    seed: int
    M: int
    states: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def _initial(u0, backend, m, first=0):
    if callable(u0):
        base = backend.from_nodal(np.asarray(u0(backend.nodes), dtype=float))
        return np.broadcast_to(base, (m, backend.state_size)).copy()
    u0 = np.asarray(u0, dtype=float)
    backend.check_state(u0)
    if u0.ndim == 1:
        return np.broadcast_to(u0, (m, backend.state_size)).copy()
    return u0[first:first + m].copy()


def record_indices(n_points, stride):
    idx = list(range(0, n_points, stride))
    if idx[-1] != n_points - 1:
        idx.append(n_points - 1)
    return idx


def _ensemble(backend, grid, dt, noise, seed, M, chunk, workers, init_fn, terms, observables, stride, store_states):
    idx = record_indices(grid.size, stride)
    pos = {i: j for j, i in enumerate(idx)}

    def work(first, m):
        if isinstance(noise, NoisePath):
            dW = noise.increments[first:first + m]
        else:
            dW = chunk_noise(noise, grid, seed, first, m, dt)
        obs = {name: [None] * len(idx) for name in observables}
        snaps = [None] * len(idx) if store_states else None

        def record(i, state):
            j = pos[i]
            for name, fn in observables.items():
                obs[name][j] = fn(state)
            if store_states:
                snaps[j] = state.copy()

        final = integrate(backend, grid, dW, init_fn(first, m), terms, record, idx)
        obs = {k: np.stack(v, axis=1) for k, v in obs.items()}
        return obs, (np.stack(snaps, axis=1) if store_states else None), final

    parts = run_chunks(M, chunk, work, workers)
    observ = {k: np.concatenate([p[0][k] for p in parts]) for k in observables}
    states = np.concatenate([p[1] for p in parts]) if store_states else None
    final = np.concatenate([p[2] for p in parts])
    return grid[idx], observ, states, final


def solve(u0, window, reaction, noise, dt, seed=None, backend=None, M=1, chunk=DEFAULT_CHUNK,
          observables=None, stride=1, store_states=False, workers=None):
    """Ensemble of mild solutions on ``window`` = (t0, T).

    Parameters
    ----------
    u0 : array_like or callable
        Initial state (state layout of ``backend``), one per path, or a
        function of the nodes.
    noise : NoiseSpec or NoisePath
        A spec draws fresh increments per path from ``seed``; a path
        supplies them explicitly (its grid must match).
    observables : dict, optional
        name -> fn(states) recorded every ``stride`` steps; defaults to
        the squared H-norm.
    """
    t0, T = window
    grid = time_grid(t0, T, dt)
    if isinstance(noise, NoisePath):
        if noise.time_grid.size != grid.size or not np.allclose(noise.time_grid, grid):
            raise ValueError("noise path grid does not match the solver grid")
        M = noise.M
        seed = noise.seed if seed is None else seed
    else:
        seed = noise.seed if seed is None else seed
    observables = {"norm_sq_H": backend.norm_sq_H} if observables is None else observables
    terms = reaction_terms(reaction, backend)
    times, obs, states, final = _ensemble(
        backend, grid, dt, noise, seed, M, chunk, workers or default_workers(),
        lambda first, m: _initial(u0, backend, m, first), terms, observables, stride, store_states,
    )
    return Trajectory(times, obs, final, backend.tag, seed, M, states,
                      meta={"dt": dt, "window": (t0, T), "reaction": reaction.echo(), **backend.describe()})


def stochastic_convolution(alpha, phi, window, noise, dt, backend, M=1, seed=None, chunk=DEFAULT_CHUNK,
                           observables=None, stride=1, store_states=False, workers=None):
    """Two-sided integrals int_{-T0}^t S(t-s) alpha ds + int_{-T0}^t S(t-s) phi dW.

    ``alpha`` and ``phi`` are callables (t, nodes) -> nodal arrays, or None
    for zero. The window is (-T0, T1) with burn-in T0 > 0; the state starts
    from 0 at -T0.
    """
    T0, T1 = -window[0], window[1]
    if not T0 > 0:
        raise ValueError("burn-in T0 must be positive")
    if backend.tag != "gauss":
        raise ValueError("the stationary construction needs the exponentially contracting gauss backend")
    grid = time_grid(-T0, T1, dt)
    seed = noise.seed if seed is None else seed
    nodes = backend.nodes

    def terms(state, t):
        a = None if alpha is None else np.asarray(alpha(t, nodes), dtype=float)
        p = None if phi is None else np.asarray(phi(t, nodes), dtype=float)
        return a, p

    observables = {"norm_sq_H": backend.norm_sq_H} if observables is None else observables
    times, obs, states, final = _ensemble(
        backend, grid, dt, noise, seed, M, chunk, workers or default_workers(),
        lambda first, m: backend.zero_state(m), terms, observables, stride, store_states,
    )
    return Trajectory(times, obs, final, backend.tag, seed, M, states,
                      meta={"dt": dt, "window": (-T0, T1), "burn_in": T0, **backend.describe()})


def mean_and_stderr(samples, axis=0):
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[axis]
    mean = samples.mean(axis=axis)
    if n < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, samples.std(axis=axis, ddof=1) / math.sqrt(n)
