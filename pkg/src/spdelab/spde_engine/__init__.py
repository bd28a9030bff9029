"""Mild-solution time stepping, Picard well-posedness and stationary solutions."""

from .backends import GaussSpectralBackend, HeatTorusBackend, make_backend, torus_radius
from .reaction import (ReactionSpec, bounded_reaction, constant_reaction, cutoff_reaction, lipschitz_reaction,
                       probe_constraints, smooth_switch, switch_lipschitz, zero_reaction)
from .stationary import (DecaySeries, NonContraction, PicardResult, SmallnessCertificate, StationaryEnsemble,
                         build_stationary, picard_gamma, picard_solve, stability_pair)
from .stepping import SolveError, Trajectory, solve, step, stochastic_convolution, time_grid

__all__ = [
    "GaussSpectralBackend", "HeatTorusBackend", "make_backend", "torus_radius",
    "ReactionSpec", "bounded_reaction", "constant_reaction", "cutoff_reaction", "lipschitz_reaction",
    "probe_constraints", "smooth_switch", "switch_lipschitz", "zero_reaction",
    "DecaySeries", "NonContraction", "PicardResult", "SmallnessCertificate", "StationaryEnsemble",
    "build_stationary", "picard_gamma", "picard_solve", "stability_pair",
    "SolveError", "Trajectory", "solve", "step", "stochastic_convolution", "time_grid",
]
