"""Quasimorphisms along random walks on free and free abelian groups."""

from .group import AlphabetError, CapacityError, FreeAbelianGroup, FreeGroup, group_from_spec
from .measure import FiniteMeasure, convolution_powers, convolve, convolve_power, support_generates
from .quasimorphism import (
    BoundedNoise,
    BrooksQuasimorphism,
    ConfigError,
    Homomorphism,
    combine,
    defect_lower_bound,
    homogenize,
)
from .harmonic import biharmonic_approx, distortion, monte_carlo_approx, residuals, tameness_check
from .montecarlo import WalkConfig, clt_experiment, ks_statistic, lil_track, run_walk

__all__ = [
    "AlphabetError", "CapacityError", "ConfigError", "FreeGroup", "FreeAbelianGroup", "group_from_spec",
    "FiniteMeasure", "convolve", "convolve_power", "convolution_powers", "support_generates",
    "Homomorphism", "BrooksQuasimorphism", "BoundedNoise", "combine", "homogenize", "defect_lower_bound",
    "distortion", "biharmonic_approx", "monte_carlo_approx", "residuals", "tameness_check",
    "WalkConfig", "run_walk", "clt_experiment", "ks_statistic", "lil_track",
]
