"""Non-Markovian dissipative collapse of a Gaussian wave packet.

Solves the integro-differential equations whose solutions build the exact
propagator of a stochastic Schrödinger equation driven by exponentially
correlated noise, and evolves Gaussian states with it.
"""

__version__ = "0.1.0"

from .model import ExponentialKernel, ModelParams, TimeGrid, WhiteLimit, kernel_for  # noqa: E402
from .noise import NoiseTrajectory, sample, sample_many  # noqa: E402
from .analytic import BoundaryChoice, characteristic_roots, solve_f, solve_g, solve_h  # noqa: E402
from .ide import IllConditionedError, solve_direct  # noqa: E402
from .propagator import (  # noqa: E402
    VARIANTS,
    CausticError,
    GaussianState,
    ensemble_moments,
    evolve_gaussian,
    evolve_series,
    riccati_alpha,
)

__all__ = [
    "BoundaryChoice",
    "CausticError",
    "ExponentialKernel",
    "GaussianState",
    "IllConditionedError",
    "ModelParams",
    "NoiseTrajectory",
    "TimeGrid",
    "VARIANTS",
    "WhiteLimit",
    "characteristic_roots",
    "ensemble_moments",
    "evolve_gaussian",
    "evolve_series",
    "kernel_for",
    "riccati_alpha",
    "sample",
    "sample_many",
    "solve_direct",
    "solve_f",
    "solve_g",
    "solve_h",
]
