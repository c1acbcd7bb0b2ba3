"""Exact spectral reduction of a gradient reaction-diffusion equation, with
reduced, stochastic and large-deviation layers on the reduced energy."""
from .errors import (
    BlowUp, BoxTooSmall, CheckFailed, CflViolation, ConfigInvalid, ContractionViolated,
    GradReduceError, MaxIterations, NoConvergence, NonPositiveDensity,
    SlopeAssertionFailed, StabilityGuard, SupportMismatch,
)
from .potentials import Potential
from .spectral import SpectralBasis
from .reduction import (
    ReducedPotential, TailSolution, contraction_margin, find_equilibria,
    invariance_defect, manifold_map, reduced_energy, reduced_gradient, solve_tail,
)
from .landscapes import Quadratic, QuarticDoubleWell

__version__ = "0.1.0"
