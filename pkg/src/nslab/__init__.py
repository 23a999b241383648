"""Mild-solution Navier-Stokes laboratory on periodic boxes.

Spectral operators, Littlewood-Paley and Besov tools, a mild-form solver with
Picard diagnostics, blowup-rate functionals and a profile-decomposition
toolkit.
"""

from .errors import (
    ConfigError,
    DomainError,
    GridMismatchError,
    IntervalError,
    NotDivergenceFreeError,
    NSLabError,
    NumericalDivergenceError,
    ResolutionError,
    SupportError,
    SymmetryError,
    WindowError,
)
from .spectral import Grid, SpectralField, Trajectory, leray_project, lp_norm, sup_norm, to_physical, to_spectral
from .mild import SolverConfig, solve_local, solve_perturbed, picard_iterate, check_global_criterion
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"
