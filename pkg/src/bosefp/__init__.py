"""Radial simulator for the bosonic Fokker-Planck equation with superlinear drift."""
from .errors import (BosefpError, ConfigurationError, DomainError, InputError, NumericalError,
                     OracleInapplicable, PropertyViolation, SolverFailure)
from .model import (UNBOUNDED, CutoffProfile, MinimizerMeasure, ModelParams, critical_mass, minimizer,
                    minimizer_energy, potential, potential_slope, regularized_mobility,
                    regularized_potential_slope, slope_inverse, steady_density, steady_mass)

__version__ = "0.1.0"
