"""Stochastic collapse and decoherence of a driven harmonic oscillator.

Quantum-trajectory and master-equation simulation in a truncated Fock
basis, exact moment and generating-function oracles, the free-mass limit,
the ``sqrt(eta)`` perturbation expansion and order-of-magnitude
detectability estimates.
"""

from .estimator import (CollapseModelParams, ExperimentConfig, collapse_eta, deviation_bounds,
                        preset, sql_limits)
from .fock import FockSpace, expectation_value, ladder_and_quadrature_operators
from .free_mass import (FreeMassMoments, energy_growth_free, evolve_free_moments,
                        free_generating_function)
from .master import DecoherenceSpec, MasterResult, evolve_master, validate_density_matrix
from .model import DriveSpec, OscillatorModel, TruncationError, interaction_propagator
from .oracles import (MomentSet, coherent_element_L, decoherence_shifts, generating_function_K,
                      moment_oracle, moments_from_K)
from .perturbation import perturbative_density, perturbative_variance_correction
from .statistics import (ensemble_stats, ito_isometry_check, large_time_bounds,
                         variance_inequality_check)
from .trajectory import EnsembleResult, NoiseStream, simulate_ensemble, trajectory_step

__version__ = "0.1.0"

__all__ = [
    "CollapseModelParams", "DecoherenceSpec", "DriveSpec", "EnsembleResult", "ExperimentConfig",
    "FockSpace", "FreeMassMoments", "MasterResult", "MomentSet", "NoiseStream", "OscillatorModel",
    "TruncationError", "coherent_element_L", "collapse_eta", "decoherence_shifts", "deviation_bounds",
    "energy_growth_free", "ensemble_stats", "evolve_free_moments", "evolve_master",
    "expectation_value", "free_generating_function", "generating_function_K",
    "interaction_propagator", "ito_isometry_check", "ladder_and_quadrature_operators",
    "large_time_bounds", "moment_oracle", "moments_from_K", "perturbative_density",
    "perturbative_variance_correction", "preset", "simulate_ensemble", "sql_limits",
    "trajectory_step", "validate_density_matrix", "variance_inequality_check",
]
