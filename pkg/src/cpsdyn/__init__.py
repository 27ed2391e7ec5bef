"""Trajectory-based population dynamics of two-level systems on the constraint phase space."""

__version__ = "0.1.0"

from .estimator import (  # noqa: E402
    EnsembleConfig,
    PopulationSeries,
    quadrature_oracle_p,
    run_covariant,
    run_novel,
    run_sqc_twf,
    symmetry_checks,
)
from .propagator import Hamiltonian2, evolution_matrix, exact_population_matrix, propagator_angles  # noqa: E402
from .representations import abel_solve_f, builtin_rep, sqz_closed_forms, validate_xi  # noqa: E402

__all__ = [
    "EnsembleConfig", "Hamiltonian2", "PopulationSeries", "abel_solve_f", "builtin_rep", "evolution_matrix",
    "exact_population_matrix", "propagator_angles", "quadrature_oracle_p", "run_covariant", "run_novel",
    "run_sqc_twf", "sqz_closed_forms", "symmetry_checks", "validate_xi",
]
