"""Greedy-like signal recovery under the cosparse analysis model.

A signal x is called l-cosparse under an analysis operator when at least l
of its analysis coefficients vanish. This package provides the operators,
cosupport projections, recovery solvers, isometry-constant estimators,
guarantee calculators, and desk-scale experiments for that model.
"""

from .linalg import (LeastSquaresResult, SubspaceProjector,
                     complement_projector, constrained_least_squares,
                     largest_singular_value, penalized_least_squares)
from .operators import (AnalysisOperator, DENSE_KINDS, STRUCTURED_KINDS,
                        corank, cosparsity, cosupport_of, load_operator_csv,
                        make_1d_dif, make_2d_dif, make_dense,
                        make_fused_lasso, make_identity,
                        make_random_tight_frame, make_unitary,
                        save_operator_csv, smallest_coefficients_cosupport)
from .projections import (ProjectionScheme, default_scheme,
                          dif1d_optimal_select, empirical_near_optimality,
                          exhaustive_optimal_select,
                          fused_lasso_optimal_select, project,
                          projection_error, threshold_select)
from .solvers import (DivergenceError, HARD_VARIANTS, MeasurementProblem,
                      RELAXED_VARIANTS, SolverConfig, SolverResult, VARIANTS,
                      acosamp, ahtp, aiht, asp, reference_synthesis,
                      result_record, solve, targeted_cosparsity)
from .theory import (GuaranteeReport, RipEstimate, acosamp_report,
                     aiht_delta_boundary, aiht_report, asp_report,
                     cosupport_deviation, delta_root_acosamp, delta_root_asp,
                     general_position_corank_count, nonexact_bound,
                     omega_rip_exhaustive, omega_rip_sampled,
                     sample_bound_corank, sample_bound_cosparsity)
from .experiments import (PhaseGrid, RadialFourierOperator,
                          default_grid_values, gen_cosparse_problem,
                          load_phase_csv, phantom_experiment, phase_diagram,
                          psnr, radial_fourier_operator, save_image_csv,
                          save_pgm, save_phase_csv, save_report_json,
                          shepp_logan, solver_cosparsity)

__version__ = "1.0.0"

__all__ = [
    "AnalysisOperator", "DENSE_KINDS", "DivergenceError", "GuaranteeReport",
    "HARD_VARIANTS", "LeastSquaresResult", "MeasurementProblem", "PhaseGrid",
    "ProjectionScheme", "RELAXED_VARIANTS", "RadialFourierOperator",
    "RipEstimate", "SolverConfig", "SolverResult", "SubspaceProjector",
    "VARIANTS", "acosamp", "acosamp_report", "ahtp", "aiht",
    "aiht_delta_boundary", "aiht_report", "asp", "asp_report",
    "complement_projector", "constrained_least_squares", "corank",
    "cosparsity", "cosupport_deviation", "cosupport_of", "default_grid_values",
    "default_scheme", "delta_root_acosamp", "delta_root_asp",
    "dif1d_optimal_select", "empirical_near_optimality",
    "exhaustive_optimal_select", "fused_lasso_optimal_select",
    "gen_cosparse_problem", "general_position_corank_count",
    "largest_singular_value", "load_operator_csv", "load_phase_csv",
    "make_1d_dif", "make_2d_dif", "make_dense", "make_fused_lasso",
    "make_identity", "make_random_tight_frame", "make_unitary",
    "nonexact_bound", "omega_rip_exhaustive", "omega_rip_sampled",
    "penalized_least_squares", "phantom_experiment", "phase_diagram",
    "project", "projection_error", "psnr", "radial_fourier_operator",
    "reference_synthesis", "result_record", "sample_bound_corank",
    "sample_bound_cosparsity", "save_image_csv", "save_operator_csv",
    "save_pgm", "save_phase_csv", "save_report_json", "shepp_logan",
    "smallest_coefficients_cosupport", "solve", "solver_cosparsity",
    "targeted_cosparsity", "threshold_select",
]
