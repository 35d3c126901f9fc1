"""Boundary-degenerate elliptic operators: boundary classification, monotone
finite-difference and obstacle solvers, weighted-space tools and
maximum-principle checks."""

__version__ = "0.1.0"

from .boundary import (BoundaryClassification, BoundaryPlan, BoundarySegment, DomainGrid, boundary_condition_plan,
                       classify, detect_degenerate_boundary, dirichlet_everywhere, fichera_function)
from .errors import (ConvergenceError, DegenerateEllipticError, GeometryError, InputError, NumericError,
                     ParameterDomainError, PrecisionError, ScenarioError, SolverError)
from .fdsolver import DiscreteProblem, DiscreteSolution, assemble, refine_study, solve, solve_bvp
from .obstacle import ObstacleSolution, ObstacleSpec, brute_force_obstacle, solve_obstacle
from .operators import (HestonParams, OperatorSpec, check_heston_ln_condition, commutator_coefficients,
                        conjugate_exponential_affine, make_affine, make_dh_model, make_heston, make_kummer,
                        split_drift)
from .special_functions import KummerEval, kummer_M, verify_kummer_ode

__all__ = [
    "BoundaryClassification", "BoundaryPlan", "BoundarySegment", "DomainGrid", "boundary_condition_plan",
    "classify", "detect_degenerate_boundary", "dirichlet_everywhere", "fichera_function",
    "ConvergenceError", "DegenerateEllipticError", "GeometryError", "InputError", "NumericError",
    "ParameterDomainError", "PrecisionError", "ScenarioError", "SolverError",
    "DiscreteProblem", "DiscreteSolution", "assemble", "refine_study", "solve", "solve_bvp",
    "ObstacleSolution", "ObstacleSpec", "brute_force_obstacle", "solve_obstacle",
    "HestonParams", "OperatorSpec", "check_heston_ln_condition", "commutator_coefficients",
    "conjugate_exponential_affine", "make_affine", "make_dh_model", "make_heston", "make_kummer", "split_drift",
    "KummerEval", "kummer_M", "verify_kummer_ode",
]
