"""Conditional symmetries and exact solutions of a hunter-gatherer/farmer
reaction-diffusion system.

Symbolic-numeric toolkit: an expression core, the model catalog of
symmetry-admitting parameter specializations, prolongation-based
invariance checking, symmetry reductions to ODE systems, a catalog of
closed-form solutions, and a finite-difference solver for cross-checks.
"""

from .expr import parse, differentiate, substitute, evaluate
from .model import (HGFParams, RDSystem, hgf_system, case2_system, table_case,
                    case_ids, random_case_params, transform_to_dlv)
from .symmetry import (QOperator, LinearCoefficients, verify_invariance,
                       determining_residuals, determining_report)
from .reduction import (build_ansatz, reduced_ode_system, integrate_ode,
                        first_integral, lift_and_verify)
from .solutions import (exact_solution, solution_ids, pde_residual_on_grid,
                        asymptotics_check, decay_rate, nonneg_domain_4_11,
                        phi_ode_check, property_u_plus_v)
from .pdesim import (SimConfig, SimResult, simulate, error_vs_exact,
                     convergence_order)

__version__ = "0.1.0"
