"""Numerical laboratory for the cusp model of the linearized Einstein operator.

The package builds the cusp geometry, tensor fields in cusp coordinates,
the model operator and its ODE reduction, the rate-decomposition lemmas,
weighted norms and the bootstrap certification of growth estimates.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .bootstrap import (BootstrapParams, CompatibilityReport, GrowthReport, Setup,
                        bootstrap_step, check_compatibility, extract_trivial_einstein,
                        fit_growing_modes, run_growth_certification, sigma_schedule,
                        step1_averaged_forcing)
from .cusp_operator import (OperatorError, apply_L_cusp, apply_L_full, apply_L_perturbed,
                            check_error_envelope, solve_L_cusp, trace_ode_residual)
from .errors import *  # noqa: F401,F403
from .geometry import (CuspMetric, FlatTorusMetric, PerturbationEnvelope, flat_torus_lambda1,
                       level_torus_area, level_torus_diameter, synthesize_perturbation)
from .grid import RadialGrid, integrate
from .norms import (WeightParams, direct_weighted_l2, norm_0_lambda, poincare_check,
                    weighted_h2, weighted_l2)
from .ode import (Q1, Q2, Q3, GrowthEnvelope, QuadraticODE, RateDecomposition, decompose_growth,
                  decompose_growth_l1, fit_tail_rate, particular_solution, roots, solve_ivp)
from .tensor import (RadialTensorField, TensorField, TrivialEinsteinVariation, average,
                     check_averaging_properties, pointwise_norm, trace)
