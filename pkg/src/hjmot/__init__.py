"""Discrete jump multi-marginal optimal transport: solver, oracles and certificates."""

from .certification import (
    CertificateReport,
    CheckResult,
    certify,
    check_cyclical_monotonicity,
    check_glued_marginals,
    check_splitting,
    decomposition_check,
    glue_pairwise,
    splitting_potentials,
    upper_bound_via_tilde,
)
from .diagnostics import directional_derivative, local_control_probe, twist_probe
from .generators import GeneratorSpec, generate
from .lp_oracle import solve_full_lp_oracle
from .model import (
    SKIP,
    CostFamily,
    CostKind,
    DiscreteMeasure,
    ProblemInstance,
    StageSpace,
    explicit_instance,
    line_instance,
    validate,
)
from .monge import MongeMap, check_discrete_twist, extract_monge_map, uniqueness_probe
from .paths import path_cost
from .reduction import brute_force_reduced_cost, optimal_continuations, reduced_cost_table
from .solver import HJMOTSolution, solve_hjmot
from .transport import TransportPlan, solve_entropic, solve_exact_transport

__version__ = "0.1.0"
