"""Domain-decomposition splitting schemes for nonlinear diffusion.

The package builds overlapping covers of a structured grid, splits a
nonlinear diffusion operator into weighted pieces supported on the cover,
and advances the evolution with resolvent-based splitting schemes whose
pieces are solved independently (optionally in parallel) per time step.
"""

from .decomposition import (
    Box,
    DecompositionLayout,
    PartitionOfUnity,
    Subdomain,
    build_decomposition,
    build_partition_of_unity,
    check_separating_condition,
    decompose,
    snapped_overlap,
    support_closure,
)
from .errors import (
    DDSplitError,
    GridMismatch,
    InfeasibleLayout,
    IntegrationError,
    InvalidCoefficient,
    InvalidConfig,
    InvalidExtent,
    InvalidParams,
    InvalidStep,
    NonConvergence,
    ReferenceUnavailable,
    SingularOperator,
    StepTooLarge,
    TooCoarse,
    UncoveredNode,
)
from .grid import (
    Field,
    FluxField,
    Grid,
    build_grid,
    dirichlet_laplacian,
    divergence_neumann,
    flux_inner,
    gradient,
    hminus1_inner,
    hminus1_norm,
    l2_inner,
    l2_norm,
)
from .demos import DEMOS, demo_config, demo_names
from .harness import (
    BarenblattParams,
    ConvergenceReport,
    ExperimentConfig,
    ProbeRow,
    ReportRow,
    RunContext,
    barenblatt,
    barenblatt_field,
    barenblatt_support_radius,
    build_context,
    config_from_dict,
    emit_csv,
    load_config,
    mass_constant,
    propagation_probe,
    random_smooth_field,
    read_csv,
    run_check,
    run_convergence_study,
    summary_lines,
)
from .integrators import (
    PERTURBATIONS,
    SCHEME_KINDS,
    Perturbation,
    SchemeSpec,
    StepStats,
    Trajectory,
    integrate,
    linear_decay_perturbation,
    step_backward_euler,
    step_lie,
    step_perturbed,
    step_sum,
)
from .operators import (
    FULL,
    P_LAPLACE_NEUMANN,
    POROUS_MEDIUM_DIRICHLET,
    ProblemKind,
    SubOperator,
    apply_operator,
    decomposition_residual,
    dissipativity_gap,
    full_operator,
    operators_for,
    pivot_inner,
    pivot_norm,
    sub_operator,
)
from .resolvent import (
    ResolventResult,
    SolverConfig,
    nonexpansivity_audit,
    solve_resolvent,
    yosida_consistency,
)
from .vectorfields import (
    POWER_KINDS,
    SCALAR_KINDS,
    PropertyReport,
    VectorFieldSpec,
    alpha,
    alpha_jacobian,
    check_coefficient_properties,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "DecompositionLayout",
    "PartitionOfUnity",
    "Subdomain",
    "build_decomposition",
    "build_partition_of_unity",
    "check_separating_condition",
    "decompose",
    "snapped_overlap",
    "support_closure",
    "DDSplitError",
    "GridMismatch",
    "InfeasibleLayout",
    "IntegrationError",
    "InvalidCoefficient",
    "InvalidConfig",
    "InvalidExtent",
    "InvalidParams",
    "InvalidStep",
    "NonConvergence",
    "ReferenceUnavailable",
    "SingularOperator",
    "StepTooLarge",
    "TooCoarse",
    "UncoveredNode",
    "Field",
    "FluxField",
    "Grid",
    "build_grid",
    "dirichlet_laplacian",
    "divergence_neumann",
    "flux_inner",
    "gradient",
    "hminus1_inner",
    "hminus1_norm",
    "l2_inner",
    "l2_norm",
    "DEMOS",
    "demo_config",
    "demo_names",
    "BarenblattParams",
    "ConvergenceReport",
    "ExperimentConfig",
    "ProbeRow",
    "ReportRow",
    "RunContext",
    "barenblatt",
    "barenblatt_field",
    "barenblatt_support_radius",
    "build_context",
    "config_from_dict",
    "emit_csv",
    "load_config",
    "mass_constant",
    "propagation_probe",
    "random_smooth_field",
    "read_csv",
    "run_check",
    "run_convergence_study",
    "summary_lines",
    "PERTURBATIONS",
    "SCHEME_KINDS",
    "Perturbation",
    "SchemeSpec",
    "StepStats",
    "Trajectory",
    "integrate",
    "linear_decay_perturbation",
    "step_backward_euler",
    "step_lie",
    "step_perturbed",
    "step_sum",
    "FULL",
    "P_LAPLACE_NEUMANN",
    "POROUS_MEDIUM_DIRICHLET",
    "ProblemKind",
    "SubOperator",
    "apply_operator",
    "decomposition_residual",
    "dissipativity_gap",
    "full_operator",
    "operators_for",
    "pivot_inner",
    "pivot_norm",
    "sub_operator",
    "ResolventResult",
    "SolverConfig",
    "nonexpansivity_audit",
    "solve_resolvent",
    "yosida_consistency",
    "POWER_KINDS",
    "SCALAR_KINDS",
    "PropertyReport",
    "VectorFieldSpec",
    "alpha",
    "alpha_jacobian",
    "check_coefficient_properties",
    "__version__",
]
