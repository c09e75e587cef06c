"""Nehari-set ground states for nonsmooth BV-type energies on a grid."""

from .bv_calculus import (
    DiscreteDomain,
    GradientField,
    ScalarField,
    TvFlavor,
    boundary_trace_term,
    bv_norm,
    gradient,
    i0,
    i0_dirderiv_ray,
    i0_tilde,
    i0_tilde_dirderiv_ray,
    lattice_pair,
    tv,
)
from .errors import (
    AllRestartsFailed,
    AuditFailed,
    BracketFailureHigh,
    BracketFailureLow,
    ConfigError,
    DomainMismatch,
    MissingDerivative,
    NehariError,
    ZeroDirection,
)
from .fibering import (
    FiberingMap,
    Functional,
    NehariRoot,
    ProblemSpec,
    count_sign_changes,
    g_deriv,
    gamma,
    nehari_project,
    nehari_residual,
    phi,
)
from .ground_state import (
    GroundStateResult,
    SolverConfig,
    p_continuation,
    reduced_objective,
    select_lambda,
    smoothed_phi,
    solve,
)
from .nonlinearity import Custom, Nonlinearity, Power, PowerSum, audit, i_dirderiv_ray, i_functional
from .verification import (
    CriticalityReport,
    NotConverged,
    VectorFieldCertificate,
    certify,
    el_certificate,
    mc_el_residual,
    nondegeneracy,
    subdiff_check,
)

__version__ = "0.1.0"

__all__ = [
    "AllRestartsFailed",
    "AuditFailed",
    "BracketFailureHigh",
    "BracketFailureLow",
    "ConfigError",
    "CriticalityReport",
    "Custom",
    "DiscreteDomain",
    "DomainMismatch",
    "FiberingMap",
    "Functional",
    "GradientField",
    "GroundStateResult",
    "MissingDerivative",
    "NehariError",
    "NehariRoot",
    "Nonlinearity",
    "NotConverged",
    "Power",
    "PowerSum",
    "ProblemSpec",
    "ScalarField",
    "SolverConfig",
    "TvFlavor",
    "VectorFieldCertificate",
    "ZeroDirection",
    "audit",
    "boundary_trace_term",
    "bv_norm",
    "certify",
    "count_sign_changes",
    "el_certificate",
    "g_deriv",
    "gamma",
    "gradient",
    "i0",
    "i0_dirderiv_ray",
    "i0_tilde",
    "i0_tilde_dirderiv_ray",
    "i_dirderiv_ray",
    "i_functional",
    "lattice_pair",
    "mc_el_residual",
    "nehari_project",
    "nehari_residual",
    "nondegeneracy",
    "p_continuation",
    "phi",
    "reduced_objective",
    "select_lambda",
    "smoothed_phi",
    "solve",
    "subdiff_check",
    "tv",
]
