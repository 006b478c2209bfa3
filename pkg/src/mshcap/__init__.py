"""Weighted m-subharmonic measures and condenser capacities on grids in C^n.

The package discretises a condenser (a compact set K inside a bounded domain
D in C^n, n = 1 or 2) on a uniform lattice, computes the weighted
m-subharmonic measure of K as a Perron envelope by monotone sweeping, and
evaluates condenser capacities from the envelope's complex-Hessian measure,
together with independent oracles and a property-verification suite.
"""

from .capacity import (
    CapacityReport,
    capacity_direct_oracle,
    capacity_via_measure,
    fit_convergence_order,
    outer_capacity,
    polar_bounds_check,
    tau,
    unweighted_capacity,
)
from .envelope import (
    EnvelopeSolution,
    boundary_residual,
    local_resolve,
    maximality_residual,
    regularity_report,
    solve_envelope,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    EmptyCompactError,
    EmptyFamilyError,
    EvalGuardError,
    InfeasibleError,
    MshcapError,
    NonmonotoneSequenceError,
    SeparationError,
    StencilError,
)
from .expr import WeightExpression, parse as parse_expression
from .grid import (
    Annulus,
    Ball,
    Box,
    CondenserSpec,
    GridDomain,
    ScalarField,
    Union,
    build_domain,
    dump_field_csv,
    integrate,
    refine,
)
from .hessian import (
    HessianSpectrum,
    MeasureField,
    MembershipReport,
    complex_hessian,
    hessian_density,
    is_m_subharmonic,
    spectrum,
)
from .verify import SuiteConfig, SuiteReport, run_suite

__version__ = "0.1.0"
