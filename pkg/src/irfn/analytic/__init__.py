"""Large-N characteristic-function machinery: grids, debt laws, shock kernels and the cascade map."""

from __future__ import annotations

from .cascade import (
    AnalyticReport,
    DivergentExponent,
    EquilibriumResult,
    NoConvergence,
    OpCounter,
    blended_default_probability,
    cascade_map_step,
    default_probabilities,
    run_analytic,
    solve_equilibrium,
)
from .grid import CfGrid, ClampWarning, Grid, auto_grid, default_probability, initial_cf, standard_grid
from .kernel import (
    KernelOptions,
    QuadratureFailure,
    ShockKernel,
    TailNotResolved,
    build_shock_kernel,
    kernel_R_fourier,
    kernel_R_ka,
)
from .laws import DebtLaw, MassDeficitError, debt_law, degree_cf_limit, interbank_debt_cf

__all__ = [
    "AnalyticReport",
    "CfGrid",
    "ClampWarning",
    "DebtLaw",
    "DivergentExponent",
    "EquilibriumResult",
    "Grid",
    "KernelOptions",
    "MassDeficitError",
    "NoConvergence",
    "OpCounter",
    "QuadratureFailure",
    "ShockKernel",
    "TailNotResolved",
    "auto_grid",
    "blended_default_probability",
    "build_shock_kernel",
    "cascade_map_step",
    "debt_law",
    "default_probabilities",
    "default_probability",
    "degree_cf_limit",
    "initial_cf",
    "interbank_debt_cf",
    "kernel_R_fourier",
    "kernel_R_ka",
    "run_analytic",
    "solve_equilibrium",
    "standard_grid",
]
