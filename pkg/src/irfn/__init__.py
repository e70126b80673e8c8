"""Inhomogeneous random financial networks: simulation, analytic cascade map, percolation and calibration."""

from __future__ import annotations

__version__ = "0.1.0"

from .distributions import DistributionFamily, empirical_cf
from .model import (
    BalanceLaw,
    BalanceSheet,
    ModelSpec,
    SpecError,
    Violation,
    load_spec,
    loss_fraction,
    save_spec,
    shock_transmission,
    validate_spec,
)
from .network import (
    CascadeTrace,
    Network,
    Skeleton,
    Trigger,
    apply_trigger,
    cascade_step,
    clearing_oracle,
    degree_stats,
    run_cascade,
    sample_network,
    tree_cascade_recursion,
)

__all__ = [
    "BalanceLaw",
    "BalanceSheet",
    "CascadeTrace",
    "DistributionFamily",
    "ModelSpec",
    "Network",
    "Skeleton",
    "SpecError",
    "Trigger",
    "Violation",
    "apply_trigger",
    "cascade_step",
    "clearing_oracle",
    "degree_stats",
    "empirical_cf",
    "load_spec",
    "loss_fraction",
    "run_cascade",
    "sample_network",
    "save_spec",
    "shock_transmission",
    "tree_cascade_recursion",
    "validate_spec",
    "__version__",
]
