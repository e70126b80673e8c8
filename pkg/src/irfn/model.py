"""Model specification, balance-sheet laws and the pointwise cascade functions.

Bank types are 0-based integers in the Python API (``0 .. M-1``); config and
CSV files use the 1-based labels ``1 .. M``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from numpy.typing import ArrayLike, NDArray

from .distributions import DistributionFamily

BALANCE_FIELDS = ("A", "Xi", "Delta")


class SpecError(ValueError):
    """Raised when a ModelSpec violates one of its invariants."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(f"{v.code}: {v.message}" for v in violations))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class BalanceSheet:
    """Post-trigger balance sheet of one bank."""

    A: float
    Xi: float
    Delta: float

    def __post_init__(self) -> None:
        if self.A < 0:
            raise ValueError("external illiquid assets must be non-negative")


@dataclass(frozen=True, eq=False)
class BalanceLaw:
    """Law of B = [A, Xi, Delta] for one bank type.

    Components are independent given the type unless ``joint`` holds observed
    rows, in which case sampling resamples whole rows.
    """

    A: DistributionFamily
    Xi: DistributionFamily
    Delta: DistributionFamily
    joint: NDArray[np.float64] | None = None

    def marginal(self, name: str) -> DistributionFamily:
        return getattr(self, name)

    def sample(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        if self.joint is not None:
            idx = rng.integers(0, len(self.joint), n)
            return self.joint[idx].copy()
        return np.column_stack([self.A.sample(rng, n), self.Xi.sample(rng, n), self.Delta.sample(rng, n)])

    def to_dict(self) -> dict[str, Any]:
        out = {name: self.marginal(name).to_dict() for name in BALANCE_FIELDS}
        if self.joint is not None:
            out["joint"] = self.joint.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> BalanceLaw:
        joint = np.asarray(d["joint"], dtype=float) if "joint" in d else None
        return cls(*(DistributionFamily.from_dict(d[name]) for name in BALANCE_FIELDS), joint=joint)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Type distribution, connection kernel, conditional laws and recovery parameter.

    ``exposure[T][T2]`` is the law of the exposure on an edge from a type-T
    debtor to a type-T2 creditor.  ``kernel[T][T2]`` is kappa(T, T2): an edge
    v -> w (v owes w) is present with probability kappa(T_v, T_w) / (N - 1).
    """

    type_probs: NDArray[np.float64]
    kernel: NDArray[np.float64]
    exposure: tuple[tuple[DistributionFamily, ...], ...]
    balance: tuple[BalanceLaw, ...]
    recovery_lambda: float = 1.0
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "type_probs", np.asarray(self.type_probs, dtype=float))
        object.__setattr__(self, "kernel", np.atleast_2d(np.asarray(self.kernel, dtype=float)))
        object.__setattr__(self, "exposure", tuple(tuple(row) for row in self.exposure))
        object.__setattr__(self, "balance", tuple(self.balance))

    @property
    def num_types(self) -> int:
        return len(self.type_probs)

    @classmethod
    def homogeneous(
        cls,
        type_probs: ArrayLike,
        kernel: ArrayLike,
        exposure: DistributionFamily,
        balance: BalanceLaw,
        recovery_lambda: float = 1.0,
        name: str = "",
    ) -> ModelSpec:
        """Spec where every type pair shares one exposure law and every type one balance law."""
        m = len(np.atleast_1d(type_probs))
        return cls(
            np.atleast_1d(type_probs),
            kernel,
            tuple(tuple(exposure for _ in range(m)) for _ in range(m)),
            tuple(balance for _ in range(m)),
            recovery_lambda,
            name,
        )

    def replace(self, **changes: Any) -> ModelSpec:
        fields = dict(
            type_probs=self.type_probs,
            kernel=self.kernel,
            exposure=self.exposure,
            balance=self.balance,
            recovery_lambda=self.recovery_lambda,
            name=self.name,
        )
        fields.update(changes)
        return ModelSpec(**fields)

    def check(self, n: int | None = None) -> None:
        violations = validate_spec(self, n)
        if violations:
            raise SpecError(violations)

    # derived rates --------------------------------------------------------

    def out_rates(self) -> NDArray[np.float64]:
        """m_out[T, T2] = P(T2) kappa(T, T2): mean number of type-T2 creditors of a type-T bank."""
        return self.kernel * self.type_probs[None, :]

    def in_rates(self) -> NDArray[np.float64]:
        """m_in[T, T2] = P(T2) kappa(T2, T): mean number of type-T2 debtors of a type-T bank."""
        return self.kernel.T * self.type_probs[None, :]

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        m = self.num_types
        return {
            "name": self.name,
            "num_types": m,
            "type_probs": [float(p) for p in self.type_probs],
            "kernel": [[float(x) for x in row] for row in self.kernel],
            "recovery_lambda": float(self.recovery_lambda),
            "exposure": {"pairs": {f"{t + 1},{s + 1}": self.exposure[t][s].to_dict() for t in range(m) for s in range(m)}},
            "balance": {"types": {str(t + 1): self.balance[t].to_dict() for t in range(m)}},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ModelSpec:
        probs = np.asarray(d["type_probs"], dtype=float)
        m = int(d.get("num_types", len(probs)))
        if m != len(probs):
            raise SpecError([Violation("num_types_mismatch", f"num_types={m} but {len(probs)} probabilities")])
        exp_cfg = d["exposure"]
        default = exp_cfg.get("default")
        pairs = exp_cfg.get("pairs", {})
        exposure = []
        for t in range(m):
            row = []
            for s in range(m):
                entry = pairs.get(f"{t + 1},{s + 1}", default)
                if entry is None:
                    raise SpecError([Violation("exposure_missing", f"no exposure law for pair ({t + 1},{s + 1})")])
                row.append(DistributionFamily.from_dict(entry))
            exposure.append(tuple(row))
        bal_cfg = d["balance"]
        bdefault = bal_cfg.get("default")
        btypes = bal_cfg.get("types", {})
        balance = []
        for t in range(m):
            entry = btypes.get(str(t + 1), bdefault)
            if entry is None:
                raise SpecError([Violation("balance_missing", f"no balance law for type {t + 1}")])
            balance.append(BalanceLaw.from_dict(entry))
        return cls(probs, d["kernel"], tuple(exposure), tuple(balance), float(d.get("recovery_lambda", 1.0)), d.get("name", ""))


def load_spec(path: str | Path) -> ModelSpec:
    with open(path) as fh:
        return ModelSpec.from_dict(yaml.safe_load(fh))


def save_spec(spec: ModelSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(spec.to_dict(), fh, sort_keys=False)


def validate_spec(spec: ModelSpec, n: int | None = None) -> list[Violation]:
    """Every violated ModelSpec invariant, as machine-readable codes.  Empty if valid."""
    out: list[Violation] = []
    p = spec.type_probs
    m = len(p)
    if m < 1:
        return [Violation("no_types", "at least one bank type is required")]
    if np.any(p < 0):
        out.append(Violation("type_probs_negative", f"negative type probabilities {p.tolist()}"))
    if not np.isclose(p.sum(), 1.0, rtol=0, atol=1e-9):
        out.append(Violation("type_probs_not_normalized", f"type probabilities sum to {p.sum():.12g}"))
    if spec.kernel.shape != (m, m):
        out.append(Violation("kernel_shape", f"kernel has shape {spec.kernel.shape}, expected {(m, m)}"))
    else:
        if np.any(spec.kernel < 0) or not np.all(np.isfinite(spec.kernel)):
            out.append(Violation("kernel_negative", "kernel entries must be finite and non-negative"))
        if n is not None and n - 1 < spec.kernel.max():
            out.append(Violation("kernel_exceeds_n", f"N-1={n - 1} is below max kappa={spec.kernel.max():g}"))
    if len(spec.exposure) != m or any(len(row) != m for row in spec.exposure):
        out.append(Violation("exposure_shape", "exposure laws must form an M x M table"))
    else:
        for t in range(m):
            for s in range(m):
                if not spec.exposure[t][s].is_positive:
                    out.append(Violation("exposure_not_positive", f"exposure law ({t + 1},{s + 1}) is not supported on (0, inf)"))
    if len(spec.balance) != m:
        out.append(Violation("balance_shape", f"{len(spec.balance)} balance laws for {m} types"))
    else:
        for t, law in enumerate(spec.balance):
            if law.joint is not None:
                if np.any(law.joint[:, 0] < 0):
                    out.append(Violation("asset_not_positive", f"type {t + 1}: observed A has negative entries"))
            elif not law.A.is_positive:
                out.append(Violation("asset_not_positive", f"type {t + 1}: A law is not supported on (0, inf)"))
    lam = spec.recovery_lambda
    if not (0.0 < lam <= 1.0):
        out.append(Violation("lambda_out_of_range", f"recovery lambda {lam} is outside (0, 1]"))
    return out


def _check_lambda(lam: float) -> None:
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"recovery lambda must lie in (0, 1], got {lam}")


def loss_fraction(u: ArrayLike, lam: float) -> NDArray[np.float64] | float:
    """g_lambda(u) = min(1, max(-u / lambda, 0)): fraction of interbank debt not repaid."""
    _check_lambda(lam)
    out = np.clip(-np.asarray(u, dtype=float) / lam, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def shock_transmission(x: ArrayLike, y: ArrayLike, z: ArrayLike, lam: float) -> NDArray[np.float64] | float:
    """G_lambda(x, y, z) = z * g_lambda(y / (x + z)), with G = 0 where x + z = 0.

    x is the debtor's remaining interbank debt, y its solvency buffer and z the
    exposure of the creditor receiving the shock.
    """
    _check_lambda(lam)
    x, y, z = (np.asarray(a, dtype=float) for a in (x, y, z))
    total = x + z
    safe = np.where(total > 0, total, 1.0)
    with np.errstate(over="ignore"):  # a huge ratio clips to 0 or 1 either way
        out = np.where(total > 0, z * np.clip(-(y / safe) / lam, 0.0, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out
