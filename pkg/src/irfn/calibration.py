"""Estimating a ModelSpec from monthly exposure and balance-sheet panels, and generating synthetic panels."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .distributions import DistributionFamily, empirical_cf
from .model import BalanceLaw, ModelSpec
from .network import sample_network, sample_types


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ObservationPanel:
    """Banks with fixed types observed over ``months`` snapshots.

    Exposure rows are (month, from, to, amount) where ``from`` owes ``to``;
    only amounts above ``threshold`` are recorded.  Balance rows are
    (month, id, A, Xi, Delta).  Bank ids are positions 0..N-1 and types are
    0-based.
    """

    types: NDArray[np.int64]
    num_types: int
    months: int
    exp_month: NDArray[np.int64]
    exp_from: NDArray[np.int64]
    exp_to: NDArray[np.int64]
    exp_amount: NDArray[np.float64]
    bal_month: NDArray[np.int64]
    bal_id: NDArray[np.int64]
    balances: NDArray[np.float64]
    threshold: float = 0.0

    def __post_init__(self) -> None:
        if np.any(self.exp_amount <= self.threshold):
            raise CalibrationError(f"exposure amounts must exceed the threshold {self.threshold}")
        if np.any(self.exp_from == self.exp_to):
            raise CalibrationError("self-exposures are not allowed")

    @property
    def n_banks(self) -> int:
        return len(self.types)

    def type_counts(self) -> NDArray[np.int64]:
        return np.bincount(self.types, minlength=self.num_types)

    def edge_counts(self) -> NDArray[np.int64]:
        """E[T, T2]: number of recorded exposures from a type-T debtor to a type-T2 creditor, all months."""
        m = self.num_types
        flat = self.types[self.exp_from] * m + self.types[self.exp_to]
        return np.bincount(flat, minlength=m * m).reshape(m, m)

    def raise_threshold(self, theta: float) -> ObservationPanel:
        keep = self.exp_amount > theta
        return ObservationPanel(
            self.types, self.num_types, self.months,
            self.exp_month[keep], self.exp_from[keep], self.exp_to[keep], self.exp_amount[keep],
            self.bal_month, self.bal_id, self.balances, max(theta, self.threshold),
        )

    def relabel(self, perm: ArrayLike) -> ObservationPanel:
        """Same panel with bank v renamed perm[v]."""
        perm = np.asarray(perm)
        types = np.empty_like(self.types)
        types[perm] = self.types
        return ObservationPanel(
            types, self.num_types, self.months,
            self.exp_month, perm[self.exp_from], perm[self.exp_to], self.exp_amount,
            self.bal_month, perm[self.bal_id], self.balances, self.threshold,
        )


# --------------------------------------------------------------------------- estimators


def estimate_type_probs(panel: ObservationPanel) -> NDArray[np.float64]:
    if panel.n_banks == 0:
        raise CalibrationError("empty_panel: no banks observed")
    return panel.type_counts() / panel.n_banks


def estimate_kernel(panel: ObservationPanel) -> NDArray[np.float64]:
    """E[T, T2] / (months * N_T * (N_T2 - [T == T2])): the per-pair monthly edge frequency."""
    counts = panel.type_counts().astype(float)
    denom = counts[:, None] * (counts[None, :] - np.eye(panel.num_types)) * panel.months
    if np.any(counts == 1):
        raise CalibrationError("degenerate_type_count: a type with a single bank has no same-type pairs")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, panel.edge_counts() / np.where(denom > 0, denom, 1.0), 0.0)
    return out


def estimate_kernel_corrected(panel: ObservationPanel) -> NDArray[np.float64]:
    """Kernel on the kappa scale: the edge frequency times (N - 1)."""
    return estimate_kernel(panel) * (panel.n_banks - 1)


def kernel_stderr(panel: ObservationPanel) -> NDArray[np.float64]:
    """Binomial standard error of ``estimate_kernel_corrected`` given the type counts."""
    counts = panel.type_counts().astype(float)
    pairs = counts[:, None] * (counts[None, :] - np.eye(panel.num_types)) * panel.months
    p = estimate_kernel(panel)
    with np.errstate(invalid="ignore", divide="ignore"):
        se = np.sqrt(np.where(pairs > 0, p * (1 - p) / pairs, 0.0))
    return se * (panel.n_banks - 1)


def pair_amounts(panel: ObservationPanel, t: int, t2: int) -> NDArray[np.float64]:
    mask = (panel.types[panel.exp_from] == t) & (panel.types[panel.exp_to] == t2)
    return panel.exp_amount[mask]


def empirical_exposure_cf(
    panel: ObservationPanel, t: int, t2: int, k: ArrayLike
) -> tuple[NDArray[np.complex128], DistributionFamily]:
    """Empirical CF of the recorded exposures from type t to type t2, and the matching empirical law."""
    amounts = pair_amounts(panel, t, t2)
    if amounts.size == 0:
        raise CalibrationError(f"no_observations_for_pair: ({t + 1},{t2 + 1})")
    return empirical_cf(amounts, k), DistributionFamily.empirical(amounts)


def balance_rows(panel: ObservationPanel, t: int) -> NDArray[np.float64]:
    rows = panel.balances[panel.types[panel.bal_id] == t]
    if len(rows) == 0:
        raise CalibrationError(f"no_banks_of_type: {t + 1}")
    return rows


def empirical_balance_cf(
    panel: ObservationPanel, t: int, k_a: ArrayLike, k_xi: ArrayLike, k_delta: ArrayLike
) -> tuple[NDArray[np.complex128], NDArray[np.complex128], NDArray[np.complex128]]:
    """Marginal empirical CFs of A, Xi and Delta over all months for banks of type t."""
    rows = balance_rows(panel, t)
    return empirical_cf(rows[:, 0], k_a), empirical_cf(rows[:, 1], k_xi), empirical_cf(rows[:, 2], k_delta)


def joint_balance_cf(panel: ObservationPanel, t: int, u: ArrayLike) -> NDArray[np.complex128]:
    """Trivariate empirical CF at points ``u`` of shape (n, 3); reported, not used by the cascade."""
    rows = balance_rows(panel, t)
    u = np.atleast_2d(np.asarray(u, dtype=float))
    return np.exp(1j * (u @ rows.T)).mean(axis=1)


@dataclass
class CalibrationResult:
    spec: ModelSpec
    kernel_raw: NDArray[np.float64]
    kernel_stderr: NDArray[np.float64]
    pooled_pairs: list[tuple[int, int]] = field(default_factory=list)


def calibrate(panel: ObservationPanel, recovery_lambda: float = 1.0, name: str = "calibrated") -> CalibrationResult:
    """Estimate every ingredient of a ModelSpec from the panel.

    Pairs with no recorded exposures use the pooled law of all exposures and
    are listed in ``pooled_pairs``.
    """
    probs = estimate_type_probs(panel)
    raw = estimate_kernel(panel)
    m = panel.num_types
    if panel.exp_amount.size == 0:
        raise CalibrationError("no_observations_for_pair: the panel records no exposures at all")
    pooled = DistributionFamily.empirical(panel.exp_amount)
    exposure, pooled_pairs = [], []
    for t in range(m):
        row = []
        for t2 in range(m):
            amounts = pair_amounts(panel, t, t2)
            if amounts.size:
                row.append(DistributionFamily.empirical(amounts))
            else:
                row.append(pooled)
                pooled_pairs.append((t, t2))
        exposure.append(tuple(row))
    balance = []
    for t in range(m):
        rows = balance_rows(panel, t)
        balance.append(
            BalanceLaw(*(DistributionFamily.empirical(rows[:, j]) for j in range(3)), joint=rows.copy())
        )
    spec = ModelSpec(probs, raw * (panel.n_banks - 1), tuple(exposure), tuple(balance), recovery_lambda, name)
    return CalibrationResult(spec, raw, kernel_stderr(panel), pooled_pairs)


# --------------------------------------------------------------------------- synthetic panels


def generate_synthetic_panel(
    spec: ModelSpec, n_banks: int, months: int, threshold: float = 0.0, seed: int = 0
) -> ObservationPanel:
    """Independent monthly networks on one fixed set of typed banks.

    Child seed 0 draws the types; child seed 1 + j drives month j.
    """
    root = np.random.SeedSequence(seed)
    type_seq, *month_seqs = root.spawn(months + 1)
    types = sample_types(spec, n_banks, np.random.default_rng(type_seq))
    em, ef, et, ea, bm, bi, bal = [], [], [], [], [], [], []
    for j, seq in enumerate(month_seqs):
        net = sample_network(spec, n_banks, seq, types=types)
        keep = net.omega > threshold
        em.append(np.full(int(keep.sum()), j))
        ef.append(net.skeleton.src[keep])
        et.append(net.skeleton.dst[keep])
        ea.append(net.omega[keep])
        bm.append(np.full(n_banks, j))
        bi.append(np.arange(n_banks))
        bal.append(net.balance)
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
    return ObservationPanel(
        types, spec.num_types, months,
        cat(em, np.int64), cat(ef, np.int64), cat(et, np.int64), cat(ea, float),
        cat(bm, np.int64), cat(bi, np.int64), np.concatenate(bal) if bal else np.zeros((0, 3)),
        float(threshold),
    )


# --------------------------------------------------------------------------- CSV I/O


def save_panel(panel: ObservationPanel, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "banks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "type"])
        for v, t in enumerate(panel.types):
            w.writerow([v, int(t) + 1])
    with open(d / "exposures.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["month", "from", "to", "amount"])
        for row in zip(panel.exp_month, panel.exp_from, panel.exp_to, panel.exp_amount):
            w.writerow([int(row[0]) + 1, int(row[1]), int(row[2]), repr(float(row[3]))])
    with open(d / "balances.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["month", "id", "A", "Xi", "Delta"])
        for mth, v, b in zip(panel.bal_month, panel.bal_id, panel.balances):
            w.writerow([int(mth) + 1, int(v)] + [repr(float(x)) for x in b])


def _read(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_panel(directory: str | Path, num_types: int | None = None, threshold: float = 0.0) -> ObservationPanel:
    """Read banks.csv, exposures.csv and balances.csv (months and types 1-based, ids as written)."""
    d = Path(directory)
    banks = _read(d / "banks.csv")
    ids = [r["id"] for r in banks]
    index = {b: i for i, b in enumerate(ids)}
    if len(index) != len(ids):
        raise CalibrationError("banks.csv lists a bank id twice")
    types = np.array([int(r["type"]) - 1 for r in banks], dtype=np.int64)
    if types.size and types.min() < 0:
        raise CalibrationError("bank types are 1-based")
    m = num_types or (int(types.max()) + 1 if types.size else 1)
    exps = _read(d / "exposures.csv")
    bals = _read(d / "balances.csv")
    try:
        ef = np.array([index[r["from"]] for r in exps], dtype=np.int64)
        et = np.array([index[r["to"]] for r in exps], dtype=np.int64)
        bi = np.array([index[r["id"]] for r in bals], dtype=np.int64)
    except KeyError as exc:
        raise CalibrationError(f"unknown bank id {exc.args[0]!r}") from None
    em = np.array([int(r["month"]) - 1 for r in exps], dtype=np.int64)
    bm = np.array([int(r["month"]) - 1 for r in bals], dtype=np.int64)
    months = int(max(em.max(initial=-1), bm.max(initial=-1)) + 1)
    return ObservationPanel(
        types, m, months, em, ef, et,
        np.array([float(r["amount"]) for r in exps]),
        bm, bi,
        np.array([[float(r[c]) for c in ("A", "Xi", "Delta")] for r in bals]).reshape(-1, 3),
        threshold,
    )
