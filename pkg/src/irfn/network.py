"""Finite-N networks: sampling, crisis triggers and the solvency cascade.

An edge ``v -> w`` means bank v borrowed from bank w (w is exposed to v).
Shocks travel along edges from defaulting debtors to their creditors.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .distributions import DistributionFamily, empirical_cf  # noqa: F401  (re-exported)
from .model import ModelSpec, loss_fraction

# above this size edges are drawn per type block (binomial count + uniform placement)
PAIRWISE_MAX_N = 2000


class NotATreeError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, trace: CascadeTrace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Directed skeleton graph; ``src[e] -> dst[e]`` is edge e (debtor -> creditor)."""

    n: int
    types: NDArray[np.int64]
    src: NDArray[np.int64]
    dst: NDArray[np.int64]
    num_types: int

    def __post_init__(self) -> None:
        if np.any(self.src == self.dst):
            raise ValueError("self-loops are not allowed")

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def in_degree(self) -> NDArray[np.int64]:
        return np.bincount(self.dst, minlength=self.n)

    def out_degree(self) -> NDArray[np.int64]:
        return np.bincount(self.src, minlength=self.n)


@dataclass(frozen=True, eq=False)
class Network:
    """A realized IRFN: skeleton, edge exposures and post-trigger balance sheets (columns A, Xi, Delta)."""

    skeleton: Skeleton
    omega: NDArray[np.float64]
    balance: NDArray[np.float64]

    def __post_init__(self) -> None:
        if len(self.omega) != self.skeleton.num_edges:
            raise ValueError("one exposure per edge is required")
        if np.any(self.omega <= 0):
            raise ValueError("exposures must be strictly positive on edges")
        if self.balance.shape != (self.skeleton.n, 3):
            raise ValueError("balance must have shape (N, 3)")

    @property
    def n(self) -> int:
        return self.skeleton.n

    @property
    def types(self) -> NDArray[np.int64]:
        return self.skeleton.types

    @property
    def delta0(self) -> NDArray[np.float64]:
        return self.balance[:, 2]

    @property
    def interbank_debt(self) -> NDArray[np.float64]:
        """X_v: sum of exposures on out-edges of v."""
        return np.bincount(self.skeleton.src, weights=self.omega, minlength=self.n)

    @property
    def interbank_assets(self) -> NDArray[np.float64]:
        """Z_v: sum of exposures on in-edges of v."""
        return np.bincount(self.skeleton.dst, weights=self.omega, minlength=self.n)

    def with_balance(self, balance: NDArray[np.float64]) -> Network:
        return replace(self, balance=np.asarray(balance, dtype=float))


# --------------------------------------------------------------------------- sampling


def sample_types(spec: ModelSpec, n: int, rng: np.random.Generator) -> NDArray[np.int64]:
    return rng.choice(spec.num_types, size=n, p=spec.type_probs).astype(np.int64)


def sample_skeleton(
    spec: ModelSpec,
    n: int,
    rng: np.random.Generator,
    types: ArrayLike | None = None,
    pairwise_max: int = PAIRWISE_MAX_N,
) -> Skeleton:
    if n < 2:
        raise ValueError("N must be at least 2")
    if n - 1 < spec.kernel.max():
        raise ValueError(f"N-1={n - 1} is below max kappa={spec.kernel.max():g}: edge probability would exceed 1")
    types = sample_types(spec, n, rng) if types is None else np.asarray(types, dtype=np.int64)
    if len(types) != n:
        raise ValueError("types must have length N")
    prob = spec.kernel / (n - 1)
    if n <= pairwise_max:
        p = prob[types][:, types]
        hit = rng.random((n, n)) < p
        np.fill_diagonal(hit, False)
        src, dst = np.nonzero(hit)
    else:
        src, dst = _sample_blocks(prob, types, rng)
    return Skeleton(n, types, src.astype(np.int64), dst.astype(np.int64), spec.num_types)


def _sample_blocks(prob: NDArray[np.float64], types: NDArray[np.int64], rng: np.random.Generator):
    members = [np.flatnonzero(types == t) for t in range(prob.shape[0])]
    srcs, dsts = [], []
    for t, mt in enumerate(members):
        for s, ms in enumerate(members):
            if prob[t, s] == 0 or len(mt) == 0 or len(ms) == 0:
                continue
            same = t == s
            ncols = len(ms) - 1 if same else len(ms)
            npairs = len(mt) * ncols
            if npairs <= 0:
                continue
            k = rng.binomial(npairs, prob[t, s])
            idx = rng.choice(npairs, size=k, replace=False)
            i, j = np.divmod(idx, ncols)
            if same:
                j = j + (j >= i)
            srcs.append(mt[i])
            dsts.append(ms[j])
    if not srcs:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    src, dst = np.concatenate(srcs), np.concatenate(dsts)
    order = np.lexsort((dst, src))
    return src[order], dst[order]


def sample_exposures(spec: ModelSpec, skel: Skeleton, rng: np.random.Generator) -> NDArray[np.float64]:
    omega = np.empty(skel.num_edges)
    ts, td = skel.types[skel.src], skel.types[skel.dst]
    m = spec.num_types
    for t in range(m):
        for s in range(m):
            sel = np.flatnonzero((ts == t) & (td == s))
            if len(sel):
                omega[sel] = spec.exposure[t][s].sample(rng, len(sel))
    return omega


def sample_balances(spec: ModelSpec, types: NDArray[np.int64], rng: np.random.Generator) -> NDArray[np.float64]:
    out = np.empty((len(types), 3))
    for t in range(spec.num_types):
        sel = np.flatnonzero(types == t)
        if len(sel):
            out[sel] = spec.balance[t].sample(rng, len(sel))
    return out


def sample_network(
    spec: ModelSpec,
    n: int,
    seed: int | np.random.SeedSequence | np.random.Generator,
    types: ArrayLike | None = None,
) -> Network:
    """Draw one N-bank realization of the IRFN described by ``spec``.

    Reproducible: the same (spec, n, seed) always gives the same network.
    ``types`` fixes the bank types instead of drawing them.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    skel = sample_skeleton(spec, n, rng, types)
    omega = sample_exposures(spec, skel, rng)
    balance = sample_balances(spec, skel.types, rng)
    return Network(skel, omega, balance)


# --------------------------------------------------------------------------- triggers

_TARGETS = {"A": 0, "Xi": 1, "Delta": 2}


@dataclass(frozen=True)
class Trigger:
    """A crisis trigger acting on one balance-sheet column.

    kind: ``additive`` (per-type constants added), ``multiplicative`` (per-type
    factors applied) or ``iid`` (per-type i.i.d. additive shocks drawn from
    ``dists`` with ``seed``).  Exposures are never touched.
    """

    kind: str
    target: str = "Delta"
    values: tuple[float, ...] = ()
    dists: tuple[DistributionFamily, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("additive", "multiplicative", "iid"):
            raise ValueError(f"unknown trigger kind {self.kind!r}")
        if self.target not in _TARGETS:
            raise ValueError(f"unknown trigger target {self.target!r}")


def apply_trigger(network: Network, trigger: Trigger) -> Network:
    col = _TARGETS[trigger.target]
    types = network.types
    m = network.skeleton.num_types
    balance = network.balance.copy()
    if trigger.kind == "iid":
        if len(trigger.dists) != m:
            raise ValueError(f"iid trigger needs {m} distributions")
        rng = np.random.default_rng(trigger.seed)
        shock = np.zeros(network.n)
        for t in range(m):
            sel = np.flatnonzero(types == t)
            shock[sel] = trigger.dists[t].sample(rng, len(sel))
        balance[:, col] += shock
    else:
        vals = np.asarray(trigger.values, dtype=float)
        if vals.shape != (m,):
            raise ValueError(f"trigger needs one value per type ({m})")
        if trigger.kind == "additive":
            balance[:, col] += vals[types]
        else:
            if np.any(vals <= 0):
                raise ValueError("multiplicative factors must be positive")
            balance[:, col] *= vals[types]
    if np.any(balance[:, 0] < 0):
        raise ValueError("trigger would make external illiquid assets negative")
    return network.with_balance(balance)


# --------------------------------------------------------------------------- cascade


def insolvency_level(delta: NDArray[np.float64], debt: NDArray[np.float64], lam: float) -> NDArray[np.float64]:
    """Loss fraction g_lambda(Delta / X); banks without interbank debt report 1(Delta < 0)."""
    has_debt = debt > 0
    ratio = np.divide(delta, debt, out=np.zeros_like(delta), where=has_debt)
    return np.where(has_debt, loss_fraction(ratio, lam), (delta < 0).astype(float))


def cascade_step(network: Network, delta: NDArray[np.float64], lam: float):
    """One step of the solvency cascade: returns (Delta^(n+1), D^(n), S^(n))."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (network.n,):
        raise ValueError("buffer vector must have length N")
    skel = network.skeleton
    d = insolvency_level(delta, network.interbank_debt, lam)
    shock = np.bincount(skel.dst, weights=network.omega * d[skel.src], minlength=network.n)
    return network.delta0 - shock, d, shock


@dataclass
class CascadeTrace:
    """Buffers, loss fractions and shocks of a simulated cascade.

    ``deltas[n]`` is Delta^(n) for n = 0..steps; ``losses[n]`` and ``shocks[n]``
    are D^(n), S^(n) for n = 0..steps-1.  History arrays are only kept when the
    cascade was run with ``keep_history=True``; summaries are always present.
    """

    types: NDArray[np.int64]
    num_types: int
    final_delta: NDArray[np.float64]
    final_loss: NDArray[np.float64]
    steps: int
    converged: bool
    default_fraction: list[float] = field(default_factory=list)
    default_fraction_by_type: list[NDArray[np.float64]] = field(default_factory=list)
    deltas: list[NDArray[np.float64]] = field(default_factory=list)
    losses: list[NDArray[np.float64]] = field(default_factory=list)
    shocks: list[NDArray[np.float64]] = field(default_factory=list)

    @property
    def equilibrium_default_fraction(self) -> float:
        return self.default_fraction[-1]

    def to_csv(self, path: str | Path) -> None:
        """Rows (step, bank, delta, loss_fraction, shock); needs history."""
        if not self.deltas:
            raise ValueError("trace was recorded without history")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "bank", "delta", "loss_fraction", "shock"])
            for n in range(len(self.losses)):
                for v in range(len(self.types)):
                    w.writerow([n, v, repr(float(self.deltas[n][v])), repr(float(self.losses[n][v])), repr(float(self.shocks[n][v]))])


def default_tolerance(network: Network) -> float:
    return 1e-11 * (float(np.median(np.abs(network.delta0))) + 1.0)


def default_max_steps(network: Network) -> int:
    # partial defaults on cycles converge geometrically, at a rate unrelated to N
    return max(10 * network.n, 100_000)


def _summaries(delta, types, m):
    bad = delta < 0
    per_type = np.array([bad[types == t].mean() if np.any(types == t) else np.nan for t in range(m)])
    return float(bad.mean()), per_type


def run_cascade(
    network: Network,
    lam: float,
    tol: float | None = None,
    max_steps: int | None = None,
    keep_history: bool = False,
    raise_on_failure: bool = False,
) -> CascadeTrace:
    """Iterate ``cascade_step`` from Delta^(0) until the buffers are within ``tol`` of the limit.

    The distance to the limit is bounded a posteriori by change * r / (1 - r),
    with r the ratio of successive sup-norm changes; a step that changes
    nothing beyond floating-point resolution also ends the iteration.
    """
    tol = default_tolerance(network) if tol is None else tol
    if tol <= 0:
        raise ValueError("tol must be positive")
    max_steps = default_max_steps(network) if max_steps is None else max_steps
    prev_change = np.inf
    m = network.skeleton.num_types
    delta = network.delta0.copy()
    frac, by_type = _summaries(delta, network.types, m)
    trace = CascadeTrace(network.types, m, delta, np.zeros(network.n), 0, False, [frac], [by_type])
    if keep_history:
        trace.deltas.append(delta)
    for step in range(1, max_steps + 1):
        new, d, s = cascade_step(network, delta, lam)
        frac, by_type = _summaries(new, network.types, m)
        trace.default_fraction.append(frac)
        trace.default_fraction_by_type.append(by_type)
        if keep_history:
            trace.deltas.append(new)
            trace.losses.append(d)
            trace.shocks.append(s)
        change = float(np.max(np.abs(new - delta), initial=0.0))
        stall = change <= 4 * np.finfo(float).eps * (1.0 + float(np.max(np.abs(new), initial=0.0)))
        ratio = change / prev_change if prev_change > 0 else 0.0
        remaining = change * ratio / (1.0 - ratio) if ratio < 1 else np.inf
        delta, prev_change = new, change
        trace.steps = step
        if stall or (change < tol and remaining < tol):
            trace.converged = True
            break
    trace.final_delta = delta
    trace.final_loss = insolvency_level(delta, network.interbank_debt, lam)
    if not trace.converged and raise_on_failure:
        raise NonConvergenceError(f"cascade did not converge within {max_steps} steps", trace)
    return trace


# --------------------------------------------------------------------------- clearing oracle


def clearing_oracle(network: Network, lam: float, max_iter: int = 100_000):
    """Greatest and least solutions of Delta = Delta0 - W^T g(Delta / X).

    Uses a dense exposure matrix and Picard iteration from the all-healthy and
    all-defaulted states, then polishes each limit by solving the piecewise
    linear system exactly for its regime pattern.
    """
    n = network.n
    w = np.zeros((n, n))
    np.add.at(w, (network.skeleton.src, network.skeleton.dst), network.omega)
    debt = w.sum(axis=1)
    delta0 = network.delta0

    def g(delta):
        out = np.zeros(n)
        pos = debt > 0
        out[pos] = np.clip(-delta[pos] / (lam * debt[pos]), 0.0, 1.0)
        return out

    def iterate(d):
        delta = delta0 - w.T @ d
        for _ in range(max_iter):
            new = delta0 - w.T @ g(delta)
            done = np.max(np.abs(new - delta), initial=0.0) <= 1e-15 * (1.0 + np.max(np.abs(delta), initial=0.0))
            delta = new
            if done:
                break
        return _polish(delta, delta0, w, debt, lam)

    greatest = iterate(np.zeros(n))
    least = iterate((debt > 0).astype(float))
    return greatest, least


def _polish(delta, delta0, w, debt, lam):
    n = len(delta)
    pos = debt > 0
    full = pos & (delta <= -lam * debt)
    part = pos & ~full & (delta < 0)
    p = np.flatnonzero(part)
    const = delta0 - w.T @ full.astype(float)
    if len(p):
        # Delta_p = const_p + sum_{q in p} w[q, p] Delta_q / (lam X_q)
        a = np.eye(len(p)) - (w[np.ix_(p, p)] / (lam * debt[p])[:, None]).T
        try:
            dp = np.linalg.solve(a, const[p])
        except np.linalg.LinAlgError:
            return delta
        d = full.astype(float)
        d[p] = -dp / (lam * debt[p])
        if np.any(d[p] < 0) or np.any(d[p] > 1):
            return delta
    else:
        d = full.astype(float)
    exact = delta0 - w.T @ d
    regimes_same = (
        np.array_equal(pos & (exact <= -lam * debt), full)
        and np.array_equal(pos & ~(exact <= -lam * debt) & (exact < 0), part)
    )
    if regimes_same and np.max(np.abs(exact - delta), initial=0.0) < 1e-8 * (1 + np.max(np.abs(delta))):
        return exact
    return delta


# --------------------------------------------------------------------------- tree recursion


def _check_tree(skel: Skeleton) -> None:
    n = skel.n
    if skel.num_edges != n - 1:
        raise NotATreeError("not_a_tree: a tree on N nodes has N-1 edges")
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(skel.src.tolist(), skel.dst.tolist()):
        ra, rb = find(a), find(b)
        if ra == rb:
            raise NotATreeError("not_a_tree: undirected support has a cycle")
        parent[ra] = rb
    if len({find(v) for v in range(n)}) != 1:
        raise NotATreeError("not_a_tree: skeleton is disconnected")


def tree_cascade_recursion(network: Network, lam: float, n_max: int) -> NDArray[np.float64]:
    """Buffers Delta^(n), n = 0..n_max, on a directed tree by message passing.

    Each bank's buffer is built only from its in-subtree: the message from
    debtor w to creditor v at step k is G_lambda(X_{w minus v}, Delta_w^(k),
    Omega_wv), where X_{w minus v} sums w's other out-exposures.
    """
    skel = network.skeleton
    _check_tree(skel)
    n = skel.n
    src, dst, omega = skel.src.tolist(), skel.dst.tolist(), network.omega.tolist()
    out_edges: list[list[int]] = [[] for _ in range(n)]
    in_edges: list[list[int]] = [[] for _ in range(n)]
    for e, (a, b) in enumerate(zip(src, dst)):
        out_edges[a].append(e)
        in_edges[b].append(e)
    # topological order: debtors before their creditors
    indeg = [len(in_edges[v]) for v in range(n)]
    queue = deque(v for v in range(n) if indeg[v] == 0)
    order = []
    while queue:
        v = queue.popleft()
        order.append(v)
        for e in out_edges[v]:
            c = dst[e]
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    delta0 = network.delta0.tolist()
    hist: list[list[float]] = [[] for _ in range(n)]
    for v in order:
        msgs = []
        for e in in_edges[v]:
            w = src[e]
            rest = 0.0
            for f in out_edges[w]:
                if f != e:
                    rest += omega[f]
            msgs.append((hist[w], rest, omega[e]))
        length = 1 + max((len(h) for h, _, _ in msgs), default=0)
        values = [delta0[v]]
        for k in range(length - 1):
            total = 0.0
            for h, rest, z in msgs:
                y = h[min(k, len(h) - 1)]
                total += z * min(1.0, max(-(y / (rest + z)) / lam, 0.0))
            values.append(delta0[v] - total)
        hist[v] = values
    out = np.empty((n_max + 1, n))
    for v in range(n):
        h = hist[v]
        for k in range(n_max + 1):
            out[k, v] = h[min(k, len(h) - 1)]
    return out


def random_tree_network(
    n: int,
    rng: np.random.Generator,
    num_types: int = 1,
    delta_scale: float = 1.0,
    star: bool = False,
) -> Network:
    """Random directed tree with random orientations, Exp(1) exposures and N(0, scale) buffers."""
    if star:
        parents = np.zeros(n - 1, dtype=np.int64)
    else:
        parents = np.array([rng.integers(0, v) for v in range(1, n)], dtype=np.int64)
    child = np.arange(1, n)
    flip = rng.random(n - 1) < 0.5 if not star else np.zeros(n - 1, bool)
    src = np.where(flip, parents, child)
    dst = np.where(flip, child, parents)
    types = rng.integers(0, num_types, n)
    skel = Skeleton(n, types, src, dst, num_types)
    omega = rng.exponential(1.0, n - 1)
    balance = np.column_stack([rng.exponential(1.0, n), rng.normal(0, 1, n), rng.normal(0, delta_scale, n)])
    return Network(skel, omega, balance)


# --------------------------------------------------------------------------- degree statistics


@dataclass
class DegreeStats:
    """Per-type empirical degree statistics pooled over skeleton samples."""

    in_pmf: list[NDArray[np.float64]]
    out_pmf: list[NDArray[np.float64]]
    joint_pmf: list[NDArray[np.float64]]
    in_mean: NDArray[np.float64]
    out_mean: NDArray[np.float64]
    corr: NDArray[np.float64]
    counts: NDArray[np.int64]
    in_rate: NDArray[np.float64] | None = None
    out_rate: NDArray[np.float64] | None = None


def degree_rates(spec: ModelSpec) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Limiting Poisson means (in, out) per type: sum_T2 P(T2) kappa(T2, T) and sum_T2 P(T2) kappa(T, T2)."""
    return spec.in_rates().sum(axis=1), spec.out_rates().sum(axis=1)


def degree_stats(samples: list[Skeleton], spec: ModelSpec | None = None) -> DegreeStats:
    if not samples:
        raise ValueError("need at least one skeleton")
    m = samples[0].num_types
    din = np.concatenate([s.in_degree() for s in samples])
    dout = np.concatenate([s.out_degree() for s in samples])
    types = np.concatenate([s.types for s in samples])
    in_pmf, out_pmf, joint = [], [], []
    in_mean, out_mean, corr, counts = (np.zeros(m) for _ in range(4))
    for t in range(m):
        a, b = din[types == t], dout[types == t]
        counts[t] = len(a)
        if len(a) == 0:
            in_pmf.append(np.zeros(1))
            out_pmf.append(np.zeros(1))
            joint.append(np.zeros((1, 1)))
            in_mean[t] = out_mean[t] = corr[t] = np.nan
            continue
        in_pmf.append(np.bincount(a) / len(a))
        out_pmf.append(np.bincount(b) / len(b))
        jm = np.zeros((a.max() + 1, b.max() + 1))
        np.add.at(jm, (a, b), 1.0)
        joint.append(jm / len(a))
        in_mean[t], out_mean[t] = a.mean(), b.mean()
        corr[t] = np.corrcoef(a, b)[0, 1] if a.std() > 0 and b.std() > 0 else 0.0
    stats_ = DegreeStats(in_pmf, out_pmf, joint, in_mean, out_mean, corr, counts.astype(np.int64))
    if spec is not None:
        stats_.in_rate, stats_.out_rate = degree_rates(spec)
    return stats_


def tv_distance_poisson(pmf: NDArray[np.float64], mean: float) -> float:
    """Total-variation distance between an empirical PMF on {0, 1, ...} and Poisson(mean)."""
    from scipy.stats import poisson

    kmax = max(len(pmf), int(mean + 20 * np.sqrt(mean + 1)) + 1)
    p = np.zeros(kmax)
    p[: len(pmf)] = pmf
    q = poisson.pmf(np.arange(kmax), mean)
    return 0.5 * (np.abs(p - q).sum() + max(0.0, 1.0 - q.sum()))


# --------------------------------------------------------------------------- CSV I/O


def save_network(network: Network, nodes_path: str | Path, edges_path: str | Path) -> None:
    with open(nodes_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "type", "A", "Xi", "Delta"])
        for v in range(network.n):
            a, xi, d = network.balance[v]
            w.writerow([v, int(network.types[v]) + 1, repr(float(a)), repr(float(xi)), repr(float(d))])
    with open(edges_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["from", "to", "omega"])
        for a, b, om in zip(network.skeleton.src, network.skeleton.dst, network.omega):
            w.writerow([int(a), int(b), repr(float(om))])


def load_network(nodes_path: str | Path, edges_path: str | Path, num_types: int | None = None) -> Network:
    with open(nodes_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["id"]))
    ids = [int(r["id"]) for r in rows]
    if ids != list(range(len(ids))):
        raise ValueError("node ids must be 0..N-1")
    types = np.array([int(r["type"]) - 1 for r in rows], dtype=np.int64)
    balance = np.array([[float(r["A"]), float(r["Xi"]), float(r["Delta"])] for r in rows])
    with open(edges_path, newline="") as fh:
        erows = list(csv.DictReader(fh))
    src = np.array([int(r["from"]) for r in erows], dtype=np.int64)
    dst = np.array([int(r["to"]) for r in erows], dtype=np.int64)
    omega = np.array([float(r["omega"]) for r in erows])
    m = num_types if num_types is not None else int(types.max()) + 1
    return Network(Skeleton(len(rows), types, src, dst, m), omega, balance)
