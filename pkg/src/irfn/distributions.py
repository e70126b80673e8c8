"""Univariate distribution families used for exposures and balance sheets.

Every family exposes a sampler, CDF/survival function, density and a
characteristic function that are mutually consistent.  The positive families
(exponential, gamma, lognormal) model exposures and external assets; the signed
ones (normal, shifted_gamma) model buffers.  ``empirical`` wraps observed
samples and is what calibration produces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, stats

FAMILIES = ("exponential", "gamma", "lognormal", "normal", "shifted_gamma", "empirical")
POSITIVE_FAMILIES = ("exponential", "gamma", "lognormal")

_PARAM_NAMES = {
    "exponential": ("scale",),
    "gamma": ("shape", "scale"),
    "lognormal": ("mu", "sigma"),
    "normal": ("mean", "std"),
    "shifted_gamma": ("shape", "scale", "shift"),
    "empirical": (),
}


class DistributionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DistributionFamily:
    """A univariate law identified by a family tag and its parameters.

    Parameters are stored by name (see ``_PARAM_NAMES``).  ``samples`` is only
    used by the empirical family.
    """

    family: str
    params: dict[str, float] = field(default_factory=dict)
    samples: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise DistributionError(f"unknown family {self.family!r}")
        missing = [p for p in _PARAM_NAMES[self.family] if p not in self.params]
        if missing:
            raise DistributionError(f"{self.family}: missing parameters {missing}")
        if self.family == "empirical":
            if self.samples is None or len(self.samples) == 0:
                raise DistributionError("empirical family needs a non-empty sample store")
            object.__setattr__(self, "samples", np.sort(np.asarray(self.samples, dtype=float)))
        for name in ("scale", "shape", "sigma", "std"):
            if name in self.params and not self.params[name] > 0:
                raise DistributionError(f"{self.family}: parameter {name} must be positive")

    # constructors -------------------------------------------------------------

    @classmethod
    def exponential(cls, scale: float = 1.0) -> DistributionFamily:
        return cls("exponential", {"scale": float(scale)})

    @classmethod
    def gamma(cls, shape: float, scale: float = 1.0) -> DistributionFamily:
        return cls("gamma", {"shape": float(shape), "scale": float(scale)})

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> DistributionFamily:
        return cls("lognormal", {"mu": float(mu), "sigma": float(sigma)})

    @classmethod
    def normal(cls, mean: float, std: float) -> DistributionFamily:
        return cls("normal", {"mean": float(mean), "std": float(std)})

    @classmethod
    def shifted_gamma(cls, shape: float, scale: float, shift: float) -> DistributionFamily:
        return cls("shifted_gamma", {"shape": float(shape), "scale": float(scale), "shift": float(shift)})

    @classmethod
    def empirical(cls, samples: ArrayLike) -> DistributionFamily:
        return cls("empirical", {}, np.asarray(samples, dtype=float))

    # support ------------------------------------------------------------------

    @property
    def is_positive(self) -> bool:
        if self.family in POSITIVE_FAMILIES:
            return True
        if self.family == "empirical":
            return bool(self.samples[0] > 0)
        return False

    @property
    def _frozen(self):
        p = self.params
        if self.family == "exponential":
            return stats.expon(scale=p["scale"])
        if self.family == "gamma":
            return stats.gamma(p["shape"], scale=p["scale"])
        if self.family == "lognormal":
            return stats.lognorm(p["sigma"], scale=np.exp(p["mu"]))
        if self.family == "normal":
            return stats.norm(p["mean"], p["std"])
        if self.family == "shifted_gamma":
            return stats.gamma(p["shape"], loc=p["shift"], scale=p["scale"])
        raise AssertionError("empirical has no scipy law")

    # moments ------------------------------------------------------------------

    def mean(self) -> float:
        if self.family == "empirical":
            return float(self.samples.mean())
        return float(self._frozen.mean())

    def var(self) -> float:
        if self.family == "empirical":
            return float(self.samples.var())
        return float(self._frozen.var())

    def std(self) -> float:
        return float(np.sqrt(self.var()))

    def ppf(self, q: ArrayLike) -> NDArray[np.float64]:
        if self.family == "empirical":
            return np.quantile(self.samples, q)
        return self._frozen.ppf(q)

    # sampling -----------------------------------------------------------------

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> NDArray[np.float64]:
        p = self.params
        if self.family == "exponential":
            return rng.exponential(p["scale"], size)
        if self.family == "gamma":
            return rng.gamma(p["shape"], p["scale"], size)
        if self.family == "lognormal":
            return rng.lognormal(p["mu"], p["sigma"], size)
        if self.family == "normal":
            return rng.normal(p["mean"], p["std"], size)
        if self.family == "shifted_gamma":
            return p["shift"] + rng.gamma(p["shape"], p["scale"], size)
        return rng.choice(self.samples, size=size, replace=True)

    # distribution functions ---------------------------------------------------

    def cdf(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        if self.family == "empirical":
            return np.searchsorted(self.samples, x, side="right") / len(self.samples)
        return self._frozen.cdf(x)

    def sf(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        if self.family == "empirical":
            return 1.0 - self.cdf(x)
        return self._frozen.sf(x)

    def pdf(self, x: ArrayLike) -> NDArray[np.float64]:
        """Density.  For ``empirical`` this is a histogram estimate (Freedman-Diaconis bins)."""
        x = np.asarray(x, dtype=float)
        if self.family == "empirical":
            dens, edges = _empirical_histogram(self.samples.tobytes(), len(self.samples))
            idx = np.searchsorted(edges, x, side="right") - 1
            inside = (idx >= 0) & (idx < len(dens))
            out = np.zeros_like(x)
            out[inside] = dens[idx[inside]]
            return out
        return self._frozen.pdf(x)

    def cf(self, k: ArrayLike) -> NDArray[np.complex128]:
        """Characteristic function E[exp(i k X)] evaluated elementwise."""
        k = np.asarray(k, dtype=float)
        p = self.params
        if self.family == "exponential":
            return 1.0 / (1.0 - 1j * k * p["scale"])
        if self.family == "gamma":
            return (1.0 - 1j * k * p["scale"]) ** (-p["shape"])
        if self.family == "normal":
            return np.exp(1j * k * p["mean"] - 0.5 * (p["std"] * k) ** 2)
        if self.family == "shifted_gamma":
            return np.exp(1j * k * p["shift"]) * (1.0 - 1j * k * p["scale"]) ** (-p["shape"])
        if self.family == "lognormal":
            flat = np.array([_lognormal_cf(float(kk), p["mu"], p["sigma"]) for kk in k.ravel()])
            return flat.reshape(k.shape)
        return empirical_cf(self.samples, k)

    # serialization ------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family}
        if self.params:
            out["params"] = dict(self.params)
        if self.family == "empirical":
            out["samples"] = [float(s) for s in self.samples]
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> DistributionFamily:
        family = d["family"]
        if family == "empirical":
            return cls.empirical(d["samples"])
        return cls(family, {k: float(v) for k, v in d.get("params", {}).items()})

    def __repr__(self) -> str:
        if self.family == "empirical":
            return f"DistributionFamily(empirical, n={len(self.samples)})"
        return f"DistributionFamily({self.family}, {self.params})"


def empirical_cf(samples: ArrayLike, k: ArrayLike, chunk: int = 1 << 20) -> NDArray[np.complex128]:
    """Empirical characteristic function (1/n) sum_j exp(i k x_j) on an array of k."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empirical_cf needs at least one sample")
    k = np.asarray(k, dtype=float)
    kf = k.ravel()
    out = np.zeros(kf.shape, dtype=complex)
    # chunk over samples to bound the k x n temporary
    step = max(1, chunk // max(1, kf.size))
    for start in range(0, x.size, step):
        out += np.exp(1j * np.outer(kf, x[start : start + step])).sum(axis=1)
    return (out / x.size).reshape(k.shape)


@lru_cache(maxsize=4096)
def _lognormal_cf(k: float, mu: float, sigma: float) -> complex:
    if k == 0.0:
        return 1.0 + 0j
    law = stats.lognorm(sigma, scale=np.exp(mu))
    # QAWF (Fourier integral on [0, inf)) for the oscillatory parts
    opts = dict(epsrel=1e-8, epsabs=1e-12, limlst=200)
    re, _ = integrate.quad(law.pdf, 0.0, np.inf, weight="cos", wvar=abs(k), **opts)
    im, _ = integrate.quad(law.pdf, 0.0, np.inf, weight="sin", wvar=abs(k), **opts)
    return complex(re, np.sign(k) * im)


@lru_cache(maxsize=64)
def _empirical_histogram(buf: bytes, n: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    samples = np.frombuffer(buf, dtype=float, count=n)
    dens, edges = np.histogram(samples, bins="fd", density=True)
    return dens, edges
