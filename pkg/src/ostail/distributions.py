"""
Branch distributions: pdf, cdf, quantile and raw sampling, plus the
canonical text form used on the command line, e.g. ``weibull(alpha=0.5,eta=1)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields
from typing import Callable, ClassVar, NamedTuple, Sequence, Union

import numpy as np
from scipy.special import gammaincinv, gammaln, ndtr, ndtri

from .errors import DomainError, UnsupportedFamilyError
from .special import gamma_cdf

__all__ = [
    "Distribution",
    "Exponential",
    "ExpTransform",
    "Gamma",
    "GeneralizedGamma",
    "LogNormal",
    "OrderStatSumProblem",
    "ParetoLomax",
    "Weibull",
    "cdf",
    "format_dist",
    "parse_dist",
    "quantile",
    "to_exponential_transform",
]


def _positive(name, value):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a finite positive number, got {value!r}")


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("quantile level must lie in the open interval (0, 1)")
    return u


class Distribution:
    """Common interface. Subclasses are frozen dataclasses of parameters."""

    family: ClassVar[str]

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def quantile(self, u):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.quantile_unchecked(rng.random(size))

    def quantile_unchecked(self, u):
        return self.quantile(u)

    def __str__(self):
        return format_dist(self)


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ParetoLomax(Distribution):
    """Lomax (Pareto type II, unit scale): ``f(x) = alpha (1 + x)^-(1 + alpha)``, ``x >= 0``."""

    alpha: float
    family: ClassVar[str] = "pareto"

    def __post_init__(self):
        _positive("alpha", self.alpha)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            out = np.where(x >= 0, self.alpha * np.power(1.0 + np.maximum(x, 0), -(1.0 + self.alpha)), 0.0)
        return _scalar(out)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return _scalar(-np.expm1(-self.alpha * np.log1p(x)))

    def quantile(self, u):
        return self.quantile_unchecked(_check_u(u))

    def quantile_unchecked(self, u):
        return _scalar(np.expm1(-np.log1p(-np.asarray(u, dtype=float)) / self.alpha))


@dataclass(frozen=True)
class Weibull(Distribution):
    """``F(x) = 1 - exp(-(x / eta)^alpha)`` with shape ``alpha`` and scale ``eta``."""

    alpha: float
    eta: float = 1.0
    family: ClassVar[str] = "weibull"

    def __post_init__(self):
        _positive("alpha", self.alpha)
        _positive("eta", self.eta)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = np.maximum(x, 0) / self.eta
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.alpha / self.eta * np.power(z, self.alpha - 1) * np.exp(-np.power(z, self.alpha))
        return _scalar(np.where(x > 0, out, 0.0))

    def cdf(self, x):
        z = np.maximum(np.asarray(x, dtype=float), 0.0) / self.eta
        return _scalar(-np.expm1(-np.power(z, self.alpha)))

    def quantile(self, u):
        return self.quantile_unchecked(_check_u(u))

    def quantile_unchecked(self, u):
        e = -np.log1p(-np.asarray(u, dtype=float))
        return _scalar(self.eta * np.power(e, 1.0 / self.alpha))


@dataclass(frozen=True)
class GeneralizedGamma(Distribution):
    """``f(x) = (p / a^d) x^(d-1) exp(-(x/a)^p) / Gamma(d/p)``, ``x > 0``.

    ``X = Y^(1/p)`` with ``Y ~ Gamma(shape=d/p, scale=a^p)``.
    """

    d: float
    p: float
    a: float = 1.0
    family: ClassVar[str] = "gengamma"

    def __post_init__(self):
        _positive("d", self.d)
        _positive("p", self.p)
        _positive("a", self.a)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logf = (
                math.log(self.p)
                - self.d * math.log(self.a)
                + (self.d - 1) * np.log(xp)
                - np.power(xp / self.a, self.p)
                - gammaln(self.d / self.p)
            )
            out = np.exp(logf)
        return _scalar(np.where(x > 0, out, 0.0))

    def cdf(self, x):
        z = np.maximum(np.asarray(x, dtype=float), 0.0) / self.a
        return _scalar(gamma_cdf(np.power(z, self.p), self.d / self.p))

    def quantile(self, u):
        return self.quantile_unchecked(_check_u(u))

    def quantile_unchecked(self, u):
        y = gammaincinv(self.d / self.p, np.asarray(u, dtype=float))
        return _scalar(self.a * np.power(y, 1.0 / self.p))

    def sample(self, rng, size):
        y = rng.standard_gamma(self.d / self.p, size)
        return self.a * np.power(y, 1.0 / self.p)


@dataclass(frozen=True)
class LogNormal(Distribution):
    """``X = exp(mu + sigma * Y)`` with ``Y`` standard normal."""

    mu: float = 0.0
    sigma: float = 1.0
    family: ClassVar[str] = "lognormal"

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu!r}")
        _positive("sigma", self.sigma)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(x) - self.mu) / self.sigma
            out = np.exp(-0.5 * z * z) / (x * self.sigma * math.sqrt(2 * math.pi))
        return _scalar(np.where(x > 0, out, 0.0))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(x, 0.0)) - self.mu) / self.sigma
        return _scalar(ndtr(z))

    def quantile(self, u):
        return self.quantile_unchecked(_check_u(u))

    def quantile_unchecked(self, u):
        return _scalar(np.exp(self.mu + self.sigma * ndtri(np.asarray(u, dtype=float))))

    def sample(self, rng, size):
        return np.exp(self.mu + self.sigma * rng.standard_normal(size))


@dataclass(frozen=True)
class Exponential(Distribution):
    mean: float = 1.0
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        _positive("mean", self.mean)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar(np.where(x >= 0, np.exp(-np.maximum(x, 0) / self.mean) / self.mean, 0.0))

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return _scalar(-np.expm1(-x / self.mean))

    def quantile(self, u):
        return self.quantile_unchecked(_check_u(u))

    def quantile_unchecked(self, u):
        return _scalar(-self.mean * np.log1p(-np.asarray(u, dtype=float)))


@dataclass(frozen=True)
class Gamma(Distribution):
    shape: float
    scale: float = 1.0
    family: ClassVar[str] = "gamma"

    def __post_init__(self):
        _positive("shape", self.shape)
        _positive("scale", self.scale)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logf = (self.shape - 1) * np.log(xp) - xp / self.scale - gammaln(self.shape) - self.shape * math.log(self.scale)
        return _scalar(np.where(x > 0, np.exp(logf), 0.0))

    def cdf(self, x):
        return _scalar(gamma_cdf(x, self.shape, self.scale))

    def quantile(self, u):
        return self.quantile_unchecked(_check_u(u))

    def quantile_unchecked(self, u):
        return _scalar(self.scale * gammaincinv(self.shape, np.asarray(u, dtype=float)))

    def sample(self, rng, size):
        return self.scale * rng.standard_gamma(self.shape, size)


_FAMILIES: dict[str, type[Distribution]] = {
    cls.family: cls for cls in (ParetoLomax, Weibull, GeneralizedGamma, LogNormal, Exponential, Gamma)
}


def cdf(dist: Distribution, x):
    return dist.cdf(x)


def quantile(dist: Distribution, u):
    return dist.quantile(u)


class ExpTransform(NamedTuple):
    """Monotone map sending the branch law to a unit-mean exponential."""

    forward: Callable
    inverse: Callable


def to_exponential_transform(dist: Distribution) -> ExpTransform:
    """``y = alpha log(1 + x)`` for Pareto, ``y = (x / eta)^alpha`` for Weibull.

    Raises:
        UnsupportedFamilyError: for any other family.
    """
    if isinstance(dist, ParetoLomax):
        a = dist.alpha
        return ExpTransform(
            forward=lambda x: _scalar(a * np.log1p(np.asarray(x, dtype=float))),
            inverse=lambda y: _scalar(np.expm1(np.asarray(y, dtype=float) / a)),
        )
    if isinstance(dist, Weibull):
        a, eta = dist.alpha, dist.eta
        return ExpTransform(
            forward=lambda x: _scalar(np.power(np.asarray(x, dtype=float) / eta, a)),
            inverse=lambda y: _scalar(eta * np.power(np.asarray(y, dtype=float), 1.0 / a)),
        )
    raise UnsupportedFamilyError(f"no exponential transform for family {dist.family!r}")


def format_dist(dist: Distribution) -> str:
    args = ",".join(f"{f.name}={float(getattr(dist, f.name))!r}" for f in fields(dist))
    return f"{dist.family}({args})"


_DIST_RE = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$", re.IGNORECASE)
_ALIASES = {"lomax": "pareto", "generalized_gamma": "gengamma", "gg": "gengamma", "exp": "exponential"}


def parse_dist(text: str) -> Distribution:
    """Parse ``family(k=v,...)``; inverse of :func:`format_dist`."""
    m = _DIST_RE.match(text)
    if not m:
        raise DomainError(f"cannot parse distribution {text!r}; expected family(key=value,...)")
    name = m.group(1).lower()
    name = _ALIASES.get(name, name)
    if name not in _FAMILIES:
        raise DomainError(f"unknown distribution family {name!r}; choose from {sorted(_FAMILIES)}")
    cls = _FAMILIES[name]
    kwargs = {}
    body = m.group(2).strip()
    if body:
        for item in body.split(","):
            key, sep, val = item.partition("=")
            key = key.strip()
            if not sep or not key:
                raise DomainError(f"malformed parameter {item!r} in {text!r}")
            if key in kwargs:
                raise DomainError(f"duplicate parameter {key!r} in {text!r}")
            try:
                kwargs[key] = float(val)
            except ValueError:
                raise DomainError(f"parameter {key!r} is not a number: {val!r}") from None
    allowed = {f.name for f in fields(cls)}
    unknown = set(kwargs) - allowed
    if unknown:
        raise DomainError(f"{name} does not take parameters {sorted(unknown)}; expected {sorted(allowed)}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise DomainError(f"{name}: {exc}") from None


DistArg = Union[Distribution, Sequence[Distribution]]


@dataclass(frozen=True)
class OrderStatSumProblem:
    """Target ``P(X^(1) + ... + X^(L) <= threshold)`` for ``N`` branches.

    ``dist`` is one distribution shared by all branches, or a sequence of
    ``N`` per-branch distributions for the independent, non-identically
    distributed case.
    """

    n_branches: int
    n_combined: int
    threshold: float
    dist: DistArg

    def __post_init__(self):
        n, l = self.n_branches, self.n_combined
        if int(n) != n or n < 1:
            raise DomainError(f"n_branches must be a positive integer, got {n!r}")
        if int(l) != l or not 1 <= l <= n:
            raise DomainError(f"n_combined must satisfy 1 <= L <= N, got L={l!r}, N={n!r}")
        object.__setattr__(self, "n_branches", int(n))
        object.__setattr__(self, "n_combined", int(l))
        _positive("threshold", self.threshold)
        if isinstance(self.dist, Distribution):
            return
        dists = tuple(self.dist)
        if len(dists) != self.n_branches:
            raise DomainError(f"expected {self.n_branches} per-branch distributions, got {len(dists)}")
        if not all(isinstance(d, Distribution) for d in dists):
            raise DomainError("per-branch entries must be Distribution instances")
        object.__setattr__(self, "dist", dists)

    @property
    def iid(self) -> bool:
        return isinstance(self.dist, Distribution)

    @property
    def branch_dists(self) -> tuple[Distribution, ...]:
        if self.iid:
            return (self.dist,) * self.n_branches
        return self.dist

    def with_threshold(self, threshold: float) -> "OrderStatSumProblem":
        return OrderStatSumProblem(self.n_branches, self.n_combined, threshold, self.dist)
