"""
Estimators of ``l = P(X^(1) + ... + X^(L) <= gamma_th)``.

Every estimator averages a single-draw estimator over ``m`` replicates and
reports its sample variance. Replicates are generated in fixed-size chunks;
chunk ``i`` draws from its own Philox stream keyed by
``(seed, stream_id, i)``, and chunk statistics are merged in chunk order, so
the result depends only on the seed and the chunk size, not on how many
worker threads evaluated the chunks.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .distributions import (
    Distribution,
    Exponential,
    Gamma,
    GeneralizedGamma,
    LogNormal,
    OrderStatSumProblem,
    ParetoLomax,
    Weibull,
)
from .errors import DomainError, IterationCapError, NumericalError, PreconditionError, UnsupportedFamilyError
from .samplers import RngStream, negative_orthant_direction, truncated_exp_order_stats, dirichlet
from .special import HypoexpSpec, chi_sf, hypoexp_cdf, reg_lower_gamma

__all__ = [
    "ESTIMATORS",
    "EstimationResult",
    "IsWeights",
    "check_compatible",
    "cmc_gg",
    "cmc_lognormal",
    "is_variance_closed_form",
    "naive_mc",
    "pareto_is",
    "tail_ratio",
    "universal_is",
    "weibull_is",
]

DEFAULT_CHUNK = 1 << 16
DEFAULT_BISECT_TOL = 1e-10
BISECT_MAX_ITER = 200


@dataclass
class EstimationResult:
    """Point estimate with the per-sample variance of the single-draw estimator.

    ``relative_error`` is ``sqrt(variance) / (estimate * sqrt(samples))``;
    it is NaN when the estimate is zero.
    """

    estimator: str
    estimate: float
    variance: float
    samples: int
    seed: int
    wall_ms: float = 0.0
    aux: dict = field(default_factory=dict)

    @property
    def relative_error(self) -> float:
        return relative_error(self.estimate, self.variance, self.samples)

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.samples)


def relative_error(estimate: float, variance: float, samples: int) -> float:
    if estimate > 0:
        return math.sqrt(variance) / (estimate * math.sqrt(samples))
    return float("nan")


@dataclass(frozen=True)
class IsWeights:
    """Positive convex weights ``lambda_1..lambda_L`` defining the enclosing set."""

    lambdas: tuple[float, ...]

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        if len(lam) < 1 or not all(math.isfinite(x) and x > 0 for x in lam):
            raise DomainError("IS weights must be a nonempty vector of positive numbers")
        if abs(math.fsum(lam) - 1.0) > 1e-12:
            raise DomainError(f"IS weights must sum to 1, got {math.fsum(lam)!r}")

    @classmethod
    def uniform(cls, n_combined: int) -> "IsWeights":
        return cls((1.0 / n_combined,) * n_combined)


def is_variance_closed_form(l1: float, l: float) -> float:
    """Variance ``l1 * l - l**2`` of the truncation IS estimator."""
    if not (0 <= l <= 1 and 0 <= l1 <= 1):
        raise DomainError("probabilities must lie in [0, 1]")
    if l > l1:
        raise DomainError(f"target probability {l} exceeds enclosing probability {l1}")
    return l1 * l - l * l


# -- chunked accumulation ---------------------------------------------------


@dataclass
class _Moments:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    counters: dict = field(default_factory=dict)

    @classmethod
    def of(cls, values: np.ndarray, counters: dict | None = None) -> "_Moments":
        n = values.size
        if n == 0:
            return cls(counters=dict(counters or {}))
        if values[0] == values[-1] and np.all(values == values[0]):
            mean, m2 = float(values[0]), 0.0
        else:
            mean = float(values.mean())
            m2 = float(np.sum((values - mean) ** 2))
        return cls(n, mean, m2, dict(counters or {}))

    def merge(self, other: "_Moments") -> "_Moments":
        # Chan et al. pairwise update; exact when both sides are constant and equal.
        n = self.n + other.n
        for k, v in other.counters.items():
            self.counters[k] = self.counters.get(k, 0) + v
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean, other.m2
            return self
        delta = other.mean - self.mean
        self.mean = self.mean + delta * other.n / n if delta else self.mean
        self.m2 = self.m2 + other.m2 + (delta * delta * self.n * other.n / n if delta else 0.0)
        self.n = n
        return self

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0


DrawFn = Callable[[np.random.Generator, int], "tuple[np.ndarray, dict]"]


def _chunk_generator(rng: RngStream, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=rng.seed, spawn_key=(rng.stream_id, index))
    return np.random.Generator(np.random.Philox(ss))


def _as_stream(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"rng must be an RngStream or an integer seed, got {type(rng).__name__}")


def _run(draw: DrawFn, m: int, rng, workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> _Moments:
    if int(m) != m or m < 1:
        raise DomainError(f"sample count must be a positive integer, got {m!r}")
    m = int(m)
    stream = _as_stream(rng)
    sizes = [min(chunk_size, m - start) for start in range(0, m, chunk_size)]

    def job(i):
        values, counters = draw(_chunk_generator(stream, i), sizes[i])
        return _Moments.of(np.asarray(values, dtype=float), counters)

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]
    total = _Moments()
    for part in parts:
        total.merge(part)
    return total


def _finish(name: str, moments: _Moments, rng, started: float, aux: dict | None = None) -> EstimationResult:
    stream = _as_stream(rng)
    aux = dict(aux or {})
    aux.update(moments.counters)
    est = moments.mean
    var = moments.variance
    if 0 < est < 1:
        second = var + est * est
        aux["log_efficiency"] = math.log(second) / math.log(est) if second < 1 else float("nan")
    return EstimationResult(
        estimator=name,
        estimate=est,
        variance=var,
        samples=moments.n,
        seed=stream.seed,
        wall_ms=(time.perf_counter() - started) * 1e3,
        aux=aux,
    )


def _top_sum(x: np.ndarray, n_top: int) -> np.ndarray:
    n = x.shape[1]
    if n_top == n:
        return x.sum(axis=1)
    return np.partition(x, n - n_top, axis=1)[:, n - n_top :].sum(axis=1)


def _iid_dist(problem: OrderStatSumProblem, cls, name: str):
    if not problem.iid:
        raise UnsupportedFamilyError(f"{name} requires identically distributed branches")
    if not isinstance(problem.dist, cls):
        want = cls.family if isinstance(cls, type) else "/".join(c.family for c in cls)
        raise UnsupportedFamilyError(f"{name} requires a {want} branch distribution, got {problem.dist.family}")
    return problem.dist


def _weights(weights, n_combined: int) -> IsWeights:
    if weights is None:
        return IsWeights.uniform(n_combined)
    if not isinstance(weights, IsWeights):
        weights = IsWeights(tuple(weights))
    if len(weights.lambdas) != n_combined:
        raise DomainError(f"expected {n_combined} IS weights, got {len(weights.lambdas)}")
    return weights


def enclosing_coeffs(n_branches: int, weights: Sequence[float]) -> np.ndarray:
    """Coefficients ``c_i = sum_{j <= min(L, N+1-i)} w_j / (N - i + 1)``.

    With these, ``sum_k w_k Y^(k) = sum_i c_i Z_i`` under the spacings
    representation of the exponential order statistics.
    """
    w = np.asarray(weights, dtype=float)
    n_top = w.size
    i = np.arange(1, n_branches + 1)
    upto = np.minimum(n_top, n_branches + 1 - i)
    return np.cumsum(w)[upto - 1] / (n_branches - i + 1)


# -- estimators -------------------------------------------------------------


def naive_mc(problem: OrderStatSumProblem, m: int, rng, *, workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> EstimationResult:
    """Crude Monte Carlo average of the indicator ``1{sum of L largest <= gamma_th}``."""
    started = time.perf_counter()
    dists = problem.branch_dists
    n, l, thr = problem.n_branches, problem.n_combined, problem.threshold

    def draw(g, size):
        if problem.iid:
            x = problem.dist.sample(g, (size, n))
        else:
            x = np.column_stack([d.sample(g, size) for d in dists])
        return (_top_sum(x, l) <= thr).astype(float), {}

    return _finish("naive", _run(draw, m, rng, workers, chunk_size), rng, started)


def universal_is(problem: OrderStatSumProblem, m: int, rng, *, workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> EstimationResult:
    """Importance sampling from the branch laws truncated to ``[0, gamma_th]``.

    The enclosing event ``{max_i X_i <= gamma_th}`` has probability
    ``l1 = prod_i F_i(gamma_th)``; each replicate returns ``l1`` times the
    target indicator. Accepts per-branch distributions.
    """
    started = time.perf_counter()
    dists = problem.branch_dists
    thr, l = problem.threshold, problem.n_combined
    f_thr = np.array([float(d.cdf(thr)) for d in dists])
    l1 = float(np.prod(f_thr))
    aux = {"l1": l1}
    if l1 == 0.0:
        # The target event is null: P(max X_i <= gamma_th) = 0.
        return EstimationResult("universal-is", 0.0, 0.0, int(m), _as_stream(rng).seed,
                                (time.perf_counter() - started) * 1e3, aux)

    def draw(g, size):
        u = g.random((size, len(dists))) * f_thr
        if problem.iid:
            x = problem.dist.quantile_unchecked(u)
        else:
            x = np.column_stack([d.quantile_unchecked(u[:, i]) for i, d in enumerate(dists)])
        x = np.minimum(x, thr)
        return np.where(_top_sum(x, l) <= thr, l1, 0.0), {}

    result = _finish("universal-is", _run(draw, m, rng, workers, chunk_size), rng, started, aux)
    result.aux["eq8_variance"] = l1 * result.estimate - result.estimate**2
    return result


def _truncated_is(name, problem, m, rng, coeffs, gamma1, back_map, workers, chunk_size, aux):
    started = time.perf_counter()
    l1 = hypoexp_cdf(HypoexpSpec(tuple(coeffs), gamma1))
    aux = dict(aux, l1=l1, gamma1=gamma1)
    thr, l = problem.threshold, problem.n_combined

    def draw(g, size):
        out = truncated_exp_order_stats(g, coeffs, gamma1, l, size)
        x = back_map(out.order_stats)
        return np.where(x.sum(axis=1) <= thr, l1, 0.0), {"accepted": size, "proposals": out.proposals}

    result = _finish(name, _run(draw, m, rng, workers, chunk_size), rng, started, aux)
    result.aux["acceptance_rate"] = result.aux["accepted"] / result.aux["proposals"]
    result.aux["eq8_variance"] = l1 * result.estimate - result.estimate**2
    return result


def pareto_is(problem: OrderStatSumProblem, m: int, rng, weights=None, *, workers: int = 1,
              chunk_size: int = DEFAULT_CHUNK) -> EstimationResult:
    """Truncation IS for Lomax branches.

    With ``Y_i = alpha log(1 + X_i)`` unit exponential, convexity of ``exp``
    encloses the target in ``{sum_k w_k Y^(k) <= gamma1}`` where
    ``gamma1 = alpha (log(gamma_th + L) + sum_k w_k log w_k)``. Its
    probability is a hypoexponential CDF; samples come from the
    acceptance-rejection sampler. Default weights ``1/L``.
    """
    dist = _iid_dist(problem, ParetoLomax, "pareto-is")
    w = _weights(weights, problem.n_combined)
    lam = np.array(w.lambdas)
    alpha = dist.alpha
    gamma1 = alpha * (math.log(problem.threshold + problem.n_combined) + float(np.sum(lam * np.log(lam))))
    coeffs = enclosing_coeffs(problem.n_branches, lam)
    return _truncated_is("pareto-is", problem, m, rng, coeffs, gamma1,
                         lambda y: np.expm1(y / alpha), workers, chunk_size, {"weights": list(w.lambdas)})


def weibull_is(problem: OrderStatSumProblem, m: int, rng, weights=None, *, workers: int = 1,
               chunk_size: int = DEFAULT_CHUNK) -> EstimationResult:
    """Truncation IS for Weibull branches with shape ``0 < alpha < 1``.

    With ``Y_i = (X_i / eta)^alpha``, convexity of ``y^(1/alpha)`` encloses
    the target in ``{sum_k w_k^(1-alpha) Y^(k) <= (gamma_th / eta)^alpha}``.
    """
    dist = _iid_dist(problem, Weibull, "weibull-is")
    if not dist.alpha < 1:
        raise UnsupportedFamilyError(f"weibull-is requires shape alpha < 1, got {dist.alpha}; use cmc-gg")
    w = _weights(weights, problem.n_combined)
    lam = np.array(w.lambdas)
    alpha, eta = dist.alpha, dist.eta
    gamma2 = (problem.threshold / eta) ** alpha
    coeffs = enclosing_coeffs(problem.n_branches, lam ** (1.0 - alpha))
    return _truncated_is("weibull-is", problem, m, rng, coeffs, gamma2,
                         lambda y: eta * np.power(y, 1.0 / alpha), workers, chunk_size, {"weights": list(w.lambdas)})


def _gg_params(problem: OrderStatSumProblem):
    # (d_i per branch, shared p, shared a)
    def params(d: Distribution):
        if isinstance(d, GeneralizedGamma):
            return d.d, d.p, d.a
        if isinstance(d, Weibull):
            return d.alpha, d.alpha, d.eta
        if isinstance(d, Gamma):
            return d.shape, 1.0, d.scale
        if isinstance(d, Exponential):
            return 1.0, 1.0, d.mean
        raise UnsupportedFamilyError(f"cmc-gg requires generalized-gamma-type branches, got {d.family}")

    triples = [params(d) for d in problem.branch_dists]
    p, a = triples[0][1], triples[0][2]
    if any(t[1] != p or t[2] != a for t in triples):
        raise UnsupportedFamilyError("cmc-gg requires a shared power p and scale a across branches")
    return np.array([t[0] for t in triples]), p, a


def cmc_gg(problem: OrderStatSumProblem, m: int, rng, *, workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> EstimationResult:
    """Conditional MC for generalized-gamma branches (Weibull, Gamma, exponential included).

    ``X_i^p = S_i V`` with ``S`` Dirichlet(``d_i/p``) and ``V`` gamma of shape
    ``sum d_i / p`` and scale ``a^p``; conditioning on ``S`` gives the smooth
    estimator ``F_V(gamma_th^p / (sum_k (S^(k))^(1/p))^p)``. Branch shape
    parameters ``d_i`` may differ when ``p`` and ``a`` are shared.
    """
    started = time.perf_counter()
    d, p, a = _gg_params(problem)
    conc = d / p
    shape = float(conc.sum())
    thr, l = problem.threshold, problem.n_combined

    def draw(g, size):
        s = dirichlet(g, conc, size)
        return _cmc_gg_values(s, l, p, a, thr, shape), {}

    return _finish("cmc-gg", _run(draw, m, rng, workers, chunk_size), rng, started,
                   {"dirichlet_shape": conc.tolist(), "gamma_shape": shape})


def _cmc_gg_values(s: np.ndarray, n_top: int, p: float, a: float, thr: float, shape: float) -> np.ndarray:
    n = s.shape[1]
    top = s if n_top == n else np.partition(s, n - n_top, axis=1)[:, n - n_top :]
    t = np.power(top, 1.0 / p).sum(axis=1)
    with np.errstate(divide="ignore"):
        arg = np.power(thr / (a * t), p)
    return reg_lower_gamma(shape, arg)


def cmc_lognormal(problem: OrderStatSumProblem, m: int, rng, bisect_tol: float = DEFAULT_BISECT_TOL, *,
                  workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> EstimationResult:
    """Conditional MC for log-normal branches via the polar decomposition.

    Writes the standardized normals as ``R * Theta``, restricts ``Theta`` to
    the negative orthant (probability ``2^-N``; elsewhere the event is
    impossible when ``gamma_th e^-mu <= 1``) and integrates ``R`` out:
    ``2^-N (1 - F_R(r(Theta)))`` with ``r(Theta)`` found by bisection on
    the bracket ``[log(g/L)/Theta^(L), log(g/L)/Theta^(1)]``.

    Raises:
        PreconditionError: if ``gamma_th e^-mu > 1``; use ``naive_mc`` there.
    """
    started = time.perf_counter()
    dist = _iid_dist(problem, LogNormal, "cmc-lognormal")
    if not bisect_tol > 0:
        raise DomainError("bisect_tol must be > 0")
    g_std = problem.threshold * math.exp(-dist.mu)
    if g_std > 1:
        raise PreconditionError(
            f"cmc-lognormal needs gamma_th * exp(-mu) <= 1, got {g_std:.6g}; "
            "this probability is not rare, use naive_mc instead"
        )
    n, l, sigma = problem.n_branches, problem.n_combined, dist.sigma
    scale = 2.0**-n

    def draw(g, size):
        theta = negative_orthant_direction(g, n, size)
        top = -np.sort(-theta, axis=1)[:, :l]
        s, iters = _bisect_radius(top, g_std, bisect_tol)
        return scale * chi_sf(s / sigma, n), {"bisection_iterations": int(iters.sum())}

    result = _finish("cmc-lognormal", _run(draw, m, rng, workers, chunk_size), rng, started,
                     {"standardized_threshold": g_std})
    result.aux["mean_bisection_iterations"] = result.aux.pop("bisection_iterations") / result.samples
    return result


def _bisect_radius(top: np.ndarray, g: float, tol: float):
    # Solve sum_k exp(s * top[:, k]) = g for s >= 0; top is descending and negative.
    c = math.log(g / top.shape[1])
    lo = c / top[:, -1]
    hi = c / top[:, 0]
    f_lo = np.exp(lo[:, None] * top).sum(axis=1) - g
    f_hi = np.exp(hi[:, None] * top).sum(axis=1) - g
    slack = 1e-9 * g
    if np.any(f_lo < -slack) or np.any(f_hi > slack):
        raise NumericalError("bisection bracket does not enclose the root")
    iters = np.zeros(top.shape[0], dtype=np.int64)
    active = (hi - lo) > tol * np.maximum(1.0, np.abs(hi))
    for _ in range(BISECT_MAX_ITER):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        mid = 0.5 * (lo[idx] + hi[idx])
        above = np.exp(mid[:, None] * top[idx]).sum(axis=1) > g
        lo[idx] = np.where(above, mid, lo[idx])
        hi[idx] = np.where(above, hi[idx], mid)
        iters[idx] += 1
        active[idx] = (hi[idx] - lo[idx]) > tol * np.maximum(1.0, np.abs(mid))
    else:
        if active.any():
            raise IterationCapError(f"bisection did not reach tolerance {tol} in {BISECT_MAX_ITER} steps")
    return 0.5 * (lo + hi), iters


# -- diagnostics and registry -----------------------------------------------


def tail_ratio(dist: Distribution, thresholds, n_combined: int) -> np.ndarray:
    """``F(g) / F(g / L)`` over a grid; bounded as ``g -> 0`` when the universal IS has bounded relative error."""
    g = np.asarray(thresholds, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.asarray(dist.cdf(g), dtype=float) / np.asarray(dist.cdf(g / n_combined), dtype=float)


ESTIMATORS: dict[str, Callable[..., EstimationResult]] = {
    "naive": naive_mc,
    "universal-is": universal_is,
    "pareto-is": pareto_is,
    "weibull-is": weibull_is,
    "cmc-gg": cmc_gg,
    "cmc-lognormal": cmc_lognormal,
}


def check_compatible(name: str, problem: OrderStatSumProblem) -> None:
    """Raise before any sampling if estimator ``name`` cannot handle ``problem``."""
    if name in ("naive", "universal-is"):
        return
    if name == "pareto-is":
        _iid_dist(problem, ParetoLomax, name)
    elif name == "weibull-is":
        dist = _iid_dist(problem, Weibull, name)
        if not dist.alpha < 1:
            raise UnsupportedFamilyError(f"weibull-is requires shape alpha < 1, got {dist.alpha}")
    elif name == "cmc-gg":
        _gg_params(problem)
    elif name == "cmc-lognormal":
        dist = _iid_dist(problem, LogNormal, name)
        if problem.threshold * math.exp(-dist.mu) > 1:
            raise PreconditionError("cmc-lognormal needs gamma_th * exp(-mu) <= 1, use naive instead")
    elif name == "rqmc-cmc":
        _iid_dist(problem, Weibull, name)
    else:
        raise DomainError(f"unknown estimator {name!r}")
