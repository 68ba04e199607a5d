"""
Randomized quasi-Monte Carlo for the Weibull conditional MC estimator.

Each replicate is a freshly scrambled base-2 Sobol' point set of size ``M``
(a power of two) in dimension ``N``. The first ``N - 1`` coordinates are
mapped smoothly to uniform order statistics on ``[0, 1]``, whose spacings
form a uniform point on the ``N``-simplex; the last coordinate is unused.
Avoiding a sort keeps the integrand smooth enough for the scrambled net to
beat the ``M^-1/2`` Monte Carlo rate. Replicate means are
i.i.d., so their sample variance estimates the variance of the RQMC mean.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .distributions import OrderStatSumProblem, Weibull
from .errors import DomainError, UnsupportedFamilyError
from .estimators import EstimationResult, _cmc_gg_values

__all__ = ["RqmcPlan", "cube_to_simplex", "rqmc_estimate", "replicate_means"]


@dataclass(frozen=True)
class RqmcPlan:
    points_per_replicate: int
    replicates: int = 30
    dimension: int | None = None
    scramble_seed: int = 0

    def __post_init__(self):
        m = self.points_per_replicate
        if int(m) != m or m < 2 or (int(m) & (int(m) - 1)):
            raise DomainError(f"points_per_replicate must be a power of two >= 2, got {m!r}")
        if int(self.replicates) != self.replicates or self.replicates < 2:
            raise DomainError(f"replicates must be an integer >= 2, got {self.replicates!r}")
        if self.dimension is not None and self.dimension < 1:
            raise DomainError("dimension must be >= 1")
        if self.scramble_seed < 0:
            raise DomainError("scramble_seed must be nonnegative")


def cube_to_simplex(u) -> np.ndarray:
    """Map ``u`` in ``[0, 1)^n`` to a point of the ``(n+1)``-coordinate simplex.

    Builds the descending uniform order statistics without sorting,
    ``V_(n) = u_1^(1/n)`` and ``V_(j) = V_(j+1) u_{n-j+1}^(1/j)``, and returns
    their spacings. The map is smooth on the open cube and pushes the uniform
    law to Dirichlet(1, ..., 1). Accepts ``(n,)`` or a batch ``(size, n)``;
    ``n = 0`` gives ``[1]``.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        raise DomainError("u must be a vector or a batch of vectors")
    if np.any(~((u >= 0) & (u < 1))):
        raise DomainError("cube points must lie in [0, 1)")
    n = u.shape[-1]
    cuts = np.empty(u.shape)
    cur = np.ones(u.shape[:-1])
    for j in range(n, 0, -1):
        cur = cur * np.power(u[..., n - j], 1.0 / j)
        cuts[..., j - 1] = cur
    lead = u.shape[:-1] + (1,)
    return np.diff(np.concatenate([np.zeros(lead), cuts, np.ones(lead)], axis=-1), axis=-1)


def _weibull(problem: OrderStatSumProblem) -> Weibull:
    if not problem.iid or not isinstance(problem.dist, Weibull):
        raise UnsupportedFamilyError("rqmc-cmc requires identically distributed Weibull branches")
    return problem.dist


def _h(points: np.ndarray, problem: OrderStatSumProblem) -> np.ndarray:
    dist = _weibull(problem)
    n = problem.n_branches
    s = cube_to_simplex(points[:, : n - 1])
    return _cmc_gg_values(s, problem.n_combined, dist.alpha, dist.eta, problem.threshold, float(n))


def replicate_means(problem: OrderStatSumProblem, plan: RqmcPlan, randomized: bool = True) -> np.ndarray:
    """Per-replicate sample means of the conditional MC estimator.

    ``randomized=False`` swaps the scrambled Sobol' set for i.i.d. uniform
    points of the same size, giving a plain Monte Carlo control.
    """
    _weibull(problem)
    n = problem.n_branches
    dim = plan.dimension or n
    if dim < n - 1:
        raise DomainError(f"cube dimension {dim} is too small for N={n}; need at least N-1")
    k = int(math.log2(plan.points_per_replicate))
    out = np.empty(plan.replicates)
    for r in range(plan.replicates):
        ss = np.random.SeedSequence(entropy=plan.scramble_seed, spawn_key=(r,))
        g = np.random.Generator(np.random.Philox(ss))
        if randomized:
            pts = qmc.Sobol(d=dim, scramble=True, seed=g).random_base2(k)
        else:
            pts = g.random((plan.points_per_replicate, dim))
        out[r] = _h(pts, problem).mean()
    return out


def rqmc_estimate(problem: OrderStatSumProblem, plan: RqmcPlan) -> EstimationResult:
    """Mean of ``m`` scrambled-Sobol' replicate means.

    ``variance`` is the sample variance of the replicate means and
    ``samples`` is the replicate count ``m``, so ``relative_error`` is the
    coefficient of variation of the overall mean.
    """
    started = time.perf_counter()
    means = replicate_means(problem, plan)
    est = float(means.mean())
    var = float(means.var(ddof=1))
    return EstimationResult(
        estimator="rqmc-cmc",
        estimate=est,
        variance=var,
        samples=plan.replicates,
        seed=plan.scramble_seed,
        wall_ms=(time.perf_counter() - started) * 1e3,
        aux={
            "replicate_means": means.tolist(),
            "points_per_replicate": plan.points_per_replicate,
            "total_points": plan.points_per_replicate * plan.replicates,
            "replicate_se": math.sqrt(var),
        },
    )
