"""
Seeded sampling primitives.

All samplers draw a batch at once: ``size`` rows, one sample per row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IterationCapError

__all__ = [
    "RngStream",
    "dirichlet",
    "exp_order_stats_from_spacings",
    "negative_orthant_direction",
    "truncated_exp_order_stats",
    "uniform_subsimplex",
]

AR_CONSECUTIVE_CAP = 10**6


@dataclass
class RngStream:
    """Philox stream keyed by ``(seed, stream_id)``.

    The pair fully determines the sequence; different ``stream_id`` values
    under one seed give independent streams (``SeedSequence`` spawn keys).
    A stream has a single owner and must not be shared across threads.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise DomainError("seed and stream_id must be nonnegative integers")
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def spawn(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    def __getattr__(self, name):
        # Delegate the numpy Generator API (random, standard_normal, ...).
        if name == "generator":
            raise AttributeError(name)
        return getattr(self.generator, name)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def exp_order_stats_from_spacings(z, n_top: int | None = None) -> np.ndarray:
    """Descending order statistics of ``N`` unit exponentials from spacings.

    ``Y^(k) = sum_{j=1}^{N-k+1} z_j / (N - j + 1)`` for ``k = 1..L``.
    ``z`` is ``(N,)`` or ``(size, N)``; the result keeps the leading shape
    with a last axis of length ``L`` (``n_top``, default ``N``).
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 or z.shape[-1] < 1:
        raise DomainError("z must contain at least one draw")
    if np.any(z < 0):
        raise DomainError("exponential draws must be nonnegative")
    n = z.shape[-1]
    n_top = n if n_top is None else int(n_top)
    if not 1 <= n_top <= n:
        raise DomainError(f"need 1 <= L <= N, got L={n_top}, N={n}")
    partial = np.cumsum(z / np.arange(n, 0, -1), axis=-1)
    # Y^(k) is the partial sum through index N-k (0-based).
    return partial[..., n - 1 : n - 1 - n_top : -1] if n_top < n else partial[..., ::-1]


def uniform_subsimplex(rng, n: int, size=None) -> np.ndarray:
    """Uniform point on ``{u_i >= 0, sum u_i <= 1}`` in ``n`` dimensions.

    Spacings of ``n`` sorted uniforms on ``[0, 1]`` with the last spacing
    dropped.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    g = _as_generator(rng)
    shape = (n,) if size is None else (size, n)
    v = np.sort(g.random(shape), axis=-1)
    return np.diff(v, axis=-1, prepend=0.0)


@dataclass
class TruncatedDraws:
    order_stats: np.ndarray
    z: np.ndarray
    proposals: int

    @property
    def acceptance_rate(self) -> float:
        return self.z.shape[0] / self.proposals if self.proposals else float("nan")


def truncated_exp_order_stats(rng, coeffs, gamma1: float, n_top: int, size: int = 1) -> TruncatedDraws:
    """Exponential order statistics conditioned on ``sum_i coeffs_i Z_i <= gamma1``.

    Acceptance-rejection: propose ``T`` uniform on the sub-simplex, accept
    with probability ``exp(-gamma1 sum_i T_i / coeffs_i)``, then set
    ``Z_i = gamma1 T_i / coeffs_i`` and apply the spacings map. Every
    returned row satisfies the constraint by construction.

    Raises:
        IterationCapError: after ``10**6`` consecutive rejections.
    """
    beta = np.asarray(coeffs, dtype=float)
    if beta.ndim != 1 or beta.size < 1 or np.any(~(beta > 0)):
        raise DomainError("coeffs must be a nonempty vector of positive numbers")
    if not gamma1 > 0:
        raise DomainError("gamma1 must be > 0")
    if size < 1:
        raise DomainError("size must be >= 1")
    g = _as_generator(rng)
    n = beta.size
    scale = gamma1 / beta

    accepted = []
    have = 0
    proposals = 0
    misses = 0
    batch = size
    while have < size:
        t = uniform_subsimplex(g, n, batch)
        u = g.random(batch)
        keep = u <= np.exp(-(t @ scale))
        proposals += batch
        k = int(keep.sum())
        if k == 0:
            misses += batch
            if misses >= AR_CONSECUTIVE_CAP:
                raise IterationCapError(
                    f"acceptance-rejection rejected {misses} consecutive proposals "
                    f"(gamma1={gamma1}, coeffs={beta.tolist()})"
                )
        else:
            misses = 0
            accepted.append(t[keep])
            have += k
        rate = max(have / proposals, 1e-3)
        batch = int(min(max((size - have) / rate * 1.1, 64), 4 * size + 64))

    t = np.concatenate(accepted)[:size]
    z = t * scale
    return TruncatedDraws(exp_order_stats_from_spacings(z, n_top), z, proposals)


def negative_orthant_direction(rng, n: int, size=None) -> np.ndarray:
    """Uniform direction on the unit sphere restricted to the negative orthant."""
    if n < 1:
        raise DomainError("n must be >= 1")
    g = _as_generator(rng)
    shape = (n,) if size is None else (size, n)
    if n == 1:
        return np.full(shape, -1.0)
    y = np.abs(g.standard_normal(shape))
    # A zero row has probability zero; redraw rather than divide by zero.
    norm = np.linalg.norm(y, axis=-1, keepdims=True)
    while np.any(norm == 0):
        bad = (norm == 0)[..., 0]
        y[bad] = np.abs(g.standard_normal((int(bad.sum()), n)))
        norm = np.linalg.norm(y, axis=-1, keepdims=True)
    return -y / norm


def dirichlet(rng, params, size=None) -> np.ndarray:
    """Dirichlet vector via normalized gamma variates."""
    a = np.asarray(params, dtype=float)
    if a.ndim != 1 or a.size < 1 or np.any(~(a > 0)):
        raise DomainError("Dirichlet parameters must be a nonempty vector of positive numbers")
    g = _as_generator(rng)
    shape = a.shape if size is None else (size, a.size)
    if a.size == 1:
        return np.ones(shape)
    x = g.standard_gamma(a, shape)
    total = x.sum(axis=-1, keepdims=True)
    # Tiny shape parameters can underflow every coordinate; resample those rows.
    while np.any(total == 0):
        bad = (total == 0)[..., 0]
        x[bad] = g.standard_gamma(a, (int(bad.sum()), a.size))
        total = x.sum(axis=-1, keepdims=True)
    return x / total
