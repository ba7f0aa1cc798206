"""Seeded random streams, sampling helpers and the two appendix inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as _sps

__all__ = [
    "RngStream",
    "sample_poisson",
    "poisson_tail_bound",
    "sample_hypergeometric",
    "ln_bound_holds",
    "mean_ci",
    "binomial_sigma",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
    distinct ids under one master seed are independent.  The bit generator is
    PCG64DXSM (period 2**128).
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        for v in (self.seed, self.stream_id, *self.path):
            if not 0 <= v <= _MASK64:
                raise ValueError(f"seed and stream ids must be 64-bit unsigned, got {v}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        return np.random.Generator(np.random.PCG64DXSM(ss))

    def child(self, key: int) -> RngStream:
        return RngStream(self.seed, self.stream_id, (*self.path, int(key)))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "stream_id": self.stream_id, "path": list(self.path)}


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


def sample_poisson(theta: float, rng, size=None):
    if not theta > 0:
        raise ValueError(f"Poisson mean must be positive, got {theta}")
    return _as_generator(rng).poisson(theta, size=size)


def poisson_tail_bound(theta: float, x: float) -> float:
    """Upper bound ``e^-theta (e theta / x)^x`` on ``P(X <= x)`` for ``X ~ Pois(theta)``, ``0 < x < theta``."""
    if not 0 < x < theta:
        raise ValueError(f"need 0 < x < theta, got x={x}, theta={theta}")
    return math.exp(-theta + x * (1.0 + math.log(theta / x)))


def sample_hypergeometric(N: int, K: int, draws: int, rng, size=None):
    """Number of successes among ``draws`` taken without replacement from ``N`` items, ``K`` successes."""
    if N < 1 or not 0 <= K <= N or not 0 <= draws <= N:
        raise ValueError(f"invalid hypergeometric parameters N={N}, K={K}, draws={draws}")
    return _as_generator(rng).hypergeometric(K, N - K, draws, size=size)


def ln_bound_holds(x: float) -> bool:
    """Check ``1 + x <= exp(x/2 * (x+2)/(x+1))``."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    # compare in log space to avoid overflow at large x
    return math.log1p(x) <= (x / 2.0) * (x + 2.0) / (x + 1.0) + 1e-15


def mean_ci(samples: Sequence[float], confidence: float = 0.95) -> tuple[float, float]:
    """Sample mean and normal-approximation half-width."""
    a = np.asarray(samples, dtype=float)
    if a.size < 2:
        raise ValueError("need at least 2 samples")
    if not 0 < confidence < 1:
        raise ValueError("confidence must be in (0, 1)")
    z = _sps.norm.ppf(0.5 + confidence / 2.0)
    return float(a.mean()), float(z * a.std(ddof=1) / math.sqrt(a.size))


def binomial_sigma(p: float, count: int) -> float:
    """Standard error of a proportion with true value ``p`` over ``count`` trials."""
    return math.sqrt(max(p * (1.0 - p), 0.0) / count)
