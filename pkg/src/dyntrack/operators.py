"""Mutation and selection operators.

Mutation is unary: bitwise (each bit flips with probability ``chi/n``) or
single-bit (one uniformly chosen bit flips, as in RLS).

Selection works on a fitness vector.  Ranks are computed by sorting on
fitness with a uniformly random tie-breaking permutation drawn once per call;
every mechanism then samples a rank position and maps it back to an index.
Rank position 0 is the best individual.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .bits import Bitstring, hamming
from .stats import binomial_sigma

__all__ = [
    "MutationOp",
    "SelectionSpec",
    "mutate",
    "mutate_rows",
    "mutation_transition_prob",
    "FlipSampler",
    "tiebreak_order",
    "select",
    "select_many",
    "beta_closed_form",
    "beta_empirical",
    "pressure_satisfied",
    "corollary_threshold",
    "ranking_cdf",
]

# relative slack for threshold comparisons, so k=33 meets 1.1*3*10
_REL_TOL = 1e-12


# --------------------------------------------------------------------------
# mutation


@dataclass(frozen=True)
class MutationOp:
    kind: str = "bitwise"
    chi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bitwise", "single-bit"):
            raise ValueError(f"unknown mutation kind {self.kind!r}")
        if self.kind == "bitwise" and self.chi < 0:
            raise ValueError("chi must be nonnegative")

    @classmethod
    def bitwise(cls, chi: float = 1.0) -> MutationOp:
        return cls("bitwise", float(chi))

    @classmethod
    def single_bit(cls) -> MutationOp:
        return cls("single-bit", 1.0)

    @classmethod
    def parse(cls, text: str) -> MutationOp:
        text = text.strip()
        if text == "single-bit":
            return cls.single_bit()
        m = re.fullmatch(r"bitwise(?::chi=([0-9.eE+-]+))?", text)
        if not m:
            raise ValueError(f"cannot parse mutation operator {text!r}")
        return cls.bitwise(float(m.group(1)) if m.group(1) else 1.0)

    def __str__(self) -> str:
        if self.kind == "single-bit":
            return "single-bit"
        return f"bitwise:chi={self.chi!r}"

    def rate(self, n: int) -> float:
        if self.kind == "bitwise" and self.chi > n:
            raise ValueError(f"chi={self.chi} exceeds n={n}")
        return self.chi / n


def mutate(op: MutationOp, x: Bitstring, rng: np.random.Generator) -> Bitstring:
    """Return a mutated copy of ``x``."""
    n = x.n
    if op.kind == "single-bit":
        pos = int(rng.integers(n))
        return x.flip(1 << (n - 1 - pos))
    flips = rng.random(n) < op.rate(n)
    mask = 0
    for pos in np.flatnonzero(flips).tolist():
        mask |= 1 << (n - 1 - pos)
    return x.flip(mask)


def mutate_rows(op: MutationOp, pop: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Mutate every row of a (m, n) boolean population independently."""
    m, n = pop.shape
    if op.kind == "single-bit":
        out = pop.copy()
        cols = rng.integers(n, size=m)
        out[np.arange(m), cols] ^= True
        return out
    return pop ^ (rng.random((m, n)) < op.rate(n))


def mutation_transition_prob(op: MutationOp, x: Bitstring, y: Bitstring) -> float:
    h = hamming(x, y)
    n = x.n
    if op.kind == "single-bit":
        return 1.0 / n if h == 1 else 0.0
    p = op.rate(n)
    return p**h * (1.0 - p) ** (n - h)


class FlipSampler:
    """Stream of flip masks (as ints) for repeated mutation of n-bit strings.

    Bitwise mutation is sampled by geometric gaps between flipped positions,
    which gives each bit an independent flip with the right probability while
    costing O(flips) per call.  Draws are buffered from ``rng``.
    """

    def __init__(self, op: MutationOp, n: int, rng: np.random.Generator, block: int = 8192):
        self.op = op
        self.n = n
        self.rng = rng
        self.block = block
        self._buf: list[int] = []
        self._pos = 0
        self._p = op.rate(n) if op.kind == "bitwise" else None
        self._shift = [1 << (n - 1 - i) for i in range(n)]

    def _next(self) -> int:
        if self._pos >= len(self._buf):
            if self.op.kind == "single-bit":
                self._buf = self.rng.integers(self.n, size=self.block).tolist()
            else:
                self._buf = self.rng.geometric(self._p, size=self.block).tolist()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v

    def __call__(self) -> int:
        if self.op.kind == "single-bit":
            return self._shift[self._next()]
        if self._p == 0.0:
            return 0
        n = self.n
        shift = self._shift
        mask = 0
        pos = self._next() - 1
        while pos < n:
            mask |= shift[pos]
            pos += self._next()
        return mask


# --------------------------------------------------------------------------
# selection

_SEL_KINDS = {
    "tournament": "k",
    "mu-comma-lambda": "mu",
    "linear-ranking": "eta",
    "exponential-ranking": "eta",
}
_SEL_ALIASES = {
    "k-tournament": "tournament",
    "comma": "mu-comma-lambda",
    "linear": "linear-ranking",
    "exponential": "exponential-ranking",
    "exp-ranking": "exponential-ranking",
}


@dataclass(frozen=True)
class SelectionSpec:
    """Selection mechanism and its pressure parameter (k, mu or eta)."""

    kind: str
    param: float

    def __post_init__(self):
        kind = _SEL_ALIASES.get(self.kind, self.kind)
        if kind not in _SEL_KINDS:
            raise ValueError(f"unknown selection kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind in ("tournament", "mu-comma-lambda"):
            if int(self.param) != self.param or self.param < 1:
                raise ValueError(f"{_SEL_KINDS[kind]} must be a positive integer")
            object.__setattr__(self, "param", int(self.param))

    @classmethod
    def tournament(cls, k: int) -> SelectionSpec:
        return cls("tournament", k)

    @classmethod
    def mu_comma_lambda(cls, mu: int) -> SelectionSpec:
        return cls("mu-comma-lambda", mu)

    @classmethod
    def linear_ranking(cls, eta: float) -> SelectionSpec:
        return cls("linear-ranking", float(eta))

    @classmethod
    def exponential_ranking(cls, eta: float) -> SelectionSpec:
        return cls("exponential-ranking", float(eta))

    @classmethod
    def parse(cls, text: str) -> SelectionSpec:
        m = re.fullmatch(r"\s*([a-z-]+):(k|mu|eta)=([0-9.eE+-]+)\s*", text)
        if not m:
            raise ValueError(f"cannot parse selection spec {text!r}")
        kind = _SEL_ALIASES.get(m.group(1), m.group(1))
        if _SEL_KINDS.get(kind) != m.group(2):
            raise ValueError(f"parameter {m.group(2)!r} does not belong to {m.group(1)!r}")
        return cls(kind, float(m.group(3)))

    def __str__(self) -> str:
        return f"{self.kind}:{_SEL_KINDS[self.kind]}={self.param!r}"

    def check(self, lam: int | None = None) -> None:
        """Raise ValueError if the parameter is outside the mechanism's domain."""
        if self.kind == "linear-ranking" and not 1 < self.param <= 2:
            raise ValueError(f"linear ranking needs eta in (1, 2], got {self.param}")
        if self.kind == "exponential-ranking" and not self.param > 0:
            raise ValueError(f"exponential ranking needs eta > 0, got {self.param}")
        if self.kind == "mu-comma-lambda" and lam is not None and self.param > lam:
            raise ValueError(f"mu={self.param} exceeds population size {lam}")


def ranking_cdf(spec: SelectionSpec, gamma):
    """Probability of selecting an individual ranked ``gamma`` or better (ranking schemes)."""
    g = np.asarray(gamma, dtype=float)
    eta = spec.param
    if spec.kind == "linear-ranking":
        return g * (eta + g * (1.0 - eta))
    if spec.kind == "exponential-ranking":
        return np.expm1(-eta * g) / np.expm1(-eta)
    raise ValueError(f"{spec.kind} is not a ranking scheme")


def _ranking_inverse(spec: SelectionSpec, u: np.ndarray) -> np.ndarray:
    eta = spec.param
    if spec.kind == "linear-ranking":
        if eta == 1.0:
            return u
        return (eta - np.sqrt(eta * eta - 4.0 * (eta - 1.0) * u)) / (2.0 * (eta - 1.0))
    return -np.log1p(u * np.expm1(-eta)) / eta


def tiebreak_order(fitness, rng: np.random.Generator) -> np.ndarray:
    """Indices sorted best first; equal fitness ordered by a random permutation."""
    f = np.asarray(fitness, dtype=float)
    if f.size == 0:
        raise ValueError("empty population")
    perm = rng.permutation(f.size)
    return np.lexsort((perm, -f))


def _rank_positions(spec: SelectionSpec, lam: int, m: int, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "tournament":
        k = spec.param
        out = np.empty(m, dtype=np.int64)
        chunk = max(1, 2_000_000 // k)
        for s in range(0, m, chunk):
            e = min(m, s + chunk)
            out[s:e] = rng.integers(lam, size=(e - s, k)).min(axis=1)
        return out
    if spec.kind == "mu-comma-lambda":
        return rng.integers(spec.param, size=m)
    # ranking: invert the cumulative share, then take the rank bucket it falls in
    x = _ranking_inverse(spec, rng.random(m))
    return np.clip(np.ceil(x * lam).astype(np.int64) - 1, 0, lam - 1)


def select_many(spec: SelectionSpec, fitness, m: int, rng: np.random.Generator, order=None) -> np.ndarray:
    """Draw ``m`` independent selections from one ranking of ``fitness``.

    Ties are broken by a single random order shared by all ``m`` draws, so a
    generation sees one consistent ranking.  ``order`` may be a precomputed
    :func:`tiebreak_order`.
    """
    lam = len(fitness)
    if lam == 0:
        raise ValueError("empty population")
    spec.check(lam)
    if order is None:
        order = tiebreak_order(fitness, rng)
    return order[_rank_positions(spec, lam, m, rng)]


def select(spec: SelectionSpec, fitness, rng: np.random.Generator) -> int:
    return int(select_many(spec, fitness, 1, rng)[0])


def beta_closed_form(spec: SelectionSpec, gamma: float, lam: int) -> float:
    """Exact cumulative selection probability for ``lam`` distinct fitness values.

    Uses the discrete rank ``ceil(gamma * lam)``.  For the ranking schemes this
    evaluates the ranking integral at ``ceil(gamma * lam) / lam``, which equals
    the integral at ``gamma`` whenever ``gamma * lam`` is an integer.
    """
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    spec.check(lam)
    top = math.ceil(gamma * lam - 1e-9)
    if spec.kind == "tournament":
        return 1.0 - (1.0 - top / lam) ** spec.param
    if spec.kind == "mu-comma-lambda":
        return min(1.0, top / spec.param)
    return float(ranking_cdf(spec, top / lam))


def beta_empirical(
    spec: SelectionSpec, lam: int, gamma: float, samples: int, rng: np.random.Generator, z: float = 3.0
) -> tuple[float, float]:
    """Fraction of ``samples`` selections landing in the top ``ceil(gamma*lam)`` ranks.

    Returns ``(estimate, half_width)`` with ``half_width = z * sigma`` from the
    binomial standard error of the estimate.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    top = math.ceil(gamma * lam - 1e-9)
    # distinct fitness, shuffled so index != rank
    fitness = rng.permutation(lam).astype(float)
    chosen = select_many(spec, fitness, samples, rng)
    rank = lam - 1 - fitness[chosen]  # 0 = best
    est = float(np.mean(rank < top))
    return est, z * binomial_sigma(est, samples)


def pressure_satisfied(spec: SelectionSpec, rho: float, delta: float, lam: int | None = None) -> bool:
    """Whether ``spec`` meets the ``(1+delta)/rho`` selection-pressure threshold.

    For (mu, lambda) selection the ratio ``lam / mu`` is compared, so ``lam``
    is required.  Linear ranking cannot exceed eta = 2.
    """
    if not 0 < rho <= 1:
        raise ValueError("rho must be in (0, 1]")
    if delta <= 0:
        raise ValueError("delta must be positive")
    need = (1.0 + delta) / rho
    if spec.kind == "mu-comma-lambda":
        if lam is None:
            raise ValueError("lam is required for mu-comma-lambda")
        level = lam / spec.param
    else:
        level = spec.param
    if spec.kind == "linear-ranking" and not 1 < spec.param <= 2:
        return False
    return level >= need * (1.0 - _REL_TOL)


def corollary_threshold(b: float, ell: int, delta: float) -> float:
    """Minimum pressure ``(1+delta) * 3 * (ell/b)**ell`` for tracking a moving Hamming ball."""
    if not 0 < b < 1:
        raise ValueError("b must be in (0, 1)")
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if delta <= 0:
        raise ValueError("delta must be positive")
    return (1.0 + delta) * 3.0 * (ell / b) ** ell
