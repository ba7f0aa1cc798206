"""Dynamic functions with an evaluation clock, and the Moving Hamming Ball.

Every evaluation advances the function's clock by one.  A query made while
the clock reads ``t`` may be evaluated against any past function ``f_i`` with
``i <= t``; the history of targets is immutable once generated.
"""

from __future__ import annotations

import abc
import math
from bisect import bisect_right
from dataclasses import asdict, dataclass, field

import numpy as np

from .bits import Bitstring, all_ones, int_to_packed, sample_at_distance
from .operators import MutationOp, mutate_rows
from .stats import binomial_sigma

__all__ = [
    "DynamicFunction",
    "MhbParams",
    "MhbInstance",
    "mhb_new",
    "evaluate",
    "target_at",
    "is_optimal_at",
    "stability_bound",
    "default_epsilon",
    "multi_change_bound",
    "StabilityEstimate",
    "stability_estimate",
]


class DynamicFunction(abc.ABC):
    """A time-indexed sequence of fitness functions sharing one evaluation clock."""

    def __init__(self):
        self.clock = 0

    @abc.abstractmethod
    def value_at(self, x: Bitstring, i: int) -> float:
        """``f_i(x)`` without touching the clock."""

    def _check_time(self, i: int) -> None:
        if i < 0:
            raise ValueError(f"negative time {i}")
        if i > self.clock:
            raise ValueError(f"cannot evaluate at future time {i} (clock is {self.clock})")

    def evaluate(self, x: Bitstring, i: int) -> float:
        self._check_time(i)
        v = self.value_at(x, i)
        self.clock += 1
        return v


@dataclass(frozen=True)
class MhbParams:
    n: int
    r: int
    ell: int
    theta: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.r < 0 or not self.r < self.n / 2:
            raise ValueError(f"radius must satisfy 0 <= r < n/2, got r={self.r}, n={self.n}")
        if not 1 <= self.ell <= self.n:
            raise ValueError(f"move distance must be in [1, n], got {self.ell}")
        if not self.theta > 0:
            raise ValueError("theta must be positive")

    @classmethod
    def from_fraction(cls, n: int, b: float, ell: int, theta: float) -> MhbParams:
        """Radius ``floor(b * n)``."""
        return cls(n, int(math.floor(b * n + 1e-9)), ell, theta)

    @property
    def b(self) -> float:
        return self.r / self.n

    def to_dict(self) -> dict:
        return asdict(self)


class MhbInstance(DynamicFunction):
    """A live Moving Hamming Ball.

    The target starts at 1^n.  Change ``j`` fires at the partial sum of ``j``
    i.i.d. Poisson(theta) gaps and moves the target to a uniform string at
    distance exactly ``ell``.  Changes whose partial sum is 0 take effect at
    time 1, so that the ball at time 0 is always centred on 1^n.  Several
    changes may fire at the same tick; they compose.

    The schedule is generated lazily from the instance's own random stream,
    so it does not depend on what the algorithm queries.
    """

    def __init__(self, params: MhbParams, rng: np.random.Generator):
        super().__init__()
        self.params = params
        self.rng = rng
        self._times: list[int] = [0]
        self._targets: list[int] = [all_ones(params.n).value]
        self._raw_sum = 0
        self._pending: tuple[int, int] | None = None  # next change not yet in force
        self._rows: dict[int, np.ndarray] = {}
        self._times_arr: np.ndarray | None = None

    # schedule ------------------------------------------------------------

    def _draw_change(self) -> tuple[int, int]:
        self._raw_sum += int(self.rng.poisson(self.params.theta))
        prev = Bitstring(self.params.n, self._targets[-1])
        nxt = sample_at_distance(prev, self.params.ell, self.rng).value
        return max(self._raw_sum, 1), nxt

    def extend_to(self, t: int) -> None:
        """Make sure every change firing at or before ``t`` is known."""
        while True:
            if self._pending is None:
                self._pending = self._draw_change()
            when, tgt = self._pending
            if when > t:
                return
            self._times.append(when)
            self._targets.append(tgt)
            self._pending = None
            self._times_arr = None

    @property
    def horizon(self) -> int:
        """All changes up to this time are materialised."""
        return self._pending[0] - 1 if self._pending is not None else self._times[-1]

    def _index_at(self, t: int) -> int:
        if t > self.horizon:
            self.extend_to(t)
        return bisect_right(self._times, t) - 1

    def target_value(self, t: int) -> int:
        return self._targets[self._index_at(t)]

    def target_row(self, t: int) -> np.ndarray:
        """Target at time ``t`` as a boolean numpy vector."""
        idx = self._index_at(t)
        row = self._rows.get(idx)
        if row is None:
            packed = np.frombuffer(int_to_packed(self._targets[idx], self.params.n), dtype=np.uint8)
            row = np.unpackbits(packed, count=self.params.n).astype(bool)
            self._rows[idx] = row
        return row

    def history(self) -> list[tuple[int, Bitstring]]:
        """Materialised (change time, target) pairs, starting with (0, 1^n)."""
        n = self.params.n
        return [(t, Bitstring(n, v)) for t, v in zip(self._times, self._targets)]

    def change_times(self, until: int | None = None) -> list[int]:
        if until is not None:
            self.extend_to(until)
        return [t for t in self._times[1:] if until is None or t <= until]

    # evaluation -----------------------------------------------------------

    def value_at(self, x: Bitstring, i: int) -> int:
        if x.n != self.params.n:
            raise ValueError(f"length mismatch: {x.n} != {self.params.n}")
        return self.value_of_int(x.value, i)

    def value_of_int(self, value: int, i: int) -> int:
        return int((value ^ self.target_value(i)).bit_count() <= self.params.r)

    def evaluate_int(self, value: int, i: int) -> int:
        """:meth:`evaluate` for a bitstring given as its packed integer value."""
        if not 0 <= i <= self.clock:
            raise ValueError(f"cannot evaluate at time {i} (clock is {self.clock})")
        v = self.value_of_int(value, i)
        self.clock += 1
        return v

    def evaluate_rows(self, pop: np.ndarray, i: int) -> np.ndarray:
        """Evaluate every row of a (m, n) boolean array at time ``i``; the clock advances by m."""
        self._check_time(i)
        d = self.distance_rows(pop, i)
        self.clock += pop.shape[0]
        return (d <= self.params.r).astype(np.int8)

    # instrumentation (no clock advance) -------------------------------------

    def target_at(self, t: int) -> Bitstring:
        self._check_time(t)
        return Bitstring(self.params.n, self.target_value(t))

    def is_optimal_at(self, x: Bitstring, t: int) -> bool:
        self._check_time(t)
        return bool(self.value_at(x, t))

    def distance_rows(self, pop: np.ndarray, t) -> np.ndarray:
        """Hamming distance of each row to the target in force at ``t`` (scalar or per-row)."""
        if np.ndim(t) == 0:
            return np.count_nonzero(pop != self.target_row(int(t)), axis=1)
        t = np.asarray(t)
        self._index_at(int(t.max()))
        if self._times_arr is None:
            self._times_arr = np.asarray(self._times, dtype=np.int64)
        idx = np.searchsorted(self._times_arr, t, side="right") - 1
        if idx[0] == idx[-1] and np.all(idx == idx[0]):
            return np.count_nonzero(pop != self.target_row(self._times[idx[0]]), axis=1)
        out = np.empty(pop.shape[0], dtype=np.int64)
        for k in np.unique(idx):
            sel = idx == k
            out[sel] = np.count_nonzero(pop[sel] != self.target_row(self._times[k]), axis=1)
        return out


def mhb_new(params: MhbParams, rng: np.random.Generator) -> MhbInstance:
    return MhbInstance(params, rng)


def evaluate(F: DynamicFunction, x: Bitstring, i: int):
    return F.evaluate(x, i)


def target_at(F: MhbInstance, t: int) -> Bitstring:
    return F.target_at(t)


def is_optimal_at(F: MhbInstance, x: Bitstring, t: int) -> bool:
    return F.is_optimal_at(x, t)


# --------------------------------------------------------------------------
# stability


def default_epsilon(n: int, chi: float) -> float:
    """Smallest epsilon with ``n >= (1 + 1/epsilon) * chi``."""
    if not 0 < chi < n:
        raise ValueError("need 0 < chi < n")
    return chi / (n - chi)


def stability_bound(
    params: MhbParams, chi: float = 1.0, eps: float | None = None, d: float = 1.0
) -> tuple[float, float]:
    """``(kappa, rho)`` stability pair of the moving Hamming ball under bitwise mutation.

    ``kappa = theta / (1 + d)`` and
    ``rho = (r * chi / (n * ell))**ell * exp(-(1 + eps) * chi)``.
    Requires ``n >= (1 + 1/eps) * chi``.
    """
    n, r, ell = params.n, params.r, params.ell
    if chi <= 0 or d <= 0:
        raise ValueError("chi and d must be positive")
    if eps is None:
        eps = default_epsilon(n, chi)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if n < (1.0 + 1.0 / eps) * chi * (1.0 - 1e-12):
        raise ValueError(
            f"bound needs n >= (1 + 1/eps) * chi = {(1 + 1 / eps) * chi:.6g}, got n={n}; "
            "increase eps or n"
        )
    kappa = params.theta / (1.0 + d)
    rho = (r * chi / (n * ell)) ** ell * math.exp(-(1.0 + eps) * chi)
    return kappa, rho


def multi_change_bound(kappa: float, d: float) -> float:
    """Bound ``exp(-kappa d^2 / (2 (d+1)))`` on more than one change within ``kappa`` steps."""
    return math.exp(-kappa * d * d / (2.0 * (d + 1.0)))


@dataclass
class StabilityEstimate:
    rho_hat: float
    sigma: float
    worst_distance: int
    by_distance: dict[int, tuple[int, float]] = field(default_factory=dict)
    trials: int = 0
    one_change_freq: float = 0.0
    multi_change_freq: float = 0.0
    multi_change_sigma: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["by_distance"] = {str(k): {"count": c, "hit_rate": p} for k, (c, p) in self.by_distance.items()}
        return d


def stability_estimate(
    params: MhbParams,
    op: MutationOp,
    kappa: int,
    trials: int,
    rng: np.random.Generator,
    min_group: int = 1000,
    chunk: int = 20000,
) -> StabilityEstimate:
    """Monte Carlo estimate of the worst-case recovery probability within a window.

    Each trial picks a window ``(t, t + kappa]`` starting at a uniform time of a
    long change schedule, a point on the boundary of the ball in force at
    ``t`` and one mutation of it.  Trials with at most one change in the window
    contribute a sample for every ball in force during the window; samples are
    grouped by the point's distance to that ball's centre (the success
    probability depends only on it).  ``rho_hat`` is the smallest group hit
    rate among groups with at least ``min_group`` samples.  Windows with two or
    more changes are counted separately.
    """
    if kappa < 1:
        raise ValueError("window length kappa must be at least 1")
    if trials < 1:
        raise ValueError("trials must be positive")
    n, r, ell, theta = params.n, params.r, params.ell, params.theta

    # change schedule long enough that window starts are roughly stationary
    nchanges = max(2000, int(4 * trials * (kappa / theta + 1)))
    gaps = rng.poisson(theta, size=nchanges)
    times = np.cumsum(gaps)
    span = int(times[-1]) - kappa - 1
    if span < 1:
        raise ValueError("schedule too short for the requested window")

    counts: dict[int, list[int]] = {}
    n_one = n_multi = 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        done += m
        starts = rng.integers(0, span, size=m)
        nwin = np.searchsorted(times, starts + kappa, side="right") - np.searchsorted(times, starts, side="right")
        multi = nwin >= 2
        n_multi += int(multi.sum())
        n_one += int((nwin == 1).sum())
        keep = ~multi
        mk = int(keep.sum())
        if mk == 0:
            continue
        # centre = 1^n; point on the boundary; moved centre at distance ell
        x = np.ones((mk, n), dtype=bool)
        order = rng.random((mk, n)).argsort(axis=1)
        rows = np.arange(mk)[:, None]
        x[rows, order[:, :r]] = False
        y = mutate_rows(op, x, rng)
        hit_stay = np.count_nonzero(~y, axis=1) <= r
        _tally(counts, np.full(mk, r), hit_stay)

        moved = nwin[keep] == 1
        mm = int(moved.sum())
        if mm:
            centre2 = np.ones((mm, n), dtype=bool)
            order2 = rng.random((mm, n)).argsort(axis=1)
            centre2[np.arange(mm)[:, None], order2[:, :ell]] = False
            dist_x = np.count_nonzero(x[moved] != centre2, axis=1)
            hit_move = np.count_nonzero(y[moved] != centre2, axis=1) <= r
            _tally(counts, dist_x, hit_move)

    by_distance = {d: (c[0], c[1] / c[0]) for d, c in sorted(counts.items())}
    eligible = {d: v for d, v in by_distance.items() if v[0] >= min_group} or by_distance
    worst = min(eligible, key=lambda d: (eligible[d][1], -d))
    cnt, rate = eligible[worst]
    mfreq = n_multi / trials
    return StabilityEstimate(
        rho_hat=rate,
        sigma=binomial_sigma(rate, cnt),
        worst_distance=int(worst),
        by_distance=by_distance,
        trials=trials,
        one_change_freq=n_one / trials,
        multi_change_freq=mfreq,
        multi_change_sigma=binomial_sigma(mfreq, trials),
    )


def _tally(counts: dict[int, list[int]], dist: np.ndarray, hit: np.ndarray) -> None:
    for d in np.unique(dist):
        sel = dist == d
        c = counts.setdefault(int(d), [0, 0])
        c[0] += int(sel.sum())
        c[1] += int(hit[sel].sum())
