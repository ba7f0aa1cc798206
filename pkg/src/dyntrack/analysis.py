"""Tracking metric, drift and occupancy estimators, gambler's-ruin escape.

Conventions: ``X_t = r - H(x*, x)`` is the distance of the incumbent to the
border of the ball, so ``X = 0`` is the border and ``X = r`` the centre.
``Delta(i) = X_t - X_{t+1}`` is positive when the incumbent drifts outward.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .algorithms import Trace
from .dynamics import MhbInstance, MhbParams
from .operators import MutationOp, mutate_rows
from .stats import binomial_sigma

__all__ = [
    "TrackingReport",
    "tracking_score",
    "DriftEstimate",
    "drift_constants",
    "drift_samples",
    "drift_estimate",
    "dynamic_drift",
    "occupancy_fraction",
    "occupancy_bound_at_time",
    "ruin_probability_closed",
    "ruin_probability_exact",
    "ruin_exact_system",
    "simulate_ruin_walk",
    "LossReport",
    "loss_events",
    "loss_probability_bound",
    "LOSS_PROBABILITY_FLOOR",
]

# lower bound on the per-change loss probability of the (1+1) EA
LOSS_PROBABILITY_FLOOR = (2 * math.e - 1) / (4 * (2 * math.e + 1))


# --------------------------------------------------------------------------
# tracking


@dataclass
class TrackingReport:
    window: int
    start: int
    fractions: np.ndarray
    threshold: float | None = None

    @property
    def min_fraction(self) -> float:
        return float(self.fractions.min())

    @property
    def mean_fraction(self) -> float:
        return float(self.fractions.mean())

    @property
    def max_fraction(self) -> float:
        return float(self.fractions.max())

    @property
    def tracks(self) -> bool | None:
        if self.threshold is None:
            return None
        return self.min_fraction >= self.threshold

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "start": self.start,
            "threshold": self.threshold,
            "min_fraction": self.min_fraction,
            "mean_fraction": self.mean_fraction,
            "max_fraction": self.max_fraction,
            "n_windows": int(self.fractions.size),
            "tracks": self.tracks,
        }


def tracking_score(trace: Trace | np.ndarray, window: int, start: int = 0, threshold: float | None = None) -> TrackingReport:
    """Optimal-hit fraction of every length-``window`` block of queries starting in ``[start, T - window]``."""
    hits = np.asarray(trace.was_optimal if isinstance(trace, Trace) else trace, dtype=np.int64)
    if window < 1 or start < 0:
        raise ValueError("window must be positive and start nonnegative")
    T = hits.size
    if T < start + window:
        raise ValueError(f"trace of length {T} is shorter than start + window = {start + window}")
    c = np.concatenate(([0], np.cumsum(hits)))
    s = np.arange(start, T - window + 1)
    return TrackingReport(window, start, (c[s + window] - c[s]) / window, threshold)


# --------------------------------------------------------------------------
# drift


def drift_constants(b: float, chi: float = 1.0, eps: float = 0.0) -> tuple[float, float]:
    """``(delta, eta)``: outward drift floor inside the ball and inward cap at the border.

    ``delta = chi (1 - b) exp(-(1 + eps) chi) / 2`` and ``eta = b chi``; with
    ``chi = 1, eps = 0`` these are ``(1 - b) / (2e)`` and ``b``.
    """
    return chi * (1.0 - b) * math.exp(-(1.0 + eps) * chi) / 2.0, b * chi


def dynamic_drift(n: int, h: int, ell: int) -> float:
    """Expected change ``E[ell - 2Z]`` of the Hamming distance when the target moves.

    ``h`` is the current distance to the target; ``Z ~ HGeo(n, h, ell)`` counts
    moved positions that were mismatched.
    """
    return ell * (1.0 - 2.0 * h / n)


def drift_samples(
    params: MhbParams, op: MutationOp, i: int, samples: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Coupled samples of ``Delta(i)`` and ``Delta_1(i) = 1{Y=1} - X`` from one accepted step.

    The incumbent sits at distance ``r - i`` from a frozen target; ``X`` counts
    flipped mismatched bits and ``Y`` flipped matched bits.
    """
    n, r = params.n, params.r
    if not 0 <= i <= r:
        raise ValueError(f"state must be in [0, {r}], got {i}")
    h = r - i
    x = np.ones((samples, n), dtype=bool)
    if h:
        cols = rng.random((samples, n)).argsort(axis=1)[:, :h]
        x[np.arange(samples)[:, None], cols] = False
    y = mutate_rows(op, x, rng)
    flips = x ^ y
    X = np.count_nonzero(flips & ~x, axis=1)
    Y = np.count_nonzero(flips & x, axis=1)
    step = Y - X
    delta = np.where(h + step <= r, step, 0)
    return delta, (Y == 1).astype(np.int64) - X


@dataclass
class DriftEstimate:
    state: int
    mean: float
    sigma: float
    samples: int
    delta: float
    eta: float
    mean_delta1: float = float("nan")
    dominated: bool = True

    @property
    def bound(self) -> float:
        return self.delta if self.state > 0 else -self.eta

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bound"] = self.bound
        return d


def drift_estimate(
    params: MhbParams, op: MutationOp, i: int, samples: int, rng: np.random.Generator, eps: float = 0.0
) -> DriftEstimate:
    """Monte Carlo ``E[Delta(i) | X_t = i]`` with the analytical companions ``delta`` and ``eta``."""
    if samples < 2:
        raise ValueError("need at least 2 samples")
    chi = op.chi if op.kind == "bitwise" else 1.0
    delta, eta = drift_constants(params.b, chi, eps)
    d, d1 = drift_samples(params, op, i, samples, rng)
    return DriftEstimate(
        state=i,
        mean=float(d.mean()),
        sigma=float(d.std(ddof=1) / math.sqrt(samples)),
        samples=samples,
        delta=delta,
        eta=eta,
        mean_delta1=float(d1.mean()),
        dominated=bool(np.all(d >= d1)) if i > 0 else True,
    )


# --------------------------------------------------------------------------
# occupancy


def occupancy_fraction(states, delta: float, eta: float) -> tuple[float, float]:
    """Empirical fraction of time at state 0 and the lower bound ``(delta t - X_0) / ((delta + eta) t)``."""
    s = np.asarray(states)
    if s.size == 0:
        raise ValueError("empty state sequence")
    if delta <= 0 or eta < 0:
        raise ValueError("need delta > 0 and eta >= 0")
    t = s.size
    return float(np.mean(s == 0)), (delta * t - float(s[0])) / ((delta + eta) * t)


def occupancy_bound_at_time(delta: float, eta: float) -> float:
    """``delta / (2 (delta + eta))``: border occupancy at an independent late time."""
    return delta / (2.0 * (delta + eta))


# --------------------------------------------------------------------------
# gambler's ruin


def _check_ruin(r: int, d: int, n: int, strict: bool) -> None:
    if r < 0 or d < 1 or n < 1:
        raise ValueError("need r >= 0, d >= 1, n >= 1")
    if strict and not d + r < n / 2:
        raise ValueError(f"closed form needs d + r < n/2, got d + r = {d + r}, n = {n}")
    if not strict and r + d > n:
        raise ValueError(f"need r + d <= n, got r + d = {r + d}, n = {n}")


def ruin_probability_closed(r: int, d: int, n: int, x: int) -> float:
    """Pessimistic probability that the single-bit walk from distance ``x`` enters the ball before ``r + d``.

    Treats every step as moving inward with probability ``(d + r - 1) / n``.
    """
    _check_ruin(r, d, n, strict=True)
    if x <= r:
        return 1.0
    if x >= r + d:
        return 0.0
    s = (d + r - 1) / (n - d - r + 1)
    sd = s**d
    return (s ** (x - r) - sd) / (1.0 - sd)


def ruin_exact_system(r: int, d: int, n: int) -> tuple[np.ndarray, float]:
    """Solve ``p_x = (n-x)/n p_{x+1} + x/n p_{x-1}`` on ``r < x < r + d``.

    Returns ``(p, residual)`` with ``p[k]`` the probability for ``x = r + k``
    (``k = 0 .. d``) and the max-norm residual of the interior equations.
    """
    _check_ruin(r, d, n, strict=False)
    m = d - 1
    p = np.zeros(d + 1)
    p[0] = 1.0
    if m == 0:
        return p, 0.0
    xs = np.arange(r + 1, r + d, dtype=float)
    up = (n - xs) / n
    down = xs / n
    ab = np.zeros((3, m))
    ab[0, 1:] = -up[:-1]
    ab[1, :] = 1.0
    ab[2, :-1] = -down[1:]
    rhs = np.zeros(m)
    rhs[0] = down[0]
    p[1:d] = solve_banded((1, 1), ab, rhs)
    resid = p[1:d] - up * p[2:] - down * p[:-2]
    return p, float(np.max(np.abs(resid)))


def ruin_probability_exact(r: int, d: int, n: int, x: int) -> float:
    _check_ruin(r, d, n, strict=False)
    if x <= r:
        return 1.0
    if x >= r + d:
        return 0.0
    p, _ = ruin_exact_system(r, d, n)
    return float(p[x - r])


def simulate_ruin_walk(
    r: int, d: int, n: int, x: int, walks: int, rng: np.random.Generator, op: MutationOp | None = None
) -> tuple[float, float]:
    """Fraction of walks from distance ``x`` that reach ``<= r`` before ``>= r + d``.

    The default single-bit walk flips one uniform bit per step; a bitwise
    ``op`` flips each bit independently (no selection).  Only the distance is
    tracked, which is exact by symmetry.  Returns ``(estimate, sigma)``.
    """
    if walks < 1:
        raise ValueError("walks must be positive")
    dist = np.full(walks, x, dtype=np.int64)
    active = (dist > r) & (dist < r + d)
    while active.any():
        cur = dist[active]
        if op is None or op.kind == "single-bit":
            out = rng.random(cur.size) < (n - cur) / n
            cur = cur + np.where(out, 1, -1)
        else:
            p = op.rate(n)
            cur = cur + rng.binomial(n - cur, p) - rng.binomial(cur, p)
        dist[active] = cur
        active = (dist > r) & (dist < r + d)
    est = float(np.mean(dist <= r))
    return est, binomial_sigma(est, walks)


# --------------------------------------------------------------------------
# loss of the optimal region


def loss_probability_bound(b: float) -> float:
    """``(1 - b)(1 - 2b) / (2 (1 - b + 2 e b))``: per-change loss probability floor at equilibrium."""
    return (1 - b) * (1 - 2 * b) / (2 * (1 - b + 2 * math.e * b))


@dataclass
class LossReport:
    episodes: list[tuple[int, int | None]] = field(default_factory=list)
    changes_inside: int = 0
    changes_lost: int = 0
    in_opt_fraction: np.ndarray | None = None

    @property
    def per_change_loss(self) -> float:
        return self.changes_lost / self.changes_inside if self.changes_inside else float("nan")

    @property
    def unrecovered(self) -> int:
        return sum(1 for _, rec in self.episodes if rec is None)

    def partial_losses(self, gamma0: float = 0.5) -> int:
        """Generations whose in-OPT fraction fell below ``gamma0``."""
        if self.in_opt_fraction is None:
            return 0
        return int(np.sum(self.in_opt_fraction < gamma0))

    def to_dict(self, gamma0: float = 0.5) -> dict:
        return {
            "episodes": [[a, b] for a, b in self.episodes],
            "n_episodes": len(self.episodes),
            "unrecovered": self.unrecovered,
            "changes_inside": self.changes_inside,
            "changes_lost": self.changes_lost,
            "per_change_loss": None if not self.changes_inside else self.per_change_loss,
            "gamma0": gamma0,
            "generations_below_gamma0": self.partial_losses(gamma0),
        }


def loss_events(trace: Trace, F: MhbInstance) -> LossReport:
    """Loss/recovery episodes of the incumbent (or of the whole population).

    A loss starts at the first iteration/generation whose incumbent (every
    member, for populations) is outside the ball at its evaluation time and
    ends at the next one with an optimal member; ``None`` marks no recovery
    within the run.  Each target change between two summary rows counts as a
    loss if the row before it was inside and the row after it is not.
    """
    if trace.n != F.params.n:
        raise ValueError(f"trace has n={trace.n}, instance has n={F.params.n}")
    clocks = np.asarray(trace.summary["clock"])
    inside = np.asarray(trace.summary["in_opt_count"]) > 0
    if clocks.size and clocks[-1] >= F.clock:
        raise ValueError("trace extends past the instance's clock")
    episodes = []
    lost_at = None
    for c, ok in zip(clocks.tolist(), inside.tolist()):
        if not ok and lost_at is None:
            lost_at = c
        elif ok and lost_at is not None:
            episodes.append((lost_at, c))
            lost_at = None
    if lost_at is not None:
        episodes.append((lost_at, None))

    report = LossReport(episodes=episodes, in_opt_fraction=np.asarray(trace.summary["in_opt_fraction"], dtype=float))
    if clocks.size < 2:
        return report
    changes = np.asarray(F.change_times(int(clocks[-1])), dtype=np.int64)
    changes = changes[(changes > clocks[0]) & (changes <= clocks[-1])]
    after = np.searchsorted(clocks, changes, side="left")
    # several changes between the same two rows count once
    after = np.unique(after)
    before = after - 1
    was_in = inside[before]
    report.changes_inside = int(was_in.sum())
    report.changes_lost = int((was_in & ~inside[after]).sum())
    return report
