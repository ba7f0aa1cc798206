"""The single-individual and non-elitist population algorithms.

Both compare candidates on a static copy of the dynamic function: the
single-individual algorithm evaluates offspring and parent at time ``2*tau``,
the population algorithm evaluates all of generation ``g`` at ``g*lam``.
Query ``t`` of a trace is the ``t``-th evaluation (the clock reading when it
was made); its optimality flag is taken against the ball in force at ``t``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bits import Bitstring, int_to_packed, packed_to_hex, pack_rows, sample_at_distance
from .dynamics import MhbInstance
from .operators import FlipSampler, MutationOp, SelectionSpec, _rank_positions, mutate_rows, tiebreak_order

__all__ = [
    "QueryRecord",
    "Trace",
    "run_single",
    "run_population",
    "initial_population",
    "SUMMARY_FIELDS",
    "TRACE_FIELDS",
]

TRACE_FIELDS = ("t", "i_t", "point", "value", "was_optimal", "generation")
SUMMARY_FIELDS = ("generation", "clock", "in_opt_count", "in_opt_fraction", "dist_best_to_target")


@dataclass(frozen=True)
class QueryRecord:
    t: int
    i_t: int
    point: Bitstring | None
    value: int
    was_optimal: bool
    generation: int


@dataclass
class Trace:
    """Per-query arrays plus one summary row per iteration/generation.

    ``points`` holds packed bits (``np.packbits`` layout, one row per query)
    or is ``None`` when a run was made without recording points.
    """

    n: int
    gen_size: int
    eval_time: np.ndarray
    value: np.ndarray
    was_optimal: np.ndarray
    generation: np.ndarray
    summary: dict[str, np.ndarray]
    points: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.value)

    @property
    def query_time(self) -> np.ndarray:
        return np.arange(len(self.value), dtype=np.int64)

    def record(self, t: int) -> QueryRecord:
        point = None
        if self.points is not None:
            point = Bitstring.from_hex(packed_to_hex(self.points[t], self.n), self.n)
        return QueryRecord(
            t=int(t),
            i_t=int(self.eval_time[t]),
            point=point,
            value=int(self.value[t]),
            was_optimal=bool(self.was_optimal[t]),
            generation=int(self.generation[t]),
        )

    def records(self):
        for t in range(len(self)):
            yield self.record(t)

    # io -----------------------------------------------------------------

    def write_csv(self, path) -> None:
        """One row per query: t, i_t, point (hex), value, was_optimal, generation."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_FIELDS)
            for t in range(len(self)):
                point = packed_to_hex(self.points[t], self.n) if self.points is not None else ""
                w.writerow(
                    (t, int(self.eval_time[t]), point, int(self.value[t]), int(self.was_optimal[t]), int(self.generation[t]))
                )

    def write_summary_csv(self, path) -> None:
        write_summary_csv(path, self.summary)

    def write_meta(self, path) -> None:
        Path(path).write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read_csv(cls, path, n: int, gen_size: int, meta: dict | None = None) -> Trace:
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if rows and tuple(rows[0].keys()) != TRACE_FIELDS:
            raise ValueError(f"unexpected trace columns {tuple(rows[0].keys())}")
        for k, row in enumerate(rows):
            if int(row["t"]) != k:
                raise ValueError(f"row {k + 2}: query times must be consecutive from 0")
        points = None
        if rows and rows[0]["point"]:
            points = pack_rows(np.array([Bitstring.from_hex(r["point"], n).to_array() for r in rows]))
        gen = np.array([int(r["generation"]) for r in rows], dtype=np.int64)
        return cls(
            n=n,
            gen_size=gen_size,
            eval_time=np.array([int(r["i_t"]) for r in rows], dtype=np.int64),
            value=np.array([int(r["value"]) for r in rows], dtype=np.int8),
            was_optimal=np.array([r["was_optimal"] == "1" for r in rows], dtype=bool),
            generation=gen,
            summary={},
            points=points,
            meta=meta or {},
        )


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(int(v))


def write_summary_csv(path, summary: dict[str, np.ndarray]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        cols = [summary[k] for k in SUMMARY_FIELDS]
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def read_summary_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != SUMMARY_FIELDS:
            raise ValueError(f"unexpected summary columns {header}")
        rows = list(reader)
    out = {}
    for j, name in enumerate(SUMMARY_FIELDS):
        conv = float if name == "in_opt_fraction" else int
        out[name] = np.array([conv(r[j]) for r in rows])
    return out


# --------------------------------------------------------------------------
# Algorithm 1


def run_single(
    F: MhbInstance,
    op: MutationOp,
    budget: int,
    rng: np.random.Generator,
    x0: Bitstring | None = None,
    keep_points: bool = True,
) -> Trace:
    """Single-individual algorithm; bitwise ``op`` gives the (1+1) EA, single-bit gives RLS.

    Iteration ``tau`` mutates ``x`` into ``x'``, evaluates ``x'`` then ``x``
    both at time ``2*tau`` and keeps ``x'`` iff its value is at least as good.
    ``budget`` counts evaluations; an odd last evaluation is dropped.
    """
    n, r = F.params.n, F.params.r
    if x0 is None:
        x0 = Bitstring(n, F.target_value(0))
    if x0.n != n:
        raise ValueError("initial point has the wrong length")
    if not F.is_optimal_at(x0, F.clock):
        raise ValueError("initial point must be optimal at the starting time")
    if budget < 2:
        raise ValueError("budget must allow at least one iteration")
    iters = budget // 2
    start = F.clock
    if start % 2:
        raise ValueError("single-individual runs must start at an even clock")

    sample = FlipSampler(op, n, rng)
    evaluate = F.evaluate_int
    target = F.target_value
    x = x0.value
    values = bytearray(2 * iters)
    opt = bytearray(2 * iters)
    in_opt = np.empty(iters, dtype=np.int64)
    dist = np.empty(iters, dtype=np.int64)
    accepted = np.empty(iters, dtype=bool)
    pts: list[int] | None = [] if keep_points else None

    for tau in range(iters):
        t = start + 2 * tau
        y = x ^ sample()
        v1 = evaluate(y, t)
        v2 = evaluate(x, t)
        dx = (x ^ target(t)).bit_count()
        values[2 * tau] = v1
        values[2 * tau + 1] = v2
        opt[2 * tau] = v1
        opt[2 * tau + 1] = (x ^ target(t + 1)).bit_count() <= r
        in_opt[tau] = v2
        dist[tau] = dx
        if pts is not None:
            pts.append(y)
            pts.append(x)
        if v1 >= v2:
            x = y
            accepted[tau] = True
        else:
            accepted[tau] = False

    gens = np.arange(iters, dtype=np.int64)
    points = None
    if pts is not None:
        nb = -(-n // 8)
        points = np.frombuffer(b"".join(int_to_packed(p, n) for p in pts), dtype=np.uint8).reshape(-1, nb)
    summary = {
        "generation": gens,
        "clock": start + 2 * gens,
        "in_opt_count": in_opt,
        "in_opt_fraction": in_opt.astype(float),
        "dist_best_to_target": dist,
        "accepted": accepted,
    }
    return Trace(
        n=n,
        gen_size=2,
        eval_time=np.repeat(start + 2 * gens, 2),
        value=np.frombuffer(bytes(values), dtype=np.int8).copy(),
        was_optimal=np.frombuffer(bytes(opt), dtype=np.uint8).astype(bool),
        generation=np.repeat(gens, 2),
        summary=summary,
        points=points,
        meta={
            "algorithm": "single",
            "mutation": str(op),
            "budget": budget,
            "evaluations": 2 * iters,
            "dropped_evaluations": budget - 2 * iters,
            "start_clock": start,
            "final_point": Bitstring(n, x).to_hex(),
        },
    )


# --------------------------------------------------------------------------
# Algorithm 2


def initial_population(
    n: int, lam: int, rng: np.random.Generator | None = None, mode: str = "center", r: int = 0
) -> np.ndarray:
    """Initial population inside the first ball (centred on 1^n).

    ``mode="center"`` gives ``lam`` copies of 1^n; ``mode="uniform-ball"``
    draws each individual uniformly from the radius-``r`` ball.
    """
    pop = np.ones((lam, n), dtype=bool)
    if mode == "center":
        return pop
    if mode != "uniform-ball":
        raise ValueError(f"unknown initialiser {mode!r}")
    if rng is None:
        raise ValueError("uniform-ball initialisation needs an rng")
    weights = np.array([math.comb(n, k) for k in range(r + 1)], dtype=float)
    ks = rng.choice(r + 1, size=lam, p=weights / weights.sum())
    centre = Bitstring(n, (1 << n) - 1)
    for i, k in enumerate(ks):
        if k:
            pop[i] = sample_at_distance(centre, int(k), rng).to_array().astype(bool)
    return pop


def run_population(
    F: MhbInstance,
    lam: int,
    sel: SelectionSpec,
    op: MutationOp,
    budget: int,
    rng: np.random.Generator,
    P0: np.ndarray | None = None,
    keep_points: bool = True,
) -> Trace:
    """Non-elitist population algorithm.

    Generation ``g`` evaluates its ``lam`` members at time ``g*lam`` (clock
    ticks ``g*lam .. g*lam + lam - 1``), then builds the next population from
    ``lam`` independent select-and-mutate steps on that snapshot.  Member
    ``j`` of generation ``g`` is query ``g*lam + j``.  Only whole generations
    fit into ``budget``; the remainder is dropped and reported in ``meta``.
    """
    n, r = F.params.n, F.params.r
    if lam < 1:
        raise ValueError("population size must be positive")
    sel.check(lam)
    if P0 is None:
        P0 = initial_population(n, lam)
    P = np.asarray(P0, dtype=bool)
    if P.shape != (lam, n):
        raise ValueError(f"initial population must have shape {(lam, n)}, got {P.shape}")
    start = F.clock
    if np.any(F.distance_rows(P, start) > r):
        raise ValueError("every initial individual must be optimal at the starting time")
    gens = budget // lam
    if gens < 1:
        raise ValueError("budget smaller than one generation")

    total = gens * lam
    value = np.empty(total, dtype=np.int8)
    was_opt = np.empty(total, dtype=bool)
    points = np.empty((total, -(-n // 8)), dtype=np.uint8) if keep_points else None
    in_opt = np.empty(gens, dtype=np.int64)
    dist_best = np.empty(gens, dtype=np.int64)
    offsets = np.arange(lam)

    for g in range(gens):
        t0 = start + g * lam
        d0 = F.distance_rows(P, t0)
        fit = F.evaluate_rows(P, t0)
        sl = slice(g * lam, (g + 1) * lam)
        value[sl] = fit
        was_opt[sl] = F.distance_rows(P, t0 + offsets) <= r
        if points is not None:
            points[sl] = pack_rows(P)
        in_opt[g] = int(fit.sum())
        dist_best[g] = int(d0.min())
        # next generation from the frozen snapshot
        order = tiebreak_order(fit, rng)
        parents = order[_rank_positions(sel, lam, lam, rng)]
        P = mutate_rows(op, P[parents], rng)

    g_idx = np.arange(gens, dtype=np.int64)
    summary = {
        "generation": g_idx,
        "clock": start + g_idx * lam,
        "in_opt_count": in_opt,
        "in_opt_fraction": in_opt / lam,
        "dist_best_to_target": dist_best,
    }
    return Trace(
        n=n,
        gen_size=lam,
        eval_time=np.repeat(start + g_idx * lam, lam),
        value=value,
        was_optimal=was_opt,
        generation=np.repeat(g_idx, lam),
        summary=summary,
        points=points,
        meta={
            "algorithm": "population",
            "lambda": lam,
            "selection": str(sel),
            "mutation": str(op),
            "budget": budget,
            "evaluations": total,
            "dropped_evaluations": budget - total,
            "start_clock": start,
        },
    )
