"""Acceptance suite: one function per criterion, each returning a ``CriterionResult``.

Every check compares an estimator against an independent oracle (closed form,
exhaustive enumeration, scipy distribution, or a replayed run) at a fixed
seed.  ``run_all`` drives the whole suite; the CLI ``verify`` command and the
acceptance tests both go through here.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats as sps

from .algorithms import run_single
from .analysis import (
    drift_constants,
    drift_estimate,
    occupancy_bound_at_time,
    ruin_exact_system,
    ruin_probability_closed,
    simulate_ruin_walk,
)
from .bits import Bitstring
from .dynamics import MhbInstance, MhbParams, multi_change_bound, stability_bound, stability_estimate
from .harness import ArmSpec, ExperimentConfig, preset, replay, run_arm_replicate, run_experiment
from .operators import (
    FlipSampler,
    MutationOp,
    SelectionSpec,
    beta_closed_form,
    beta_empirical,
    corollary_threshold,
    mutate_rows,
    mutation_transition_prob,
)
from .stats import RngStream, binomial_sigma, poisson_tail_bound

__all__ = ["Check", "CriterionResult", "CRITERIA", "run_criterion", "run_all"]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class CriterionResult:
    key: str
    title: str
    checks: list[Check] = field(default_factory=list)
    seconds: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name, bool(passed), detail))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        n_ok = sum(c.passed for c in self.checks)
        return f"{status}  [{self.key}] {self.title}: {n_ok}/{len(self.checks)} checks ({self.seconds:.1f} s)"

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "title": self.title,
            "passed": self.passed,
            "seconds": self.seconds,
            "checks": [c.__dict__ for c in self.checks],
            "notes": self.notes,
        }


def _rng(seed: int, key: int) -> np.random.Generator:
    return RngStream(seed, 1000 + key).generator()


# --------------------------------------------------------------------------
# 1. selection


def criterion_selection(seed: int = 0, samples: int = 10**6, lam: int = 100) -> CriterionResult:
    res = CriterionResult("1", "cumulative selection probability, empirical vs closed form")
    rng = _rng(seed, 1)
    specs = [SelectionSpec.tournament(k) for k in (2, 5, 33)]
    specs += [SelectionSpec.mu_comma_lambda(mu) for mu in (lam // 10, lam // 4)]
    # linear ranking is only defined for eta in (1, 2]
    specs += [SelectionSpec.linear_ranking(eta) for eta in (1.5, 2.0)]
    specs += [SelectionSpec.exponential_ranking(eta) for eta in (1.5, 2.0, 5.0, 33.0)]
    for spec in specs:
        for gamma in (0.1, 0.3, 0.5, 1.0):
            exact = beta_closed_form(spec, gamma, lam)
            est, _ = beta_empirical(spec, lam, gamma, samples, rng)
            tol = 3 * binomial_sigma(exact, samples) + 1e-12
            res.add(
                f"{spec} gamma={gamma}",
                abs(est - exact) <= tol,
                f"empirical={est:.6f} closed={exact:.6f} tol={tol:.2e}",
            )
    return res


# --------------------------------------------------------------------------
# 2. mutation


def _flip_count_chi2(counts: np.ndarray, n: int, p: float) -> tuple[float, float]:
    """Chi-square of flip counts against Binomial(n, p), tail bins merged to expected >= 5."""
    total = counts.sum()
    expected = sps.binom.pmf(np.arange(n + 1), n, p) * total
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    obs[-1] += acc_o
    exp[-1] += acc_e
    obs, exp = np.array(obs), np.array(exp)
    exp *= obs.sum() / exp.sum()
    stat, pval = sps.chisquare(obs, exp)
    return float(stat), float(pval)


def criterion_mutation(seed: int = 0, samples: int = 10**6) -> CriterionResult:
    res = CriterionResult("2", "mutation transition probabilities and flip-count law")
    rng = _rng(seed, 2)
    n = 12
    ys = [Bitstring(n, v) for v in range(2**n)]
    xs = [Bitstring(n, 0), Bitstring(n, 2**n - 1)] + [Bitstring(n, int(v)) for v in rng.integers(0, 2**n, 4)]
    for op in (MutationOp.bitwise(1.0), MutationOp.single_bit()):
        for x in xs:
            total = math.fsum(mutation_transition_prob(op, x, y) for y in ys)
            res.add(f"{op} sum over y from {x}", abs(total - 1.0) <= 1e-10, f"sum={total!r}")

    n = 64
    op = MutationOp.bitwise(1.0)
    sampler = FlipSampler(op, n, rng)
    counts = np.bincount([sampler().bit_count() for _ in range(samples)], minlength=n + 1)
    stat, pval = _flip_count_chi2(counts, n, 1 / n)
    res.add("sequential sampler flip counts ~ Binomial(64, 1/64)", pval > 1e-6, f"chi2={stat:.2f} p={pval:.3g}")

    counts = np.zeros(n + 1, dtype=np.int64)
    block = 50_000
    for start in range(0, samples, block):
        m = min(block, samples - start)
        x = np.ones((m, n), dtype=bool)
        flips = np.count_nonzero(mutate_rows(op, x, rng) != x, axis=1)
        counts += np.bincount(flips, minlength=n + 1)
    stat, pval = _flip_count_chi2(counts, n, 1 / n)
    res.add("row-wise mutation flip counts ~ Binomial(64, 1/64)", pval > 1e-6, f"chi2={stat:.2f} p={pval:.3g}")
    return res


# --------------------------------------------------------------------------
# 3. gambler's ruin


def criterion_ruin(seed: int = 0, walks: int = 10**5) -> CriterionResult:
    res = CriterionResult("3", "re-entry probability: exact system, closed form, simulation, scaling")
    rng = _rng(seed, 3)
    for n in (16, 32, 64, 128, 256):
        for r in sorted({1, max(1, n // 20)}):
            for d in sorted({2, n // 4}):
                p, resid = ruin_exact_system(r, d, n)
                res.add(f"residual n={n} r={r} d={d}", resid < 1e-12, f"residual={resid:.2e}")
                if d + r < n / 2:
                    worst = max(p[k] - ruin_probability_closed(r, d, n, r + k) for k in range(d + 1))
                    res.add(f"exact <= closed n={n} r={r} d={d}", worst <= 1e-12, f"max(exact-closed)={worst:.2e}")
                x = r + 1
                est, _ = simulate_ruin_walk(r, d, n, x, walks, rng)
                tol = 3 * binomial_sigma(p[1], walks)
                res.add(
                    f"walk simulation n={n} r={r} d={d} x={x}",
                    abs(est - p[1]) <= tol,
                    f"simulated={est:.5f} exact={p[1]:.5f} tol={tol:.2e}",
                )
    ratios = {}
    for n in (64, 128, 256):
        for r in sorted({1, n // 20}):
            d = n // 4
            p, _ = ruin_exact_system(r, d, n)
            ratio = float(p[1] * n / max(r, math.log(n)))
            ratios[f"n={n},r={r}"] = ratio
            res.add(f"scaling n={n} r={r}", ratio <= 10, f"exact*n/max(r, ln n)={ratio:.3f}")
    res.notes["scaling_ratios"] = ratios
    return res


# --------------------------------------------------------------------------
# 4. Poisson tail


def criterion_poisson_tail() -> CriterionResult:
    res = CriterionResult("4", "Poisson lower tail below its Chernoff-type bound")
    for theta in (5, 10, 20, 50):
        worst = -math.inf
        ok = True
        for x in range(1, theta):
            cdf = float(sps.poisson.cdf(x, theta))
            bound = poisson_tail_bound(theta, x)
            ok &= cdf <= bound
            worst = max(worst, cdf / bound)
        res.add(f"theta={theta}, x=1..{theta - 1}", ok, f"max cdf/bound={worst:.4f}")
    return res


# --------------------------------------------------------------------------
# 5. stability


def criterion_stability(seed: int = 0, trials: int = 10**5) -> CriterionResult:
    res = CriterionResult("5", "recovery probability within a window vs its lower bound")
    params = MhbParams.from_fraction(100, 0.3, 1, 500.0)
    kappa, rho = stability_bound(params, chi=1.0, d=1)
    res.add("window length", kappa == 250, f"kappa={kappa}")
    est = stability_estimate(params, MutationOp.bitwise(1.0), int(kappa), trials, _rng(seed, 5))
    res.add(
        "rho_hat >= rho - 3 sigma",
        est.rho_hat >= rho - 3 * est.sigma,
        f"rho_hat={est.rho_hat:.5f} (distance {est.worst_distance}) rho={rho:.5f} sigma={est.sigma:.2e}",
    )
    bound = multi_change_bound(kappa, 1)
    res.add(
        "multi-change frequency <= bound + 3 sigma",
        est.multi_change_freq <= bound + 3 * est.multi_change_sigma,
        f"freq={est.multi_change_freq:.5f} bound={bound:.5f}",
    )
    res.notes["estimate"] = est.to_dict()
    return res


# --------------------------------------------------------------------------
# 6. drift


def criterion_drift(seed: int = 0, samples: int = 10**5) -> CriterionResult:
    res = CriterionResult("6", "one-step drift of the distance to the border")
    params = MhbParams.from_fraction(200, 0.05, 1, 1e15)
    op = MutationOp.bitwise(1.0)
    delta, eta = drift_constants(params.b, 1.0)
    res.add("delta constant", abs(delta - 0.95 / (2 * math.e)) < 1e-12, f"delta={delta:.6f} eta={eta:.6f}")
    rng = _rng(seed, 6)
    for i in range(0, 6):
        est = drift_estimate(params, op, i, samples, rng)
        res.add(
            f"state {i}",
            est.mean >= est.bound - 3 * est.sigma,
            f"mean={est.mean:.5f} bound={est.bound:.5f} sigma={est.sigma:.2e}",
        )
        if i > 0:
            res.add(f"state {i} dominates the one-bit drift", est.dominated, f"mean_delta1={est.mean_delta1:.5f}")
    return res


# --------------------------------------------------------------------------
# 7. occupancy


def border_occupancy(seed: int, n: int = 200, b: float = 0.05, steps: int = 10**6, burn_in: int = 10**4) -> float:
    """Fraction of (1+1) EA iterations spent on the border of a frozen ball."""
    params = MhbParams.from_fraction(n, b, 1, 1e15)
    stream = RngStream(seed, 7)
    F = MhbInstance(params, stream.child(0).generator())
    trace = run_single(F, MutationOp.bitwise(1.0), 2 * (burn_in + steps), stream.child(1).generator(), keep_points=False)
    dist = trace.summary["dist_best_to_target"][burn_in:]
    return float(np.mean(dist == params.r))


def criterion_occupancy(seed: int = 0, seeds: int = 10, steps: int = 10**6) -> CriterionResult:
    res = CriterionResult("7", "border occupancy of the (1+1) EA in a frozen ball")
    delta, eta = drift_constants(0.05, 1.0)
    target = occupancy_bound_at_time(delta, eta) - 0.05
    fracs = []
    for s in range(seeds):
        f = border_occupancy(seed * 1000 + s, steps=steps)
        fracs.append(f)
        res.add(f"seed {s}", f >= target, f"border fraction={f:.4f} threshold={target:.4f}")
    res.notes["fractions"] = fracs
    return res


# --------------------------------------------------------------------------
# 8. headline contrast


def contrast_config(seed: int = 0, replicates: int = 30, budget: int = 10**6) -> ExperimentConfig:
    return preset("theorem1-contrast", seed=seed, replicates=replicates, budget=budget, threshold=0.25)


def _run_arm(cfg: ExperimentConfig, arm: ArmSpec) -> list[dict]:
    cfg = replace(cfg, arms=[arm])
    cfg.validate()
    return [run_arm_replicate(cfg, 0, rep)[1] for rep in range(cfg.replicates)]


def criterion_contrast_single(seed: int = 0, replicates: int = 30, budget: int = 10**6) -> CriterionResult:
    res = CriterionResult("8a", "(1+1) EA loses the moving ball")
    cfg = contrast_config(seed, replicates, budget)
    metrics = _run_arm(cfg, ArmSpec("ea11", "single", "bitwise:chi=1.0"))
    good = [m["final_half_optimal_fraction"] <= 0.01 and m["loss"]["unrecovered"] >= 1 for m in metrics]
    need = math.ceil(0.9 * replicates)
    res.add(
        "final-half optimal fraction <= 0.01 with an unrecovered loss",
        sum(good) >= need,
        f"{sum(good)}/{replicates} seeds (need {need})",
    )
    res.notes["final_half_optimal_fraction"] = [m["final_half_optimal_fraction"] for m in metrics]
    res.notes["unrecovered"] = [m["loss"]["unrecovered"] for m in metrics]
    return res


POPULATION_ARMS = (
    ArmSpec("pop-tournament", "population", "bitwise:chi=1.0", "auto", "tournament:k=33"),
    ArmSpec("pop-comma", "population", "bitwise:chi=1.0", "auto", "mu-comma-lambda:mu=3"),
    ArmSpec("pop-exp-ranking", "population", "bitwise:chi=1.0", "auto", "exponential-ranking:eta=33"),
)


def criterion_contrast_population(seed: int = 0, replicates: int = 30, budget: int = 10**6) -> CriterionResult:
    res = CriterionResult("8b", "population EA tracks the moving ball")
    cfg = contrast_config(seed, replicates, budget)
    k = corollary_threshold(0.1, 1, 0.1)
    res.add("pressure threshold", math.ceil(k - 1e-9) == 33, f"threshold={k:.6f}")
    lam = cfg.population_size(POPULATION_ARMS[0])
    res.add("population size", lam == 125, f"lambda={lam}")
    need = math.ceil(0.95 * replicates)
    for arm in POPULATION_ARMS:
        metrics = _run_arm(cfg, arm)
        every_gen = [m["min_in_opt_fraction_after_first"] >= 0.5 for m in metrics]
        tracks = [bool(m["tracking"]["tracks"]) for m in metrics]
        both = sum(a and b for a, b in zip(every_gen, tracks))
        mins = [m["min_in_opt_fraction_after_first"] for m in metrics]
        window_mins = [m["tracking"]["min_fraction"] for m in metrics]
        res.add(
            f"{arm.selection}: every generation >= 0.5 in OPT and windows >= 0.25",
            both >= need,
            f"{both}/{replicates} seeds (need {need}); generation-min median={np.median(mins):.3f}, "
            f"window-min median={np.median(window_mins):.3f}",
        )
        never_lost = sum(m["loss"]["n_episodes"] == 0 for m in metrics)
        res.notes[arm.name] = {
            "seeds_every_generation_ge_half": sum(every_gen),
            "seeds_tracking": sum(tracks),
            "seeds_never_entirely_outside": never_lost,
            "mean_optimal_fraction": float(np.mean([m["optimal_fraction"] for m in metrics])),
            "generation_min": mins,
            "window_min": window_mins,
        }
    return res


# --------------------------------------------------------------------------
# 9. replay


def criterion_replay(seed: int = 0) -> CriterionResult:
    res = CriterionResult("9", "rerun from manifest reproduces summaries byte for byte")
    cfg = preset("theorem1-contrast", seed=seed, replicates=2, budget=20_000, summary_every=1, summary_only=False)
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp, "a"), Path(tmp, "b")
        cfg.out = str(a)
        run_experiment(cfg)
        replay(a / "manifest.json", b)
        files = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
        res.add("csv files written", len(files) > 0, f"{len(files)} files")
        for rel in files:
            res.add(f"identical {rel}", (a / rel).read_bytes() == (b / rel).read_bytes())
        res.add("identical manifest", (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes())
    return res


CRITERIA = {
    "1": criterion_selection,
    "2": criterion_mutation,
    "3": criterion_ruin,
    "4": criterion_poisson_tail,
    "5": criterion_stability,
    "6": criterion_drift,
    "7": criterion_occupancy,
    "8a": criterion_contrast_single,
    "8b": criterion_contrast_population,
    "9": criterion_replay,
}


def run_criterion(key: str, **kwargs) -> CriterionResult:
    t0 = time.perf_counter()
    res = CRITERIA[key](**kwargs)
    res.seconds = time.perf_counter() - t0
    return res


def run_all(keys=None, seed: int = 0, echo=None) -> list[CriterionResult]:
    out = []
    for key in keys or CRITERIA:
        kwargs = {} if key == "4" else {"seed": seed}
        res = run_criterion(key, **kwargs)
        if echo:
            echo(res.line())
            for c in res.failures:
                echo(f"      failed: {c.name}: {c.detail}")
        out.append(res)
    return out
