"""Replicated experiments: configuration, parallel runs, output bundle, replay.

Output layout under ``out``::

    manifest.json                     full config, seeds, stream ids, files + sha256
    report.json                       per-arm, per-replicate metrics and aggregates
    runs/<arm>/rep<j>_summary.csv     per-iteration/generation summary rows
    runs/<arm>/rep<j>_trace.csv       per-query trace (unless summary_only)
    runs/<arm>/rep<j>_meta.json       run metadata sidecar
    aggregate/<arm>_series.csv        mean in-OPT fraction with CI (plot schema)
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import Trace, read_summary_csv, run_population, run_single, initial_population, write_summary_csv
from .analysis import loss_events, tracking_score
from .dynamics import MhbInstance, MhbParams, stability_bound
from .operators import MutationOp, SelectionSpec, corollary_threshold, pressure_satisfied
from .stats import RngStream, mean_ci

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ArmSpec",
    "ExperimentConfig",
    "run_experiment",
    "run_arm_replicate",
    "replay",
    "preset",
    "PRESETS",
    "aggregate_series",
]

ENV_OUT = "DYNTRACK_OUT"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(field, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.errors))


@dataclass
class ArmSpec:
    name: str
    algorithm: str = "single"  # "single" | "population"
    mutation: str = "bitwise:chi=1.0"
    lam: int | str | None = None  # int, or "auto" for floor(c n / (2 (1 + d)))
    selection: str | None = None
    init: str = "center"

    def mutation_op(self) -> MutationOp:
        return MutationOp.parse(self.mutation)

    def selection_spec(self) -> SelectionSpec | None:
        return SelectionSpec.parse(self.selection) if self.selection else None


@dataclass
class ExperimentConfig:
    n: int = 100
    b: float = 0.1
    ell: int = 1
    theta: float | None = None  # defaults to c * n
    c: float = 5.0
    d: float = 1.0
    arms: list[ArmSpec] = field(default_factory=lambda: [ArmSpec("ea11")])
    budget: int = 10**5
    replicates: int = 1
    seed: int = 0
    out: str | None = None
    window: int | None = None  # defaults to the generation size
    start: int | None = None  # defaults to the window
    threshold: float = 0.25
    gamma0: float = 0.5
    pressure_delta: float = 0.1
    pressure: str = "warn"  # "warn" | "enforce" | "off"
    summary_only: bool = False
    summary_every: int = 1
    workers: int | None = None

    # derived -------------------------------------------------------------

    @property
    def r(self) -> int:
        return int(math.floor(self.b * self.n + 1e-9))

    @property
    def theta_value(self) -> float:
        return float(self.theta) if self.theta is not None else self.c * self.n

    def params(self) -> MhbParams:
        return MhbParams(self.n, self.r, self.ell, self.theta_value)

    def population_size(self, arm: ArmSpec) -> int | None:
        if arm.algorithm != "population":
            return None
        if arm.lam in (None, "auto"):
            return int(math.floor(self.c * self.n / (2 * (1 + self.d)) + 1e-9))
        return int(arm.lam)

    # serialisation ---------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        data = dict(data)
        fn = data.pop("function", None)
        if fn:
            data.update(fn)
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([(k, "unknown field") for k in unknown])
        arms = data.pop("arms", None)
        cfg = cls(**data)
        if arms is not None:
            if not isinstance(arms, list) or not arms:
                raise ConfigError([("arms", "must be a nonempty list")])
            parsed = []
            for k, a in enumerate(arms):
                try:
                    parsed.append(ArmSpec(**a))
                except TypeError as exc:
                    raise ConfigError([(f"arms[{k}]", str(exc))]) from None
            cfg.arms = parsed
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def validate(self) -> None:
        errs = []

        def check(cond, name, msg):
            if not cond:
                errs.append((name, msg))

        check(isinstance(self.n, int) and self.n >= 1, "n", "must be a positive integer")
        check(0 <= self.b < 0.5, "b", "must be in [0, 1/2)")
        check(isinstance(self.ell, int) and self.ell >= 1, "ell", "must be a positive integer")
        check(self.theta is None or self.theta > 0, "theta", "must be positive")
        check(self.c > 0, "c", "must be positive")
        check(self.d > 0, "d", "must be positive")
        check(isinstance(self.budget, int) and self.budget >= 2, "budget", "must be an integer >= 2")
        check(isinstance(self.replicates, int) and self.replicates >= 1, "replicates", "must be a positive integer")
        check(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        check(0 <= self.threshold <= 1, "threshold", "must be in [0, 1]")
        check(0 < self.gamma0 <= 1, "gamma0", "must be in (0, 1]")
        check(self.pressure in ("warn", "enforce", "off"), "pressure", "must be warn, enforce or off")
        check(isinstance(self.summary_every, int) and self.summary_every >= 1, "summary_every", "must be >= 1")
        check(self.workers is None or self.workers >= 1, "workers", "must be positive")
        if not errs:
            try:
                self.params()
            except ValueError as exc:
                errs.append(("function", str(exc)))
        names = set()
        for k, arm in enumerate(self.arms):
            tag = f"arms[{k}]"
            check(arm.name and arm.name not in names, f"{tag}.name", "must be nonempty and unique")
            names.add(arm.name)
            check(arm.algorithm in ("single", "population"), f"{tag}.algorithm", "must be single or population")
            try:
                op = arm.mutation_op()
                if op.kind == "bitwise":
                    op.rate(self.n)
            except ValueError as exc:
                errs.append((f"{tag}.mutation", str(exc)))
            if arm.algorithm == "population":
                try:
                    lam = self.population_size(arm)
                    check(lam >= 1, f"{tag}.lam", "population size must be positive")
                    check(self.budget >= lam, "budget", f"smaller than one generation of arm {arm.name}")
                except (TypeError, ValueError):
                    errs.append((f"{tag}.lam", "must be an integer or 'auto'"))
                    continue
                try:
                    sel = arm.selection_spec()
                    if sel is None:
                        errs.append((f"{tag}.selection", "required for population arms"))
                    else:
                        sel.check(lam)
                except ValueError as exc:
                    errs.append((f"{tag}.selection", str(exc)))
                check(arm.init in ("center", "uniform-ball"), f"{tag}.init", "must be center or uniform-ball")
        if errs:
            raise ConfigError(errs)

    def pressure_report(self) -> dict[str, dict]:
        """Selection-pressure check for each population arm against the stability bound."""
        out = {}
        for arm in self.arms:
            if arm.algorithm != "population":
                continue
            op = arm.mutation_op()
            chi = op.chi if op.kind == "bitwise" else 1.0
            lam = self.population_size(arm)
            sel = arm.selection_spec()
            try:
                _, rho = stability_bound(self.params(), chi=chi, d=self.d)
            except ValueError as exc:
                out[arm.name] = {"ok": None, "reason": str(exc)}
                continue
            entry = {
                "rho": rho,
                "required": (1 + self.pressure_delta) / rho if rho > 0 else math.inf,
                "ok": rho > 0 and pressure_satisfied(sel, rho, self.pressure_delta, lam=lam),
            }
            if self.b > 0:
                entry["corollary_threshold"] = corollary_threshold(self.r / self.n, self.ell, self.pressure_delta)
            out[arm.name] = entry
        return out


# --------------------------------------------------------------------------
# one replicate


def _streams(cfg: ExperimentConfig, rep: int, arm_index: int) -> tuple[RngStream, RngStream]:
    base = RngStream(cfg.seed, rep)
    return base.child(0), base.child(1 + arm_index)


def run_arm_replicate(cfg: ExperimentConfig, arm_index: int, rep: int, keep_points: bool = False):
    """Run one arm for one replicate; returns ``(trace, metrics)``."""
    arm = cfg.arms[arm_index]
    fstream, astream = _streams(cfg, rep, arm_index)
    F = MhbInstance(cfg.params(), fstream.generator())
    rng = astream.generator()
    op = arm.mutation_op()
    if arm.algorithm == "single":
        trace = run_single(F, op, cfg.budget, rng, keep_points=keep_points)
    else:
        lam = cfg.population_size(arm)
        P0 = initial_population(cfg.n, lam, rng, arm.init, cfg.r)
        trace = run_population(F, lam, arm.selection_spec(), op, cfg.budget, rng, P0=P0, keep_points=keep_points)
    trace.meta.update(
        {
            "arm": arm.name,
            "replicate": rep,
            "function": cfg.params().to_dict(),
            "function_stream": fstream.to_dict(),
            "algorithm_stream": astream.to_dict(),
        }
    )
    return trace, _metrics(cfg, trace, F)


def _metrics(cfg: ExperimentConfig, trace: Trace, F: MhbInstance) -> dict:
    window = cfg.window or trace.gen_size
    start = cfg.start if cfg.start is not None else window
    T = len(trace)
    m = {
        "evaluations": T,
        "dropped_evaluations": trace.meta["dropped_evaluations"],
        "optimal_fraction": float(trace.was_optimal.mean()),
        "final_half_optimal_fraction": float(trace.was_optimal[T // 2 :].mean()),
        "min_in_opt_fraction_after_first": float(np.min(trace.summary["in_opt_fraction"][1:]))
        if len(trace.summary["in_opt_fraction"]) > 1
        else float("nan"),
        "loss": loss_events(trace, F).to_dict(cfg.gamma0),
    }
    if T >= start + window:
        m["tracking"] = tracking_score(trace, window, start, cfg.threshold).to_dict()
    return m


def _worker(args):
    cfg_dict, arm_index, rep = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    trace, metrics = run_arm_replicate(cfg, arm_index, rep, keep_points=not cfg.summary_only)
    return arm_index, rep, trace, metrics


# --------------------------------------------------------------------------
# whole experiment


def _thin(summary: dict, every: int) -> dict:
    return {k: np.asarray(v)[::every] for k, v in summary.items()}


def aggregate_series(summaries: list[dict], confidence: float = 0.95) -> dict[str, np.ndarray]:
    """Mean in-OPT fraction per summary row across replicates, with a normal CI."""
    fr = np.vstack([np.asarray(s["in_opt_fraction"], dtype=float) for s in summaries])
    x = np.asarray(summaries[0]["clock"])
    mean = fr.mean(axis=0)
    if fr.shape[0] >= 2:
        half = np.array([mean_ci(fr[:, j], confidence)[1] for j in range(fr.shape[1])])
    else:
        half = np.zeros_like(mean)
    return {"x": x, "y": mean, "lo": mean - half, "hi": mean + half}


def _write_series(path: Path, name: str, series: dict) -> None:
    with path.open("w") as fh:
        fh.write("series,x,y,lo,hi\n")
        for x, y, lo, hi in zip(series["x"], series["y"], series["lo"], series["hi"]):
            fh.write(f"{name},{int(x)},{float(y):.17g},{float(lo):.17g},{float(hi):.17g}\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def resolve_out(cfg: ExperimentConfig) -> Path:
    out = cfg.out or os.environ.get(ENV_OUT)
    if not out:
        raise ConfigError([("out", f"no output directory (set --out or ${ENV_OUT})")])
    return Path(out)


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every arm for ``cfg.replicates`` replicates and write the output bundle.

    Returns the report dictionary (also written to ``report.json``).
    """
    cfg.validate()
    pressure = cfg.pressure_report()
    for name, entry in pressure.items():
        if entry.get("ok") is False:
            msg = f"arm {name}: selection pressure below (1+delta)/rho = {entry['required']:.4g}"
            if cfg.pressure == "enforce":
                raise ConfigError([(f"arms.{name}.selection", msg)])
            if cfg.pressure == "warn":
                log.warning(msg)
    out = resolve_out(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "runs").mkdir(exist_ok=True)
        (out / "aggregate").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    jobs = [(cfg.to_dict(), a, j) for a in range(len(cfg.arms)) for j in range(cfg.replicates)]
    workers = cfg.workers or os.cpu_count() or 1
    workers = min(workers, len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, jobs))
    else:
        results = [_worker(j) for j in jobs]

    files: list[str] = []
    runs = []
    report = {"arms": {}, "pressure": pressure}
    for a, arm in enumerate(cfg.arms):
        arm_dir = out / "runs" / arm.name
        arm_dir.mkdir(parents=True, exist_ok=True)
        arm_results = sorted((r for r in results if r[0] == a), key=lambda r: r[1])
        summaries = []
        per_rep = []
        for _, rep, trace, metrics in arm_results:
            thin = _thin(trace.summary, cfg.summary_every)
            summaries.append(thin)
            spath = arm_dir / f"rep{rep}_summary.csv"
            write_summary_csv(spath, thin)
            mpath = arm_dir / f"rep{rep}_meta.json"
            trace.write_meta(mpath)
            files += [str(spath.relative_to(out)), str(mpath.relative_to(out))]
            if not cfg.summary_only:
                tpath = arm_dir / f"rep{rep}_trace.csv"
                trace.write_csv(tpath)
                files.append(str(tpath.relative_to(out)))
            per_rep.append(metrics)
            runs.append(
                {
                    "arm": arm.name,
                    "replicate": rep,
                    "function_stream": trace.meta["function_stream"],
                    "algorithm_stream": trace.meta["algorithm_stream"],
                    "evaluations": trace.meta["evaluations"],
                    "dropped_evaluations": trace.meta["dropped_evaluations"],
                }
            )
        series = aggregate_series(summaries)
        agg_path = out / "aggregate" / f"{arm.name}_series.csv"
        _write_series(agg_path, arm.name, series)
        files.append(str(agg_path.relative_to(out)))
        report["arms"][arm.name] = {
            "algorithm": arm.algorithm,
            "lambda": cfg.population_size(arm),
            "selection": arm.selection,
            "mutation": arm.mutation,
            "replicates": per_rep,
            "aggregate": _aggregate_metrics(per_rep),
        }

    rpath = out / "report.json"
    rpath.write_text(json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n")
    files.append("report.json")
    manifest = {
        "package": "dyntrack",
        "version": __version__,
        # the output location is not part of the experiment, so replays match byte for byte
        "config": {**cfg.to_dict(), "out": None, "workers": None},
        "derived": {
            "r": cfg.r,
            "theta": cfg.theta_value,
            "lambda": {arm.name: cfg.population_size(arm) for arm in cfg.arms},
        },
        "runs": runs,
        "files": {f: _sha256(out / f) for f in sorted(files)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return report


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _aggregate_metrics(per_rep: list[dict]) -> dict:
    def collect(key):
        return [m[key] for m in per_rep]

    agg = {}
    for key in ("optimal_fraction", "final_half_optimal_fraction", "min_in_opt_fraction_after_first"):
        vals = np.asarray(collect(key), dtype=float)
        agg[key] = {"mean": float(vals.mean()), "min": float(vals.min()), "max": float(vals.max())}
        if vals.size >= 2:
            agg[key]["ci95"] = mean_ci(vals)[1]
    agg["replicates_with_unrecovered_loss"] = sum(1 for m in per_rep if m["loss"]["unrecovered"] > 0)
    agg["replicates_with_any_loss"] = sum(1 for m in per_rep if m["loss"]["n_episodes"] > 0)
    tracked = [m["tracking"]["tracks"] for m in per_rep if "tracking" in m]
    if tracked:
        agg["replicates_tracking"] = int(sum(bool(t) for t in tracked))
    return agg


def replay(manifest_path, out) -> dict:
    """Re-run the experiment recorded in a manifest into ``out``."""
    manifest = json.loads(Path(manifest_path).read_text())
    cfg = ExperimentConfig.from_dict(manifest["config"])
    cfg.out = str(out)
    return run_experiment(cfg)


def summaries_from_bundle(out, arm: str) -> list[dict]:
    paths = sorted(Path(out, "runs", arm).glob("rep*_summary.csv"), key=lambda p: int(p.name[3:].split("_")[0]))
    return [read_summary_csv(p) for p in paths]


# --------------------------------------------------------------------------
# presets


def _contrast(**overrides) -> ExperimentConfig:
    cfg = ExperimentConfig(
        n=100,
        b=0.1,
        ell=1,
        c=5.0,
        d=1.0,
        budget=10**6,
        replicates=30,
        arms=[
            ArmSpec("ea11", "single", "bitwise:chi=1.0"),
            ArmSpec("pop-tournament", "population", "bitwise:chi=1.0", "auto", "tournament:k=33"),
        ],
        summary_only=True,
        summary_every=50,
    )
    return replace(cfg, **overrides)


def _selection_sweep(**overrides) -> ExperimentConfig:
    cfg = _contrast()
    cfg.arms = [
        ArmSpec("pop-tournament", "population", "bitwise:chi=1.0", "auto", "tournament:k=33"),
        ArmSpec("pop-comma", "population", "bitwise:chi=1.0", "auto", "mu-comma-lambda:mu=3"),
        ArmSpec("pop-exp-ranking", "population", "bitwise:chi=1.0", "auto", "exponential-ranking:eta=33"),
    ]
    cfg.summary_every = 1
    return replace(cfg, **overrides)


PRESETS = {
    "theorem1-contrast": _contrast,
    "selection-sweep": _selection_sweep,
}


def preset(name: str, **overrides) -> ExperimentConfig:
    try:
        return PRESETS[name](**overrides)
    except KeyError:
        raise ConfigError([("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")]) from None
