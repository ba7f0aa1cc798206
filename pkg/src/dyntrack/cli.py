"""``dyntrack`` command line.

Parameter precedence, lowest to highest: built-in defaults, ``--config`` JSON,
``--set key=value`` pairs, dedicated flags (``--seed``, ``--budget``, ...).
``--out`` falls back to ``$DYNTRACK_OUT``.

Exit codes: 0 success, 1 invalid input, 2 I/O error, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .harness import ENV_OUT, ConfigError, ExperimentConfig, preset, replay, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("dyntrack")


# --------------------------------------------------------------------------
# parameter plumbing


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("config", f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")])
    if not isinstance(data, dict):
        raise ConfigError([("config", "top level must be a JSON object")])
    return data


def _parse_sets(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ConfigError([("--set", f"expected key=value, got {pair!r}")])
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _params(args, defaults: dict, budget_key: str | None = None, replicates_key: str | None = None) -> dict:
    p = dict(defaults)
    cfg = _load_config(args.config)
    cfg.update(_parse_sets(args.set))
    unknown = sorted(set(cfg) - set(defaults))
    if unknown:
        raise ConfigError([(k, "unknown parameter") for k in unknown])
    p.update(cfg)
    if args.seed is not None:
        p["seed"] = args.seed
    if budget_key and args.budget is not None:
        p[budget_key] = args.budget
    if replicates_key and args.replicates is not None:
        p[replicates_key] = args.replicates
    return p


def _out_dir(args) -> Path | None:
    out = args.out or os.environ.get(ENV_OUT)
    return Path(out) if out else None


def _emit(args, name: str, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    print(text)
    out = _out_dir(args)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(text + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    from .stats import RngStream

    return RngStream(int(seed), stream).generator()


# --------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    if args.replay:
        out = _out_dir(args)
        if out is None:
            raise ConfigError([("--out", f"replay needs --out or ${ENV_OUT}")])
        report = replay(args.replay, out)
        summary = {name: arm["aggregate"] for name, arm in report["arms"].items()}
        print(json.dumps({"out": str(out), "aggregate": summary}, indent=2, default=_json_default))
        return EXIT_OK
    if args.preset:
        cfg = preset(args.preset)
        if args.config:
            raise ConfigError([("--config", "use either --preset or --config")])
        for key, val in _parse_sets(args.set).items():
            if key not in ExperimentConfig.__dataclass_fields__:
                raise ConfigError([(key, "unknown field")])
            setattr(cfg, key, val)
    else:
        data = _load_config(args.config)
        data.update(_parse_sets(args.set))
        cfg = ExperimentConfig.from_dict(data)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.budget is not None:
        cfg.budget = args.budget
    if args.replicates is not None:
        cfg.replicates = args.replicates
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out:
        cfg.out = args.out
    report = run_experiment(cfg)
    summary = {name: arm["aggregate"] for name, arm in report["arms"].items()}
    print(json.dumps({"out": str(cfg.out or os.environ.get(ENV_OUT)), "aggregate": summary}, indent=2, default=_json_default))
    return EXIT_OK


def cmd_stability(args) -> int:
    from .dynamics import MhbParams, multi_change_bound, stability_bound, stability_estimate
    from .operators import MutationOp

    p = _params(
        args,
        {"n": 100, "b": 0.3, "ell": 1, "theta": 500.0, "chi": 1.0, "d": 1, "eps": None, "trials": 10**5, "seed": 0},
        budget_key="trials",
    )
    params = MhbParams.from_fraction(int(p["n"]), float(p["b"]), int(p["ell"]), float(p["theta"]))
    kappa, rho = stability_bound(params, chi=float(p["chi"]), eps=p["eps"], d=p["d"])
    est = stability_estimate(params, MutationOp.bitwise(float(p["chi"])), int(kappa), int(p["trials"]), _rng(p["seed"]))
    _emit(
        args,
        "stability",
        {
            "params": p,
            "kappa": kappa,
            "rho": rho,
            "multi_change_bound": multi_change_bound(kappa, p["d"]),
            "estimate": est.to_dict(),
            "rho_hat_ok": est.rho_hat >= rho - 3 * est.sigma,
        },
    )
    return EXIT_OK


def cmd_beta(args) -> int:
    from .operators import SelectionSpec, beta_closed_form, beta_empirical

    p = _params(
        args,
        {
            "selection": ["tournament:k=2", "mu-comma-lambda:mu=10", "linear-ranking:eta=2", "exponential-ranking:eta=2"],
            "lam": 100,
            "gamma": [0.1, 0.3, 0.5, 1.0],
            "samples": 10**5,
            "seed": 0,
        },
        budget_key="samples",
    )
    sels = [p["selection"]] if isinstance(p["selection"], str) else p["selection"]
    gammas = [p["gamma"]] if isinstance(p["gamma"], (int, float)) else p["gamma"]
    rng = _rng(p["seed"])
    rows = []
    for text in sels:
        spec = SelectionSpec.parse(text)
        for g in gammas:
            exact = beta_closed_form(spec, float(g), int(p["lam"]))
            est, half = beta_empirical(spec, int(p["lam"]), float(g), int(p["samples"]), rng)
            rows.append({"selection": str(spec), "gamma": g, "closed_form": exact, "empirical": est, "three_sigma": half})
    _emit(args, "beta", {"params": p, "rows": rows})
    return EXIT_OK


def cmd_ruin(args) -> int:
    from .analysis import ruin_probability_closed, ruin_probability_exact, simulate_ruin_walk
    from .operators import MutationOp

    p = _params(args, {"r": 1, "d": 16, "n": 64, "x": None, "walks": 10**5, "chi": 1.0, "seed": 0}, budget_key="walks")
    r, d, n = int(p["r"]), int(p["d"]), int(p["n"])
    x = int(p["x"]) if p["x"] is not None else r + 1
    rng = _rng(p["seed"])
    out = {"params": {**p, "x": x}, "exact": ruin_probability_exact(r, d, n, x)}
    try:
        out["closed_form"] = ruin_probability_closed(r, d, n, x)
    except ValueError as exc:
        out["closed_form"] = None
        out["closed_form_note"] = str(exc)
    est, sig = simulate_ruin_walk(r, d, n, x, int(p["walks"]), rng)
    out["single_bit_walk"] = {"estimate": est, "sigma": sig}
    est, sig = simulate_ruin_walk(r, d, n, x, int(p["walks"]), rng, op=MutationOp.bitwise(float(p["chi"])))
    out["bitwise_walk"] = {"estimate": est, "sigma": sig}
    _emit(args, "ruin", out)
    return EXIT_OK


def cmd_drift(args) -> int:
    from .analysis import drift_estimate, dynamic_drift
    from .dynamics import MhbParams
    from .operators import MutationOp

    p = _params(
        args,
        {"n": 200, "b": 0.05, "ell": 1, "chi": 1.0, "eps": 0.0, "states": [0, 1, 2, 3, 4, 5], "samples": 10**5, "seed": 0},
        budget_key="samples",
    )
    params = MhbParams.from_fraction(int(p["n"]), float(p["b"]), int(p["ell"]), 1e15)
    op = MutationOp.bitwise(float(p["chi"]))
    rng = _rng(p["seed"])
    rows = []
    for i in p["states"]:
        est = drift_estimate(params, op, int(i), int(p["samples"]), rng, eps=float(p["eps"]))
        row = est.to_dict()
        row["within_bound"] = est.mean >= est.bound - 3 * est.sigma
        rows.append(row)
    _emit(
        args,
        "drift",
        {"params": p, "states": rows, "target_move_drift_at_border": dynamic_drift(params.n, params.r, params.ell)},
    )
    return EXIT_OK


def cmd_occupancy(args) -> int:
    from .analysis import drift_constants, occupancy_bound_at_time
    from .verify import border_occupancy

    p = _params(
        args,
        {"n": 200, "b": 0.05, "steps": 10**6, "burn_in": 10**4, "seeds": 10, "seed": 0},
        budget_key="steps",
        replicates_key="seeds",
    )
    delta, eta = drift_constants(float(p["b"]), 1.0)
    bound = occupancy_bound_at_time(delta, eta)
    fracs = [
        border_occupancy(int(p["seed"]) * 1000 + s, int(p["n"]), float(p["b"]), int(p["steps"]), int(p["burn_in"]))
        for s in range(int(p["seeds"]))
    ]
    _emit(
        args,
        "occupancy",
        {"params": p, "delta": delta, "eta": eta, "bound": bound, "fractions": fracs, "min_fraction": min(fracs)},
    )
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import PlotSpec, emit_plot

    p = _params(
        args,
        {"input": None, "output": None, "title": "", "xlabel": "evaluations", "ylabel": "fraction in ball", "fraction": True, "hline": None, "seed": None},
    )
    src = args.input or p["input"]
    dst = args.output or p["output"]
    if not src:
        raise ConfigError([("input", "series CSV required")])
    if not dst:
        out = _out_dir(args)
        if out is None:
            raise ConfigError([("output", "give --output, --out or $" + ENV_OUT)])
        dst = out / (Path(src).stem + ".svg")
    spec = PlotSpec(p["title"], p["xlabel"], p["ylabel"], bool(p["fraction"]) and not args.no_clamp, p["hline"])
    if not Path(src).is_file():
        raise OSError(f"cannot read {src}")
    path = emit_plot(src, dst, spec)
    print(path)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import CRITERIA, run_all

    keys = args.only.split(",") if args.only else list(CRITERIA)
    bad = [k for k in keys if k not in CRITERIA]
    if bad:
        raise ConfigError([("--only", f"unknown criteria {bad}; choose from {list(CRITERIA)}")])
    results = run_all(keys, seed=args.seed or 0, echo=print)
    ok = all(r.passed for r in results)
    out = _out_dir(args)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        payload = {"passed": ok, "criteria": [r.to_dict() for r in results]}
        (out / "verify.json").write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")
    print("all criteria passed" if ok else f"{sum(not r.passed for r in results)} criteria failed")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "run": (cmd_run, "run a replicated experiment and write its output bundle"),
    "stability": (cmd_stability, "recovery-probability bound and Monte Carlo estimate"),
    "beta": (cmd_beta, "cumulative selection probability, closed form and empirical"),
    "ruin": (cmd_ruin, "re-entry probability: closed form, exact, simulated"),
    "drift": (cmd_drift, "one-step drift of the distance to the ball border"),
    "occupancy": (cmd_occupancy, "border occupancy of the (1+1) EA in a frozen ball"),
    "plot": (cmd_plot, "render a series CSV as SVG"),
    "verify": (cmd_verify, "run the acceptance suite"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyntrack", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--config", help="JSON parameter file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one parameter (JSON value)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=f"output directory (default ${ENV_OUT})")
        sp.add_argument("--replicates", type=int)
        sp.add_argument("--budget", type=int, help="evaluations for run; sample count for Monte Carlo commands")
        if name == "run":
            sp.add_argument("--preset", help="named configuration, e.g. theorem1-contrast")
            sp.add_argument("--workers", type=int, help="parallel replicate workers (default: all cores)")
            sp.add_argument("--replay", metavar="MANIFEST", help="rerun the experiment recorded in a manifest")
        if name == "plot":
            sp.add_argument("--input", help="series CSV (series,x,y[,lo,hi])")
            sp.add_argument("--output", help="SVG path")
            sp.add_argument("--no-clamp", action="store_true", help="do not clamp the y axis to [0, 1]")
        if name == "verify":
            sp.add_argument("--only", help="comma-separated criterion keys, e.g. 1,2,8a")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    func = COMMANDS[args.command][0]
    try:
        return func(args)
    except ConfigError as exc:
        for fld, msg in exc.errors:
            print(f"error: {fld}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
