import json
import re

import numpy as np
import pytest

from dyntrack import cli
from dyntrack.harness import (
    ArmSpec,
    ConfigError,
    ExperimentConfig,
    aggregate_series,
    preset,
    replay,
    run_experiment,
    summaries_from_bundle,
)
from dyntrack.plotting import PlotSchemaError, PlotSpec, emit_plot, read_series_csv


def small_config(out, **kw):
    cfg = preset("theorem1-contrast", budget=6000, replicates=2, summary_every=1, summary_only=False, out=str(out))
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


# configuration -----------------------------------------------------------


def test_derived_quantities():
    cfg = preset("theorem1-contrast")
    assert cfg.r == 10 and cfg.theta_value == 500
    assert cfg.population_size(cfg.arms[1]) == 125
    assert cfg.population_size(cfg.arms[0]) is None
    report = cfg.pressure_report()
    assert report["pop-tournament"]["ok"] is True
    assert report["pop-tournament"]["corollary_threshold"] == pytest.approx(33)


def test_config_json_roundtrip(tmp_path):
    cfg = preset("selection-sweep", seed=5)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg


def test_function_block_is_accepted():
    cfg = ExperimentConfig.from_dict({"function": {"n": 50, "b": 0.2, "ell": 2, "theta": 30}})
    assert (cfg.n, cfg.r, cfg.ell, cfg.theta_value) == (50, 10, 2, 30)


def test_field_level_diagnostics():
    cfg = ExperimentConfig(n=100, b=0.7, budget=1, arms=[ArmSpec("p", "population", lam=10, selection="tournament:k=0")])
    with pytest.raises(ConfigError) as err:
        cfg.validate()
    fields = {f for f, _ in err.value.errors}
    assert {"b", "budget", "arms[0].selection"} <= fields
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict({"bogus": 1})
    assert err.value.errors == [("bogus", "unknown field")]


def test_pressure_enforcement(tmp_path):
    weak = [ArmSpec("weak", "population", lam="auto", selection="tournament:k=2")]
    cfg = small_config(tmp_path, arms=weak, pressure="enforce")
    with pytest.raises(ConfigError):
        run_experiment(cfg)
    cfg.pressure = "warn"
    run_experiment(cfg)


def test_unwritable_output_is_an_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        run_experiment(small_config(blocker / "sub"))


def test_output_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DYNTRACK_OUT", str(tmp_path / "env"))
    cfg = small_config(None, replicates=1)
    cfg.out = None
    run_experiment(cfg)
    assert (tmp_path / "env" / "manifest.json").exists()


# experiment bundle -------------------------------------------------------


def test_bundle_layout_and_manifest(tmp_path):
    cfg = small_config(tmp_path / "a", budget=6010)
    report = run_experiment(cfg)
    out = tmp_path / "a"
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(report["arms"]) == {"ea11", "pop-tournament"}
    assert manifest["config"]["seed"] == cfg.seed
    assert {r["arm"] for r in manifest["runs"]} == {"ea11", "pop-tournament"}
    # 6010 is not a multiple of 125: the partial generation is dropped and recorded
    drops = {r["arm"]: r["dropped_evaluations"] for r in manifest["runs"]}
    assert drops == {"ea11": 0, "pop-tournament": 6010 % 125}
    for rel in manifest["files"]:
        assert (out / rel).exists()
    streams = [(r["function_stream"]["stream_id"], r["algorithm_stream"]["path"]) for r in manifest["runs"]]
    assert len(set(map(str, streams))) == len(streams)


def test_rerun_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        run_experiment(small_config(tmp_path / name, replicates=1))
    for f in (tmp_path / "a").rglob("*.csv"):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_replay_from_manifest(tmp_path):
    run_experiment(small_config(tmp_path / "a"))
    replay(tmp_path / "a" / "manifest.json", tmp_path / "b")
    a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert a == b
    for rel in a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_parallel_replicates_match_serial(tmp_path):
    run_experiment(small_config(tmp_path / "s", replicates=3, workers=1))
    run_experiment(small_config(tmp_path / "p", replicates=3, workers=2))
    for f in (tmp_path / "s").rglob("*.csv"):
        assert f.read_bytes() == (tmp_path / "p" / f.relative_to(tmp_path / "s")).read_bytes()


def test_aggregate_recomputes_from_summaries(tmp_path):
    out = tmp_path / "a"
    run_experiment(small_config(out, replicates=3, summary_every=3))
    for arm in ("ea11", "pop-tournament"):
        series = aggregate_series(summaries_from_bundle(out, arm))
        rows = read_series_csv(out / "aggregate" / f"{arm}_series.csv")[arm]
        assert np.array_equal(rows["x"], series["x"])
        for k in ("y", "lo", "hi"):
            assert np.array_equal(rows[k], series[k])


def test_report_contents(tmp_path):
    report = run_experiment(small_config(tmp_path))
    ea = report["arms"]["ea11"]
    assert len(ea["replicates"]) == 2
    rep = ea["replicates"][0]
    assert {"tracking", "loss", "final_half_optimal_fraction"} <= set(rep)
    assert rep["tracking"]["window"] == 2
    pop = report["arms"]["pop-tournament"]["replicates"][0]
    assert pop["tracking"]["window"] == 125 and pop["tracking"]["start"] == 125
    assert pop["tracking"]["threshold"] == 0.25


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset("nope")


# plotting ----------------------------------------------------------------


def write_csv(path, text):
    path.write_text(text)
    return path


def test_empty_series_plot(tmp_path):
    src = write_csv(tmp_path / "e.csv", "series,x,y,lo,hi\n")
    svg = emit_plot(src, tmp_path / "e.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    assert "no data" in svg


def test_two_series_with_legend(tmp_path):
    rows = ["series,x,y,lo,hi"]
    for name in ("ea11", "population"):
        rows += [f"{name},{x},{0.1 * x % 1},{0.05 * x % 1},{0.15 * x % 1}" for x in range(10)]
    src = write_csv(tmp_path / "s.csv", "\n".join(rows) + "\n")
    svg = emit_plot(src, tmp_path / "s.svg", PlotSpec(title="contrast")).read_text()
    assert "ea11" in svg and "population" in svg and "legend" in svg
    assert "http://" not in svg.replace("http://www.w3.org", "").replace("http://purl.org", "").replace(
        "http://creativecommons.org", ""
    ).replace("https://matplotlib.org", "")


def tick_labels(svg):
    return set(re.findall(r"<text[^>]*>([^<]*)</text>", svg))


def test_fraction_plot_is_clamped(tmp_path):
    # x ticks stay in the hundreds, so small labels can only come from the y axis
    src = write_csv(tmp_path / "c.csv", "series,x,y\na,100,-3\na,200,5\n")
    clamped = tick_labels(emit_plot(src, tmp_path / "c.svg").read_text())
    free = tick_labels(emit_plot(src, tmp_path / "f.svg", PlotSpec(fraction=False)).read_text())
    assert {"0.0", "0.2", "0.8", "1.0"} <= clamped
    assert not {"4", "\u22122"} & clamped
    assert {"4", "\u22122"} <= free


@pytest.mark.parametrize(
    "text, row, column",
    [
        ("series,x\na,1\n", 1, "y"),
        ("series,x,y\na,1,0.5\na,oops,0.5\n", 3, "x"),
        ("series,x,y,lo,hi\na,1,0.5,0.4,\n", 2, "hi"),
        ("series,x,y\n,1,0.5\n", 2, "series"),
    ],
)
def test_schema_errors_name_row_and_column(tmp_path, text, row, column):
    src = write_csv(tmp_path / "bad.csv", text)
    with pytest.raises(PlotSchemaError) as err:
        emit_plot(src, tmp_path / "bad.svg")
    assert (err.value.row, err.value.column) == (row, column)
    assert f"row {row}" in str(err.value)


def test_svg_is_reproducible(tmp_path):
    src = write_csv(tmp_path / "s.csv", "series,x,y\na,0,0.2\na,1,0.4\n")
    a = emit_plot(src, tmp_path / "a.svg").read_text()
    b = emit_plot(src, tmp_path / "b.svg").read_text()
    assert a == b


# command line ------------------------------------------------------------


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_run_and_plot(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(small_config(None).to_dict()))
    code, out, _ = run_cli(capsys, "run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--replicates", "1", "--budget", "3000", "--seed", "3")
    assert code == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 3 and manifest["config"]["budget"] == 3000
    code, out, _ = run_cli(
        capsys, "plot", "--input", str(tmp_path / "o" / "aggregate" / "ea11_series.csv"), "--output", str(tmp_path / "p.svg")
    )
    assert code == 0 and (tmp_path / "p.svg").exists()


def test_cli_replay(tmp_path, capsys):
    run_experiment(small_config(tmp_path / "a", replicates=1))
    code, _, _ = run_cli(capsys, "run", "--replay", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b"))
    assert code == 0
    for f in (tmp_path / "a").rglob("*.csv"):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_cli_preset_with_overrides(tmp_path, capsys):
    code, _, _ = run_cli(
        capsys, "run", "--preset", "theorem1-contrast", "--set", "budget=2000", "--replicates", "1", "--out", str(tmp_path)
    )
    assert code == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["budget"] == 2000


def test_cli_validation_exit_code(tmp_path, capsys):
    code, _, err = run_cli(capsys, "run", "--set", "b=0.9", "--out", str(tmp_path))
    assert code == 1 and "b:" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run_cli(capsys, "stability", "--config", str(bad))
    assert code == 1 and "line 1" in err
    code, _, _ = run_cli(capsys, "beta", "--set", "unknown=1")
    assert code == 1


def test_cli_io_exit_code(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "run", "--config", str(tmp_path / "missing.json"))
    assert code == 2
    code, _, _ = run_cli(capsys, "plot", "--input", str(tmp_path / "missing.csv"), "--output", str(tmp_path / "x.svg"))
    assert code == 2


def test_cli_analysis_commands(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "ruin", "--set", "n=10", "--set", "d=2", "--budget", "2000")
    assert code == 0 and json.loads(out)["exact"] == pytest.approx(0.2)
    code, out, _ = run_cli(capsys, "beta", "--set", 'selection="tournament:k=2"', "--set", "gamma=0.5", "--budget", "1000")
    assert json.loads(out)["rows"][0]["closed_form"] == pytest.approx(0.75)
    code, out, _ = run_cli(capsys, "stability", "--budget", "5000", "--out", str(tmp_path))
    assert code == 0 and json.loads((tmp_path / "stability.json").read_text())["kappa"] == 250
    code, out, _ = run_cli(capsys, "drift", "--budget", "2000", "--set", "states=[0,2]")
    assert [s["state"] for s in json.loads(out)["states"]] == [0, 2]
    code, out, _ = run_cli(capsys, "occupancy", "--budget", "2000", "--replicates", "2", "--set", "burn_in=100")
    assert len(json.loads(out)["fractions"]) == 2


def test_cli_verify_subset(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "verify", "--only", "4", "--out", str(tmp_path))
    assert code == 0 and re.search(r"PASS\s+\[4\]", out)
    assert json.loads((tmp_path / "verify.json").read_text())["passed"] is True
    code, _, _ = run_cli(capsys, "verify", "--only", "42")
    assert code == 1


def test_cli_verify_failure_exit_code(monkeypatch, capsys):
    from dyntrack import verify

    def failing():
        res = verify.CriterionResult("4", "forced failure")
        res.add("always", False)
        return res

    monkeypatch.setitem(verify.CRITERIA, "4", failing)
    code, out, _ = run_cli(capsys, "verify", "--only", "4")
    assert code == 3 and "FAIL" in out
