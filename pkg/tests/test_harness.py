import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvedbm.harness import cli, report
from curvedbm.harness.config import ConfigError, ExperimentConfig, parse_curve

FAST_DRIFT = ["drift", "--T", "2", "--dt", "0.05", "--paths", "1000", "--seed", "3"]


def _read(path):
    with open(path) as fh:
        return fh.read()


configs = st.builds(
    ExperimentConfig,
    subcommand=st.sampled_from(["drift", "riccati", "ibp-check", "flow-fs"]),
    model=st.sampled_from(["h2", "h3", "euclidean"]),
    T=st.floats(0.5, 10),
    dt=st.floats(1e-3, 0.5),
    paths=st.integers(1, 10 ** 6),
    seed=st.integers(0, 2 ** 31),
    lam=st.floats(1e-6, 1e-1),
    params=st.dictionaries(st.sampled_from(["h", "route", "fiber"]),
                           st.one_of(st.integers(0, 99), st.floats(0.01, 9), st.just("plain")),
                           max_size=3),
)


@settings(max_examples=40)
@given(configs)
def test_config_round_trips_through_a_report(cfg):
    res = report.RunResult([{"a": 1.0}], {"b": 2}, True)
    for fmt in ("csv", "json"):
        text = report.render(cfg.echo(), res, fmt)
        path = f"/tmp/roundtrip.{fmt}"
        report.write(path, text)
        back = ExperimentConfig.from_report(path)
        assert back.echo() == cfg.echo()


def test_config_validation():
    for bad in (dict(dt=2.0, T=1.0), dict(paths=0), dict(model="h4"), dict(x0="a,b"),
                dict(workers=0), dict(format="xml")):
        with pytest.raises(ConfigError):
            ExperimentConfig("drift", **bad)
    with pytest.raises(ConfigError):
        ExperimentConfig("nope")
    with pytest.raises(ConfigError):
        parse_curve("bump:1,2", 2)
    with pytest.raises(ConfigError):
        parse_curve("zero-mean:0,0,1,0.2,0.5,1", 3)
    assert ExperimentConfig("drift", model="h3").start.tolist() == [0, 0, 1]


def test_toml_config_with_overrides(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('subcommand = "riccati"\nmodel = "h3"\nhorizon = 12.0\n[params]\ntolerance = 1e-8\n')
    cfg = cli.build_config("riccati", {"config": str(p), "seed": 5, "param": ("x=1",)})
    assert cfg.model == "h3" and cfg.horizon == 12.0 and cfg.seed == 5
    assert cfg.params == {"tolerance": 1e-8, "x": "1"}


def test_reports_identical_across_workers_and_runs(tmp_out):
    outs = []
    for w, name in ((1, "a"), (2, "b"), (1, "c")):
        out = os.path.join(tmp_out, f"{name}.csv")
        assert cli.entry(FAST_DRIFT + ["--workers", str(w), "--out", out]) == 0
        outs.append(_read(out))
    assert outs[0] == outs[1] == outs[2]
    timing = json.loads(_read(os.path.join(tmp_out, "b.csv.timing.json")))
    assert timing["workers"] == 2 and timing["runtime_s"] > 0


def test_rerun_reproduces_report(tmp_out):
    a = os.path.join(tmp_out, "a.json")
    b = os.path.join(tmp_out, "b.json")
    assert cli.entry(FAST_DRIFT + ["--format", "json", "--out", a]) == 0
    assert cli.entry(["rerun", a, "--format", "json", "--out", b]) == 0
    assert _read(a) == _read(b)
    assert json.loads(_read(a))["config"]["T"] == 2.0


def test_figure_written(tmp_out):
    out = os.path.join(tmp_out, "g.csv")
    fig = os.path.join(tmp_out, "g.png")
    code = cli.entry(["girsanov-check", "--paths", "500", "--out", out, "--figure", fig])
    assert code == 0
    with open(fig, "rb") as fh:
        assert fh.read(8) == b"\x89PNG\r\n\x1a\n"
    assert "# status=" in _read(out)


def test_exit_codes():
    assert cli.entry(["drift", "--param", "novalue"]) == cli.EXIT_USAGE
    assert cli.entry(["nope"]) == cli.EXIT_USAGE
    assert cli.entry(["entropy", "--model", "euclidean"]) == cli.EXIT_USAGE
    assert cli.entry(["riccati", "--param", "tolerance=1e-30", "--assert"]) == cli.EXIT_ACCEPT
    assert cli.entry(["riccati", "--param", "tolerance=1e-30"]) == cli.EXIT_OK


def test_numeric_failure_writes_error_record(tmp_out):
    out = os.path.join(tmp_out, "err.csv")
    # positive curvature inside the bump makes the stable Riccati solution blow up
    code = cli.entry(["riccati", "--perturbation", "bump:0,1,1.5,3", "--out", out])
    assert code == cli.EXIT_NUMERIC
    text = _read(out)
    assert "# status=ERROR" in text and "RiccatiBlowUp" in text


def test_ibp_check_constant_curve_passes(tmp_out):
    out = os.path.join(tmp_out, "ibp.csv")
    code = cli.entry(["ibp-check", "--perturbation", "none", "--paths", "50", "--T", "0.5",
                      "--dt", "0.05", "--out", out, "--assert"])
    assert code == 0
    assert "# status=PASS" in _read(out)


def test_entropy_derivative_scaling_cli(tmp_out):
    out = os.path.join(tmp_out, "ed.json")
    code = cli.entry(["entropy-derivative", "--perturbation", "scaling:0.5", "--param", "radius=1",
                      "--param", "fiber=8", "--format", "json", "--out", out, "--assert"])
    assert code == 0
    doc = json.loads(_read(out))
    assert doc["status"] == "PASS"
    assert doc["summary"]["oracle"] == pytest.approx(-0.5)


def test_report_formatting_is_exact():
    res = report.RunResult([{"x": np.float64(0.1), "v": np.array([1.0, np.inf])}],
                           {"flag": np.bool_(True)}, None)
    text = report.render_csv({"seed": 1}, res)
    assert "0.1," in text and "1.0 inf" in text and "# status=INFO" in text
    doc = json.loads(report.render_json({"seed": 1}, res))
    assert doc["rows"][0]["v"] == [1.0, "inf"] and doc["summary"]["flag"] is True
