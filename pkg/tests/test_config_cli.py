import json
import logging

import pytest

from habitfbp import cli
from habitfbp import config as cfgmod


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def test_defaults_are_the_base_case():
    cfg = cfgmod.normalize({})
    assert cfg["market"] == cfgmod.DEFAULT_MARKET
    assert cfg["utility"] == cfgmod.DEFAULT_UTILITY
    assert cfg["solver"]["y_min_factor"] == pytest.approx(1e-8)


@pytest.mark.parametrize(
    "raw, path",
    [
        ({"market": {"r": 0.02, "mu": 0.1, "rho": 1.0, "delta": 0.3}}, "market.sigma"),
        ({"market": {**cfgmod.DEFAULT_MARKET, "sigma": -1}}, "market.sigma"),
        ({"market": {**cfgmod.DEFAULT_MARKET, "sgima": 0.2}}, ""),
        ({"utility": {"family": "power", "params": {"alpha": 0.75, "p": 0.2, "q": 0.5}}}, "utility.params.kappa"),
        ({"utility": {"family": "power", "params": {**cfgmod.DEFAULT_UTILITY["params"], "beta": 1}}}, "utility.params.beta"),
        ({"utility": {"family": "cubic", "params": {}}}, "utility.family"),
        ({"solver": {"y_min_factor": 2}}, "solver.y_min_factor"),
        ({"simulate": {"seed": -1}}, "simulate.seed"),
    ],
)
def test_schema_errors_carry_the_field_path(raw, path):
    with pytest.raises(cfgmod.ConfigError) as ei:
        cfgmod.normalize(raw)
    assert ei.value.path.startswith(path)


def test_semantic_errors():
    bad = {"utility": {"family": "exponential", "params": {"alpha": 0.75, "p": 1.0, "q": 1.5, "kappa": 10.0}}}
    with pytest.raises(cfgmod.ConfigError, match="utility.params"):
        cfgmod.normalize(bad)


def test_with_param():
    cfg = cfgmod.normalize({})
    assert cfgmod.with_param(cfg, "mu", 0.12)["market"]["mu"] == 0.12
    assert cfgmod.with_param(cfg, "p", 0.3)["utility"]["params"]["p"] == 0.3
    assert cfg["utility"]["params"]["p"] == 0.2
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.with_param(cfg, "sigma", 0.3)


def test_content_hash_is_stable():
    a = cfgmod.content_hash("solve", {"b": 1, "a": 2}, None)
    assert a == cfgmod.content_hash("solve", {"a": 2, "b": 1}, None)
    assert a != cfgmod.content_hash("solve", {"a": 2, "b": 1.5}, None)
    assert len(a) == 12


def test_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "o")
    bad = _write(tmp_path, {"market": {"r": 0.02}})
    assert cli.main(["solve", "--config", bad, "--out", out]) == 2
    assert "market." in capsys.readouterr().err
    assert cli.main(["limits", "nope", "--out", out]) == 2
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["solve", "--jobs", "0", "--out", out]) == 2
    assert cli.main(["simulate", "--seed", str(2**64), "--out", out]) == 2
    degenerate = _write(tmp_path, {"solver": {"y_min_factor": 0.5}}, "deg.json")
    assert cli.main(["solve", "--config", degenerate, "--out", out]) == 3
    assert "solver error" in capsys.readouterr().err


def test_solve_artifacts(tmp_path, capsys):
    assert cli.main(["solve", "--out", str(tmp_path)]) == 0
    msg = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    run = tmp_path / msg["out"].split("/")[-1]
    assert {p.name for p in run.iterdir()} == {"header.json", "dual.csv", "policy.csv", "value.svg", "weight.svg", "consumption.svg"}
    head = json.loads((run / "header.json").read_text())
    assert head["x0"] == pytest.approx(1.3131336940963114, rel=1e-9)
    assert head["gamma"] == pytest.approx(0.25268164173953755573, rel=1e-12)
    assert (run / "dual.csv").read_bytes().startswith(b"y,phi,psi,u,du,ddu\r\n")

    # a one-value sweep reproduces the solve
    assert cli.main(["sweep", "--param", "p", "--values", "0.2", "--out", str(tmp_path)]) == 0
    sw = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert sw["x0"] == [head["x0"]]


def test_validate_exit_status(tmp_path, capsys):
    quick = {"validate": {"n_residual": 50, "fd_per_decade": 100, "scan": False}}
    assert cli.main(["validate", "--config", _write(tmp_path, quick), "--out", str(tmp_path)]) == 0
    loose = {**quick, "solver": {"y_min_factor": 1e-2}}
    assert cli.main(["validate", "--config", _write(tmp_path, loose, "l.json"), "--out", str(tmp_path)]) == 1
    res = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert not res["passed"] and res["failed"]


def _tree(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_simulate_is_reproducible_across_jobs(tmp_path):
    small = {"simulate": {"n_paths": 40, "T": 2.0, "dt": 0.01, "record_every": 10, "transversality": False}}
    path = _write(tmp_path, small)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--config", path, "--out", str(a), "--seed", "11", "--jobs", "1"]) == 0
    assert cli.main(["simulate", "--config", path, "--out", str(b), "--seed", "11", "--jobs", "3"]) == 0
    assert _tree(a) == _tree(b)
    assert cli.main(["simulate", "--config", path, "--out", str(a), "--seed", "12"]) == 0
    assert len(list(a.iterdir())) == 2


@pytest.mark.parametrize("value, level", [("error", logging.ERROR), ("debug", logging.DEBUG), ("bogus", logging.WARNING)])
def test_log_env(monkeypatch, value, level):
    monkeypatch.setenv("HABITFBP_LOG", value)
    root = logging.getLogger()
    old = root.handlers[:]
    root.handlers.clear()
    try:
        cli._setup_logging()
        assert root.level == level
    finally:
        root.handlers[:] = old


def test_parser_flags():
    args = cli.build_parser().parse_args(["limits", "merton", "--jobs", "2", "--seed", "0x10", "--out", "d"])
    assert (args.case, args.jobs, args.seed, args.out) == ("merton", 2, 16, "d")
