"""Run orchestration behind the command line: solve, sweep, validate, simulate, limits.

Each ``run_*`` function takes a normalized config (see :mod:`habitfbp.config`)
and an output directory, writes its artifacts there and returns a small
summary dict. Outputs do not depend on ``jobs``.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import report
from .dual import shoot_y0
from .limits import CASES
from .primal import PrimalSolution
from .simulate import PolicyTable, SimConfig, concat_pathsets, simulate, transversality
from .utility import concavify
from .validate import fd_check, run_suite, scan_check

log = logging.getLogger(__name__)


def solve_config(cfg: dict) -> PrimalSolution:
    market, spec, controls = cfgmod.build(cfg)
    env = concavify(spec)
    return PrimalSolution(shoot_y0(market, spec, env, controls))


def header(primal: PrimalSolution) -> dict:
    d = primal.dual
    return {
        "lambda": d.roots.lam,
        "lambda_prime": d.roots.lamp,
        "gamma": d.roots.gamma,
        "c0": d.envelope.c0,
        "phi0": d.envelope.phi0,
        "u_at_zero": d.envelope.u_at_zero,
        "y0": d.y0,
        "y0_bracket": list(d.bracket),
        "x0": primal.x0,
        "x_max": primal.x_max,
        "y_min": d.y_min,
        "stages": d.stages,
        "asymptote": d.asymptote,
    }


def dual_columns(primal: PrimalSolution) -> dict:
    d = primal.dual
    return {"y": d.ys, "phi": d.phis, "psi": d.psis, "u": d.us, "du": d.dus, "ddu": d.ddus}


def run_solve(cfg: dict, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    primal = solve_config(cfg)
    head = header(primal)
    report.write_json(out / "header.json", {"config": cfg, **head})
    report.write_csv(out / "dual.csv", dual_columns(primal))
    tab = primal.table()
    report.write_csv(out / "policy.csv", tab)
    _policy_charts(out, [("solution", tab)], [primal.x0])
    return head


def _policy_charts(out: Path, tables, x0s, prefix: str = "") -> None:
    marks = [(x0, "x0" if len(x0s) == 1 else None, i) for i, x0 in enumerate(x0s)]
    for key, name, ylab in (("v", "value", "V(x)"), ("weight", "weight", "pi*(x)/x"), ("cw", "consumption", "c*(x)/x")):
        report.line_chart(
            out / ("%s%s.svg" % (prefix, name)),
            [(lab, t["x"], t[key]) for lab, t in tables],
            title=ylab,
            xlabel="wealth-to-habit ratio x",
            ylabel=ylab,
            vlines=marks,
        )


# common x grid for overlaid sweep charts
OVERLAY_X = np.linspace(0.02, 10.0, 400)


def _sweep_worker(cfg: dict):
    primal = solve_config(cfg)
    return header(primal), primal.table(), _overlay(primal, OVERLAY_X)


def _overlay(primal: PrimalSolution, xs) -> dict:
    return {"x": xs, "v": primal.value(xs), "weight": primal.policy_pi(xs) / xs, "cw": primal.policy_c(xs) / xs}


def run_sweep(cfg: dict, param: str, values, out: Path, jobs: int = 1) -> dict:
    """One solve per value; per-value policy CSVs and overlaid charts."""
    out.mkdir(parents=True, exist_ok=True)
    cfgs = [cfgmod.with_param(cfg, param, v) for v in values]
    if jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_worker, cfgs))
    else:
        results = [_sweep_worker(c) for c in cfgs]
    heads = []
    overlays = []
    for v, (head, tab, ov) in zip(values, results):
        report.write_csv(out / ("policy_%s=%s.csv" % (param, repr(float(v)))), tab)
        heads.append({"value": float(v), **head})
        overlays.append(("%s=%g" % (param, v), ov))
    _policy_charts(out, overlays, [h["x0"] for h in heads], prefix="sweep_")
    summary = {"param": param, "values": [float(v) for v in values], "runs": heads}
    report.write_json(out / "sweep.json", summary)
    return summary


def run_validate(cfg: dict, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    primal = solve_config(cfg)
    vcfg = cfg["validate"]
    checks = run_suite(primal, n_residual=vcfg["n_residual"])
    checks.append(fd_check(primal, per_decade=vcfg["fd_per_decade"]))
    if vcfg["scan"]:
        checks.append(scan_check(primal))
    result = {
        "passed": all(c.passed for c in checks),
        "checks": [c.as_dict() for c in checks],
        "header": header(primal),
    }
    report.write_json(out / "validate.json", result)
    return result


# simulation workers share the solved problem through fork; the utility
# callables are not picklable
_WORKER_STATE: dict = {}


def _sim_init(primal, table):
    _WORKER_STATE["primal"] = primal
    _WORKER_STATE["table"] = table


def _sim_chunk(args):
    sim, first = args
    return simulate(_WORKER_STATE["primal"], sim, policy=_WORKER_STATE["table"], first_path=first)


def simulate_parallel(primal: PrimalSolution, sim: SimConfig, jobs: int = 1, table: PolicyTable | None = None):
    """Split paths into contiguous blocks; the result is independent of ``jobs``."""
    table = table or PolicyTable(primal)
    if jobs <= 1 or sim.n_paths < 2:
        return simulate(primal, sim, policy=table)
    jobs = min(jobs, sim.n_paths)
    edges = np.linspace(0, sim.n_paths, jobs + 1).astype(int)
    tasks = [
        (SimConfig(**{**sim.__dict__, "n_paths": int(b - a)}), int(a)) for a, b in zip(edges[:-1], edges[1:]) if b > a
    ]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx, initializer=_sim_init, initargs=(primal, table)) as ex:
        parts = list(ex.map(_sim_chunk, tasks))
    return concat_pathsets(parts)


def sim_config(cfg: dict, primal: PrimalSolution, seed: int | None = None) -> SimConfig:
    s = cfg["simulate"]
    x_init = s.get("x_init") or s["x_init_factor"] * primal.x0
    return SimConfig(
        x_init=float(x_init),
        h_init=s["h_init"],
        T=s["T"],
        dt=s["dt"],
        n_paths=s["n_paths"],
        seed=s["seed"] if seed is None else seed,
        record_every=s["record_every"],
    )


def run_simulate(cfg: dict, out: Path, jobs: int = 1, seed: int | None = None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    primal = solve_config(cfg)
    sim = sim_config(cfg, primal, seed)
    table = PolicyTable(primal)
    ps = simulate_parallel(primal, sim, jobs, table)
    n, m = ps.X.shape
    report.write_csv(
        out / "paths.csv",
        {
            "path": np.repeat(np.arange(n), m),
            "t": np.tile(ps.t, n),
            "X": ps.X.ravel(),
            "H": ps.H.ravel(),
            "W": ps.W.ravel(),
            "C": ps.C.ravel(),
            "Pi": ps.Pi.ravel(),
        },
    )
    summary = {"sim": {**sim.__dict__}, "x0": primal.x0, **ps.summary()}
    if cfg["simulate"]["transversality"]:
        tr = transversality(primal, sim)
        summary["transversality"] = tr.as_dict()
        report.line_chart(
            out / "transversality.svg",
            [("E[exp(-delta T) v(X_T)]", tr.horizons, tr.mean)],
            title="discounted value along optimal paths",
            xlabel="T",
            ylabel="mean",
        )
    report.write_json(out / "summary.json", summary)
    sm = ps.summary()
    report.line_chart(
        out / "ratio_quantiles.svg",
        [(k, ps.t, sm["X"][k]) for k in ("q05", "q50", "q95", "mean")],
        title="wealth-to-habit ratio X*",
        xlabel="t",
        ylabel="X*",
        vlines=(),
    )
    return summary


def run_limits(case: str, cfg: dict, out: Path, jobs: int = 1) -> dict:
    if case not in CASES:
        raise cfgmod.ConfigError("case", "unknown limit case %r (choose from %s)" % (case, ", ".join(CASES)))
    out.mkdir(parents=True, exist_ok=True)
    rep = CASES[case](jobs=jobs)
    curves = rep.pop("curves")
    tables = []
    for i, cv in enumerate(curves):
        labels = {k: v for k, v in cv.items() if k not in ("x", "weight", "cw", "v")}
        tag = ",".join("%s=%s" % (k, v) for k, v in labels.items() if v is not None)
        report.write_csv(out / ("curve_%02d.csv" % i), {k: cv[k] for k in ("x", "v", "weight", "cw")})
        tables.append((tag, {k: np.asarray(cv[k]) for k in ("x", "v", "weight", "cw")}))
    for key, ylab in (("weight", "pi*(x)/x"), ("cw", "c*(x)/x")):
        report.line_chart(
            out / ("%s.svg" % key),
            [(lab, t["x"], t[key]) for lab, t in tables],
            title="%s: %s" % (case, ylab),
            xlabel="wealth-to-habit ratio x",
            ylabel=ylab,
        )
    report.write_json(out / "report.json", rep)
    return rep
