"""Command line: ``habitfbp {solve,sweep,validate,simulate,limits}``.

Exit codes: 0 success, 1 a validation check failed, 2 configuration or
usage error, 3 solver failure. Artifacts go to ``OUT/<command>-<hash>/``,
where the hash covers the effective config and the command arguments, so
reruns with identical inputs overwrite identical bytes.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import config as cfgmod
from . import runs
from ._numerics import SolverError
from .limits import CASES

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    name = os.environ.get("HABITFBP_LOG", "warn").strip().lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.WARNING, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if level is None:
        logging.getLogger("habitfbp").warning("HABITFBP_LOG=%r not in %s; using warn", name, "/".join(LOG_LEVELS))


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _values(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("values must be comma-separated numbers") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config; omitted means base-case defaults")
    common.add_argument("--out", metavar="DIR", default="runs", help="output root (default: runs)")
    common.add_argument("--jobs", metavar="N", type=int, default=1, help="parallel workers for sweeps and paths")
    common.add_argument("--seed", metavar="U64", type=_u64, default=None, help="override simulate.seed")

    p = argparse.ArgumentParser(prog="habitfbp", description="Habit-formation consumption/investment free-boundary solver.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve and write dual/policy tables and a header")
    sw = sub.add_parser("sweep", parents=[common], help="solve over a parameter sweep with overlaid charts")
    sw.add_argument("--param", choices=cfgmod.SWEEP_PARAMS, help="parameter to vary (or sweep.param in the config)")
    sw.add_argument("--values", type=_values, help="comma-separated values (or sweep.values in the config)")
    sub.add_parser("validate", parents=[common], help="run residual, structure and oracle checks")
    sub.add_parser("simulate", parents=[common], help="Monte-Carlo paths under the optimal policies")
    lim = sub.add_parser("limits", parents=[common], help="limiting-case experiments")
    lim.add_argument("case", help="one of: %s" % ", ".join(CASES))
    return p


def _run_dir(root: str, command: str, cfg: dict, extra) -> Path:
    return Path(root) / ("%s-%s" % (command, cfgmod.content_hash(command, cfg, extra)))


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses exit code 2 for usage errors
        return int(exc.code or 0)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = cfgmod.load(args.config) if args.config else cfgmod.normalize({})
        if args.command == "solve":
            out = _run_dir(args.out, "solve", cfg, None)
            res = runs.run_solve(cfg, out)
            msg = {"out": str(out), "x0": res["x0"], "y0": res["y0"]}
        elif args.command == "sweep":
            sweep = cfg.get("sweep", {})
            param = args.param or sweep.get("param")
            values = args.values or sweep.get("values")
            if not param or not values:
                raise cfgmod.ConfigError("sweep", "need --param and --values (or a sweep section)")
            out = _run_dir(args.out, "sweep", cfg, [param, values])
            res = runs.run_sweep(cfg, param, values, out, jobs=args.jobs)
            msg = {"out": str(out), "x0": [r["x0"] for r in res["runs"]]}
        elif args.command == "validate":
            out = _run_dir(args.out, "validate", cfg, None)
            res = runs.run_validate(cfg, out)
            failed = [c["name"] for c in res["checks"] if not c["passed"]]
            print(json.dumps({"out": str(out), "passed": res["passed"], "failed": failed}))
            return 0 if res["passed"] else 1
        elif args.command == "simulate":
            seed = args.seed if args.seed is not None else cfg["simulate"]["seed"]
            out = _run_dir(args.out, "simulate", cfg, seed)
            res = runs.run_simulate(cfg, out, jobs=args.jobs, seed=seed)
            msg = {"out": str(out), "paths": res["sim"]["n_paths"], "aborted": res["aborted"]}
        else:
            if args.case not in CASES:
                raise cfgmod.ConfigError("case", "unknown limit case %r (choose from %s)" % (args.case, ", ".join(CASES)))
            out = _run_dir(args.out, "limits", cfg, args.case)
            runs.run_limits(args.case, cfg, out, jobs=args.jobs)
            msg = {"out": str(out), "case": args.case}
    except cfgmod.ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except SolverError as exc:
        print("solver error: %s" % exc, file=sys.stderr)
        return 3
    print(json.dumps(msg))
    return 0


if __name__ == "__main__":
    sys.exit(main())
