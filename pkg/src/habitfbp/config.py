"""Run configuration: JSON schema, defaults and object construction.

A config has the sections ``market``, ``utility``, ``solver`` and the
optional ``simulate``, ``validate`` and ``sweep``. An absent or empty
``market`` section means the base-case market; a partially filled one must
name every field, so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import copy
import hashlib
import inspect
import json
from pathlib import Path

import jsonschema

from .dual import MarketParams, SolverControls
from .utility import FAMILIES, UtilitySpec

DEFAULT_MARKET = {"r": 0.02, "mu": 0.1, "sigma": 0.2, "rho": 1.0, "delta": 0.3}
DEFAULT_UTILITY = {"family": "power", "params": {"alpha": 0.75, "p": 0.2, "q": 0.5, "kappa": 2.0}}
DEFAULT_SIMULATE = {
    "x_init_factor": 2.0,
    "h_init": 1.0,
    "T": 40.0,
    "dt": 0.01,
    "n_paths": 1000,
    "seed": 0,
    "record_every": 100,
    "transversality": True,
}
DEFAULT_VALIDATE = {"n_residual": 1000, "fd_per_decade": 400, "scan": True}
SWEEP_PARAMS = ("p", "q", "kappa", "alpha", "mu", "rho", "delta")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "market": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "r": {"type": "number", "minimum": 0},
                "mu": _pos,
                "sigma": _pos,
                "rho": _pos,
                "delta": _pos,
            },
        },
        "utility": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family", "params"],
            "properties": {
                "family": {"enum": sorted(FAMILIES)},
                "params": {"type": "object", "additionalProperties": _num},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rel_tol": _pos,
                "abs_tol": _pos,
                "y_min_factor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "shoot_tol": _pos,
                "max_steps": {"type": "integer", "minimum": 1},
                "max_ds": _pos,
                "sep_tol": _pos,
                "max_stages": {"type": "integer", "minimum": 1},
            },
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x_init": _pos,
                "x_init_factor": _pos,
                "h_init": _pos,
                "T": _pos,
                "dt": _pos,
                "n_paths": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "record_every": {"type": "integer", "minimum": 0},
                "transversality": {"type": "boolean"},
            },
        },
        "validate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_residual": {"type": "integer", "minimum": 10},
                "fd_per_decade": {"type": "integer", "minimum": 20},
                "scan": {"type": "boolean"},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "param": {"enum": list(SWEEP_PARAMS)},
                "values": {"type": "array", "items": _num, "minItems": 1},
            },
        },
    },
}


class ConfigError(ValueError):
    """Schema violation; ``path`` is the dotted location of the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__("%s: %s" % (path or "<root>", message))
        self.path = path


def _family_params(family: str) -> list[str]:
    return list(inspect.signature(FAMILIES[family]).parameters)


def normalize(raw: dict) -> dict:
    """Validate ``raw`` and return the effective config with defaults filled in."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path)
        raise ConfigError(path, exc.message) from None
    cfg = copy.deepcopy(raw)
    market = cfg.get("market") or {}
    if market:
        missing = [k for k in DEFAULT_MARKET if k not in market]
        if missing:
            raise ConfigError("market." + missing[0], "required field missing (give all or none of %s)" % ", ".join(DEFAULT_MARKET))
    cfg["market"] = {**DEFAULT_MARKET, **market}
    util = cfg.get("utility") or copy.deepcopy(DEFAULT_UTILITY)
    names = _family_params(util["family"])
    for k in names:
        if k not in util["params"]:
            raise ConfigError("utility.params." + k, "required field missing for family %r" % util["family"])
    for k in util["params"]:
        if k not in names:
            raise ConfigError("utility.params." + k, "unknown parameter for family %r" % util["family"])
    cfg["utility"] = util
    cfg["solver"] = {**_controls_dict(SolverControls()), **(cfg.get("solver") or {})}
    cfg["simulate"] = {**DEFAULT_SIMULATE, **(cfg.get("simulate") or {})}
    cfg["validate"] = {**DEFAULT_VALIDATE, **(cfg.get("validate") or {})}
    if "sweep" in cfg:
        cfg["sweep"] = dict(cfg["sweep"])
    # object construction doubles as the semantic check
    build(cfg)
    return cfg


def _controls_dict(c: SolverControls) -> dict:
    return {k: getattr(c, k) for k in inspect.signature(SolverControls).parameters}


def build(cfg: dict) -> tuple[MarketParams, UtilitySpec, SolverControls]:
    try:
        market = MarketParams(**cfg["market"])
    except ValueError as exc:
        raise ConfigError("market", str(exc)) from None
    try:
        spec = FAMILIES[cfg["utility"]["family"]](**cfg["utility"]["params"])
        if not spec.satisfies_moderate_loss():
            raise ValueError("loss at zero consumption exceeds alpha * U+'(0)")
    except ValueError as exc:
        raise ConfigError("utility.params", str(exc)) from None
    try:
        controls = SolverControls(**cfg["solver"])
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None
    return market, spec, controls


def load(path) -> dict:
    """Read and normalize a JSON config file."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("", "cannot read config: %s" % exc) from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", "invalid JSON: %s" % exc) from None
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    return normalize(raw)


def content_hash(*parts) -> str:
    """First 12 hex digits of the SHA-256 of the canonical JSON of ``parts``."""
    blob = json.dumps(parts, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def with_param(cfg: dict, param: str, value: float) -> dict:
    """Copy of ``cfg`` with one sweep parameter replaced."""
    if param not in SWEEP_PARAMS:
        raise ConfigError("sweep.param", "unsupported sweep parameter %r" % param)
    out = copy.deepcopy(cfg)
    if param in out["market"]:
        out["market"][param] = float(value)
    elif param in out["utility"]["params"]:
        out["utility"]["params"][param] = float(value)
    else:
        raise ConfigError("sweep.param", "family %r has no parameter %r" % (out["utility"]["family"], param))
    return out
