"""Experiment configuration: JSON schema, named presets and loading."""
import copy
import json
from pathlib import Path

import jsonschema

from ..coefficient import THETA_FUNCTIONS
from ..errors import ConfigError

_FIELD = {
    "type": "object",
    "additionalProperties": False,
    "required": ["theta_id", "component"],
    "properties": {
        "theta_id": {"enum": sorted(THETA_FUNCTIONS)},
        "component": {"type": "integer", "minimum": 0},
        "raster_path": {"type": "string"},
        "builtin_field": {"enum": ["periodic", "constant", "contrast"]},
        "value": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "tau": {"type": "number", "minimum": 1},
        "options": {"type": "object"},
    },
    "oneOf": [{"required": ["raster_path"]}, {"required": ["builtin_field"]}],
}

_DATA = {
    "oneOf": [{"enum": ["benchmark", "zero"]}, {"type": "number"}],
}

_MU = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mesh", "coefficient"],
    "properties": {
        "name": {"type": "string"},
        "mesh": {
            "type": "object",
            "additionalProperties": False,
            "required": ["nx", "ny", "Nx", "Ny"],
            "properties": {k: {"type": "integer", "minimum": 1} for k in ("nx", "ny", "Nx", "Ny")},
        },
        "coefficient": {"type": "array", "items": _FIELD, "minItems": 1},
        "M": {"type": "integer", "minimum": 1},
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"source": _DATA, "boundary": _DATA},
        },
        "n_s": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "gpc_degree": {"type": "integer", "minimum": 0},
        "pod_eps": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "pod_mode": {"enum": ["eigenindex", "neighborhood"]},
        "l": {"type": "integer", "minimum": 1},
        "predictor": {"enum": ["gpc", "gpr", "both"]},
        "strategy": {"enum": ["pod", "snapshot"]},
        "mu_ref": {"oneOf": [{"type": "null"}, _MU]},
        "mu_star": {"type": "array", "items": _MU},
        "output_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "record_timings": {"type": "boolean"},
    },
}

DEFAULTS = {
    "name": "experiment",
    "problem": {"source": "benchmark", "boundary": "benchmark"},
    "n_s": 50,
    "seed": 0,
    "gpc_degree": 3,
    "pod_eps": 1e-6,
    "pod_mode": "eigenindex",
    "l": 5,
    "predictor": "both",
    "strategy": "pod",
    "mu_ref": None,
    "mu_star": [0.6],
    "output_dir": "out",
    "workers": 1,
    "record_timings": False,
}

_MESH = {"nx": 100, "ny": 100, "Nx": 5, "Ny": 5}


def _contrast(q, seed):
    return {"theta_id": "mu_plus_mu_sq", "component": q, "builtin_field": "contrast",
            "seed": seed, "tau": 1e4}


PRESETS = {
    "paper41": {
        "name": "paper41",
        "mesh": dict(_MESH),
        "coefficient": [{"theta_id": "mu_plus_mu_sq", "component": 0, "builtin_field": "periodic"}],
        "M": 1,
        "mu_star": [0.6],
    },
    "case1": {
        "name": "case1",
        "mesh": dict(_MESH),
        "coefficient": [_contrast(0, 0)],
        "M": 1,
        "mu_star": [0.6],
    },
    "case2": {
        "name": "case2",
        "mesh": dict(_MESH),
        "coefficient": [_contrast(0, 1), _contrast(1, 2)],
        "M": 2,
        "mu_star": [[0.6, 0.6]],
    },
    "case3": {
        "name": "case3",
        "mesh": dict(_MESH),
        "coefficient": [_contrast(q, 3 + q) for q in range(4)],
        "M": 4,
        "mu_star": [[0.1, 0.1, 0.1, 0.1]],
    },
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    cfg = copy.deepcopy(PRESETS[name])
    cfg.update(copy.deepcopy(overrides))
    return resolve(cfg)


def resolve(raw):
    """Validate ``raw`` (a dict, optionally naming a ``preset`` to extend) and fill defaults."""
    raw = copy.deepcopy(dict(raw))
    name = raw.pop("preset", None)
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
        base = copy.deepcopy(PRESETS[name])
        base.update(raw)
        raw = base
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {path}: {exc.message}") from None
    cfg = copy.deepcopy(DEFAULTS)
    cfg.update(raw)
    cfg["problem"] = {**DEFAULTS["problem"], **raw.get("problem", {})}
    cfg.setdefault("M", max(c["component"] for c in cfg["coefficient"]) + 1)
    cfg["mu_star"] = [_as_list(m) for m in cfg["mu_star"]]
    if cfg["mu_ref"] is not None:
        cfg["mu_ref"] = _as_list(cfg["mu_ref"])
    for m in cfg["mu_star"] + ([cfg["mu_ref"]] if cfg["mu_ref"] else []):
        if len(m) != cfg["M"]:
            raise ConfigError(f"parameter {m} does not have M={cfg['M']} components")
    return cfg


def _as_list(m):
    return [float(v) for v in m] if isinstance(m, list) else [float(m)]


def load_config(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if isinstance(raw, dict) and "config" in raw and "mesh" not in raw:
        raw = raw["config"]  # a run manifest
    cfg = resolve(raw)
    cfg["_base_dir"] = str(path.parent)
    return cfg
