"""Run configuration: built-in profiles, JSON schema, merging and validation.

A run config is one JSON document. User files are deep-merged over a named
profile (``desk`` by default) and the result is validated before anything is
computed. Validation errors carry the JSON path of the offending value and,
when the value came from a file, the line it was found on.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re

import jsonschema

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_pos = {"type": "number", "exclusiveMinimum": 0}
_triple_or_scalar = {"oneOf": [{"type": "number"},
                               {"type": "array", "items": {"type": "number"},
                                "minItems": 3, "maxItems": 3}]}
_port = {
    "type": "object",
    "required": ["position"],
    "additionalProperties": False,
    "properties": {
        "position": _vec3,
        "polarization": _vec3,
        "boresight": _vec3,
        "taper": {"type": "number", "minimum": 0},
    },
}
_design = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_-]+$"},
        "column": {"enum": ["capacity", "efficiency", "capacity_efficiency", "all_terms",
                            "null_steering"]},
        "alpha_A": {"type": "number", "minimum": 0},
        "beta_A": _pos,
        "alpha_t": _triple_or_scalar,
        "alpha_r": _triple_or_scalar,
        "beta_t": _triple_or_scalar,
        "beta_r": _triple_or_scalar,
        "lambda_A": {"type": "number"},
        "lambda_t": _triple_or_scalar,
        "lambda_r": _triple_or_scalar,
        "null_weight": {"type": "number"},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "seed", "geometry", "ports", "frequencies", "grid", "objective",
                 "optimizer", "evaluation"],
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "profile": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "required": ["focal_length", "diameter", "facets", "thickness", "apex", "axis"],
            "properties": {
                "focal_length": _pos,
                "diameter": _pos,
                "facets": {"type": "integer", "minimum": 6},
                "thickness": _pos,
                "apex": _vec3,
                "axis": _vec3,
            },
        },
        "ports": {
            "type": "object",
            "additionalProperties": False,
            "required": ["tx", "rx"],
            "properties": {
                "tx": {"type": "array", "items": _port, "minItems": 1},
                "rx": {"type": "array", "items": _port, "minItems": 1},
                "amplitude": _pos,
            },
        },
        "frequencies": {
            "type": "object",
            "additionalProperties": False,
            "required": ["start", "stop", "count"],
            "properties": {"start": _pos, "stop": _pos,
                           "count": {"type": "integer", "minimum": 1}},
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["center", "extent", "counts"],
            "properties": {
                "center": _vec3,
                "extent": {"type": "array", "items": {"type": "number", "minimum": 0},
                           "minItems": 2, "maxItems": 2},
                "counts": {"type": "array", "items": {"type": "integer", "minimum": 1},
                           "minItems": 2, "maxItems": 2},
            },
        },
        "forward": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps_b": {"type": "number", "minimum": 1},
                "quadrature": {"enum": [1, 3, 7]},
                "include_direct": {"type": "boolean"},
                "physical_pairing": {"type": "boolean"},
            },
        },
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lower": {"type": "number"}, "upper": {"type": "number"}},
        },
        "objective": {
            "type": "object",
            "additionalProperties": False,
            "required": ["designs"],
            "properties": {
                "designs": {"type": "array", "items": _design, "minItems": 1},
                "zeta": _pos,
                "null": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["center", "radius"],
                    "properties": {"center": _vec3, "radius": _pos,
                                   "weight": {"type": "number"}},
                },
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "initial_step": _pos,
                "backtrack_factor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "step_growth": {"type": "number", "minimum": 1},
                "max_iterations": {"type": "integer", "minimum": 0},
                "objective_tolerance": {"type": "number", "minimum": 0},
                "objective_window": {"type": "integer", "minimum": 1},
                "step_tolerance": {"type": "number", "minimum": 0},
                "max_backtracks": {"type": "integer", "minimum": 1},
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sparsity": {"type": "array", "items": {"type": "integer", "minimum": 1},
                             "minItems": 1},
                "trials": {"type": "integer", "minimum": 1},
                "snr_db": {"type": "number"},
                "noiseless": {"type": "boolean"},
                "capacity_beta": _pos,
                "capacity_epsilon": _pos,
            },
        },
    },
}

_TABLE_DESIGNS = [{"column": c} for c in ("capacity", "efficiency", "capacity_efficiency",
                                          "all_terms")]


def _symmetric_ports(focal_x, d):
    pol, bore = [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0]
    tx = [{"position": [focal_x, y, 0.0], "polarization": pol, "boresight": bore}
          for y in (-d, d)]
    rx = [{"position": [focal_x, s * 1.5 * d, s * 1.5 * d], "polarization": pol,
           "boresight": bore} for s in (-1.0, 1.0)]
    return tx, rx


def _desk():
    tx, rx = _symmetric_ports(-0.4, 0.005)
    return {
        "version": CONFIG_VERSION,
        "profile": "desk",
        "seed": 0,
        "output": "out",
        "geometry": {"focal_length": 0.1, "diameter": 0.12, "facets": 64, "thickness": 8.13e-3,
                     "apex": [-0.5, 0.0, 0.0], "axis": [1.0, 0.0, 0.0]},
        "ports": {"tx": tx, "rx": rx, "amplitude": 0.05},
        "frequencies": {"start": 70.5e9, "stop": 77e9, "count": 3},
        "grid": {"center": [0.9, 0.0, 0.0], "extent": [0.1, 0.1], "counts": [7, 7]},
        "forward": {"eps_b": 1.0, "quadrature": 3, "include_direct": False,
                    "physical_pairing": False},
        "bounds": {"lower": 1.0, "upper": 30.0},
        "objective": {"designs": copy.deepcopy(_TABLE_DESIGNS) + [{"column": "null_steering"}],
                      "zeta": 1.0,
                      "null": {"center": [0.9, 0.0, 0.0], "radius": 0.02, "weight": -30.0}},
        "optimizer": {"initial_step": 1.0, "backtrack_factor": 0.5, "step_growth": 2.0,
                      "max_iterations": 500, "objective_tolerance": 1e-7, "objective_window": 5,
                      "step_tolerance": 1e-8, "max_backtracks": 60},
        "evaluation": {"sparsity": [1, 2, 3, 4, 5, 6], "trials": 50, "snr_db": 20.0,
                       "noiseless": True, "capacity_beta": 1e-6, "capacity_epsilon": 1.0},
    }


def _paper():
    doc = _desk()
    pol, bore = [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0]
    fx, d = -0.25, 0.01
    corners = [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    doc["profile"] = "paper"
    doc["geometry"].update({"focal_length": 0.25, "diameter": 0.4, "facets": 3750})
    doc["ports"]["tx"] = [{"position": [fx, d * a, d * b], "polarization": pol, "boresight": bore}
                          for a, b in corners]
    doc["ports"]["rx"] = [{"position": [fx, 2.5 * d * a, 2.5 * d * b], "polarization": pol,
                           "boresight": bore} for a, b in corners]
    doc["frequencies"]["count"] = 10
    doc["grid"].update({"extent": [0.2, 0.2], "counts": [25, 25]})
    doc["evaluation"]["sparsity"] = list(range(1, 81, 8))
    return doc


PROFILES = {"desk": _desk, "paper": _paper}


def profile(name: str) -> dict:
    try:
        return PROFILES[name]()
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


def deep_merge(base: dict, override: dict) -> dict:
    """Recursively merge ``override`` into a copy of ``base``; lists are replaced."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _locate(text: str | None, path) -> str:
    """Best-effort line lookup for a JSON path in the source text."""
    if not text:
        return ""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return ""
    pos = 0
    line = None
    for key in keys:
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            break
        pos = m.end()
        line = text.count("\n", 0, m.start()) + 1
    return f" (line {line})" if line is not None else ""


def _path_str(path) -> str:
    s = "$"
    for p in path:
        s += f"[{p}]" if isinstance(p, int) else f".{p}"
    return s


def validate(doc: dict, source_text: str | None = None) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        path = list(e.absolute_path)
        raise ConfigError(f"{_path_str(path)}{_locate(source_text, path)}: {e.message}")
    f = doc["frequencies"]
    if f["stop"] < f["start"]:
        raise ConfigError("$.frequencies: stop must be >= start")
    b = doc.get("bounds", {})
    if b.get("lower", 1.0) > b.get("upper", 30.0):
        raise ConfigError("$.bounds: lower exceeds upper")
    names = [design_name(d) for d in doc["objective"]["designs"]]
    if len(set(names)) != len(names):
        raise ConfigError("$.objective.designs: design names must be unique")
    if any(d.get("column") == "null_steering" for d in doc["objective"]["designs"]) \
            and "null" not in doc["objective"]:
        raise ConfigError("$.objective.null: required by the null_steering design")


def design_name(d: dict) -> str:
    return d.get("name", d.get("column", "custom"))


def load(path=None, profile_name: str | None = None, seed: int | None = None,
         output: str | None = None) -> dict:
    """Read, merge over a profile, apply CLI overrides and validate."""
    text = None
    user = {}
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                              f"{exc.msg}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
    name = profile_name or user.get("profile", "desk")
    if not isinstance(name, str):
        raise ConfigError("$.profile: must be a string")
    doc = deep_merge(profile(name), user)
    doc["profile"] = name
    if seed is not None:
        doc["seed"] = int(seed)
    if output is not None:
        doc["output"] = str(output)
    validate(doc, text)
    return doc


def canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(doc: dict) -> str:
    """SHA-256 of the canonical config with the output location removed."""
    d = {k: v for k, v in doc.items() if k != "output"}
    return hashlib.sha256(canonical(d).encode()).hexdigest()
