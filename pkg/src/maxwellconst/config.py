"""Experiment configs: YAML files checked against a JSON schema before anything runs.

Unknown keys are rejected. Every error names the offending key as a path
such as ``q/0`` or ``eps/1/expr``.
"""

from __future__ import annotations

import math

import jsonschema
import numpy as np
import yaml

from .grid_complex import GridError, build_grid

KINDS = ("constants", "verify-chain", "abstract-suite", "transform", "gaffney")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"config error at '{path}': {message}")
        self.path = path


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_tolerances = {
    "type": "object",
    "additionalProperties": False,
    "properties": {k: _pos for k in ("solver", "max_formula", "duality", "gaffney")},
}
_eps = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["identity", "scalar", "field", "constant-spd"]},
        "value": _pos,
        "expr": {"type": "string"},
        "matrix": {"type": "array", "items": {"type": "array", "items": _num}},
        "label": {"type": "string"},
    },
}
_common = {
    "kind": {"enum": list(KINDS)},
    "name": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
    "tolerances": _tolerances,
    "output": {
        "type": "object",
        "additionalProperties": False,
        "properties": {"report": {"type": "string"}},
    },
}
_int_list = {"type": "array", "minItems": 1, "items": {"type": "integer"}}

SCHEMAS = {
    "grid": {
        "type": "object",
        "required": ["kind", "n_dim", "levels", "q"],
        "additionalProperties": False,
        "properties": {
            **_common,
            "n_dim": {"type": "integer", "minimum": 1, "maximum": 4},
            "levels": _int_list,
            "q": _int_list,
            "side": _pos,
            "eps": {"type": "array", "minItems": 1, "items": _eps},
            "solver": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "method": {"enum": ["auto", "dense", "lobpcg"]},
                    "dense_limit": {"type": "integer", "minimum": 1},
                },
            },
        },
    },
    "abstract-suite": {
        "type": "object",
        "required": ["kind"],
        "additionalProperties": False,
        "properties": {
            **_common,
            "seeds": {
                "oneOf": [
                    {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                    {
                        "type": "object",
                        "required": ["start", "count"],
                        "additionalProperties": False,
                        "properties": {"start": {"type": "integer", "minimum": 0}, "count": {"type": "integer", "minimum": 1}},
                    },
                ]
            },
            "max_middle": {"type": "integer", "minimum": 1, "maximum": 64},
        },
    },
    "transform": {
        "type": "object",
        "required": ["kind", "n_dim", "transform", "q"],
        "additionalProperties": False,
        "properties": {
            **_common,
            "n_dim": {"type": "integer", "minimum": 1, "maximum": 4},
            "q": _int_list,
            "eps": _eps,
            "transform": {
                "type": "object",
                "required": ["kind"],
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": ["scaling", "affine", "builtin"]},
                    "r": _pos,
                    "matrix": {"type": "array", "items": {"type": "array", "items": _num}},
                    "offset": {"type": "array", "items": _num},
                    "name": {"enum": ["identity", "l-shape-chart", "sinusoidal-perturbation"]},
                    "amplitude": _num,
                },
            },
            "samples_per_axis": {"type": "integer", "minimum": 1},
            "c_p_source": _pos,
            "image_levels": _int_list,
            "solver": {"type": "object", "additionalProperties": False,
                       "properties": {"method": {"enum": ["auto", "dense", "lobpcg"]}, "dense_limit": {"type": "integer", "minimum": 1}}},
        },
    },
    "gaffney": {
        "type": "object",
        "required": ["kind", "n_dim", "q_form"],
        "additionalProperties": False,
        "properties": {
            **_common,
            "n_dim": {"type": "integer", "minimum": 1, "maximum": 4},
            "q_form": {"type": "integer", "minimum": 0},
            "quadrature_order": {"type": "integer", "minimum": 2, "maximum": 64},
            "fields": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "oneOf": [
                        {"type": "string"},
                        {
                            "type": "object",
                            "required": ["components"],
                            "additionalProperties": False,
                            "properties": {"name": {"type": "string"}, "components": {"type": "array", "items": {"type": "string"}}},
                        },
                    ]
                },
            },
        },
    },
}


def _schema_for(kind: str) -> dict:
    return SCHEMAS["grid"] if kind in ("constants", "verify-chain") else SCHEMAS[kind]


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        parts.append(extra[0] if extra else "?")
    elif err.validator == "required":
        missing = [r for r in err.validator_value if r not in err.instance]
        parts.append(missing[0] if missing else "?")
    return "/".join(parts) or "$"


def validate(cfg) -> dict:
    """Check a parsed config completely. Return it unchanged, or raise ``ConfigError``."""
    if not isinstance(cfg, dict):
        raise ConfigError("$", "top level must be a mapping")
    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {', '.join(KINDS)}, got {kind!r}")
    errors = sorted(jsonschema.Draft202012Validator(_schema_for(kind)).iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise ConfigError(_path(e), e.message)
    n = cfg.get("n_dim")
    if kind in ("constants", "verify-chain"):
        _check_degrees(cfg["q"], n)
        _check_levels(cfg["levels"], n, cfg.get("side", 1.0))
        for i, w in enumerate(cfg.get("eps", [])):
            _check_weight(w, f"eps/{i}", n, cfg["q"], cfg.get("side", 1.0))
    elif kind == "transform":
        _check_degrees(cfg["q"], n)
        _check_transform(cfg["transform"], n)
        if "eps" in cfg:
            _check_weight(cfg["eps"], "eps", n, cfg["q"], None)
        if cfg.get("samples_per_axis", 64) < 8:
            raise ConfigError("samples_per_axis", "sampling grid coarser than the minimum of 8 per axis")
        if "image_levels" in cfg:
            _check_levels(cfg["image_levels"], n, 1.0, key="image_levels")
    elif kind == "gaffney":
        if not 0 <= cfg["q_form"] <= n:
            raise ConfigError("q_form", f"degree {cfg['q_form']} outside [0, {n}]")
        from .pullback import GAFFNEY_FIELDS, GAFFNEY_SINGLE_BC_FIELDS

        known = {**GAFFNEY_FIELDS.get((n, cfg["q_form"]), {}), **GAFFNEY_SINGLE_BC_FIELDS.get((n, cfg["q_form"]), {})}
        fields = cfg.get("fields")
        if fields is None and not known:
            raise ConfigError("fields", f"no built-in fields for N={n}, q={cfg['q_form']}; list components explicitly")
        for i, f in enumerate(fields or []):
            if isinstance(f, str) and f not in known:
                raise ConfigError(f"fields/{i}", f"unknown built-in field {f!r}; known: {', '.join(sorted(known))}")
            if isinstance(f, dict) and len(f["components"]) != math.comb(n, cfg["q_form"]):
                raise ConfigError(f"fields/{i}/components", f"need {math.comb(n, cfg['q_form'])} components")
    return cfg


def _check_degrees(qs, n):
    for i, q in enumerate(qs):
        if not 0 <= q <= n:
            raise ConfigError(f"q/{i}", f"degree {q} outside [0, n_dim={n}]")


def _check_levels(levels, n, side, key="levels"):
    ls = sorted(levels)
    for i, m in enumerate(levels):
        if m < 2:
            raise ConfigError(f"{key}/{i}", f"need at least 2 cells per axis, got {m}")
    for a, b in zip(ls, ls[1:]):
        if b != 2 * a:
            raise ConfigError(key, f"levels must double ({a} -> {b}) for Richardson extrapolation")
    try:
        build_grid(n, ls[-1], side)
    except GridError as e:
        raise ConfigError(f"{key}/{levels.index(ls[-1])}", str(e)) from None


def _check_weight(w, key, n, qs, side):
    kind = w["kind"]
    if kind == "scalar" and "value" not in w:
        raise ConfigError(f"{key}/value", "scalar weight needs a value")
    if kind == "field":
        if "expr" not in w:
            raise ConfigError(f"{key}/expr", "field weight needs an expression in x1..xN")
        from .experiments import make_weight

        try:
            eps = make_weight(w, n)
            pts = np.random.default_rng(0).uniform(0, side or 1.0, size=(256, n))
            vals = eps.field(pts)
        except Exception as e:  # sympy raises a variety of types
            raise ConfigError(f"{key}/expr", f"cannot evaluate: {e}") from None
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ConfigError(f"{key}/expr", "weight must be positive on the domain")
    if kind == "constant-spd":
        if "matrix" not in w:
            raise ConfigError(f"{key}/matrix", "constant-spd weight needs a matrix")
        E = np.asarray(w["matrix"], dtype=float)
        for q in qs:
            if E.shape != (math.comb(n, q),) * 2:
                raise ConfigError(f"{key}/matrix", f"degree {q} needs a {math.comb(n, q)}x{math.comb(n, q)} matrix, got {E.shape}")
        if np.abs(E - E.T).max() > 1e-12 * np.abs(E).max() or np.linalg.eigvalsh(0.5 * (E + E.T))[0] <= 0:
            raise ConfigError(f"{key}/matrix", "matrix must be symmetric positive definite")


def _check_transform(t, n):
    kind = t["kind"]
    if kind == "scaling" and "r" not in t:
        raise ConfigError("transform/r", "scaling needs r")
    if kind == "affine":
        if "matrix" not in t:
            raise ConfigError("transform/matrix", "affine needs a matrix")
        A = np.asarray(t["matrix"], dtype=float)
        if A.shape != (n, n):
            raise ConfigError("transform/matrix", f"need an {n}x{n} matrix")
        if np.linalg.det(A) <= 0:
            raise ConfigError("transform/matrix", "matrix must have positive determinant")
        if "offset" in t and len(t["offset"]) != n:
            raise ConfigError("transform/offset", f"need {n} entries")
    if kind == "builtin":
        if "name" not in t:
            raise ConfigError("transform/name", "builtin transform needs a name")
        if t["name"] == "l-shape-chart" and n != 2:
            raise ConfigError("transform/name", "the L-shape chart needs n_dim = 2")


def load(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        raise ConfigError("$", f"not valid YAML: {e}") from None
    except OSError as e:
        raise ConfigError("$", str(e)) from None
    return validate(cfg)
