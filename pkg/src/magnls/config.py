"""Experiment configuration: JSON schema, validation and defaults.

A config is a JSON object. Keys shared by all kinds:

``kind``
    one of ``KINDS``.
``p``
    nonlinearity exponent (default 3).
``potential``
    ``{"preset": name, "params": {...}}``; not used by ``groundstate``.
``bump``
    ``centers`` (list of points, x-units), ``phases``, ``half_width``,
    ``spacing``, ``cutoff_radius``, ``profile_mode`` and ``recenter_gauge``
    (``null`` means on for a single bump and off otherwise).
``eps``
    a number, or a strictly decreasing list for the sweep kinds.
``tolerances``
    ``outer``, ``inner``, ``krylov``, ``groundstate``; all positive.
``output``
    CSV path, field-file path (``ansatz``) or directory (``solve``).
``rng_seed``, ``probe_points``
    control the random probe points of the derivative cross-check only.

Kind-specific keys are ``dim`` and ``r_max`` (groundstate), ``box`` and
``n`` (field-scan, landscape), ``gauge`` (gauge-check) and ``fit``
(energy-expansion). See ``REQUIRED`` for what each kind needs.
"""

from __future__ import annotations

import copy
import hashlib
import json

import jsonschema

from .errors import ConfigError

__all__ = ["KINDS", "REQUIRED", "SCHEMA", "DEFAULTS", "validate", "load", "config_hash"]

KINDS = (
    "groundstate",
    "field-scan",
    "ansatz",
    "residual-scaling",
    "energy-expansion",
    "landscape",
    "solve",
    "gauge-check",
)

_POS = {"type": "number", "exclusiveMinimum": 0}
_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 1, "maxItems": 3}
_EPS_LIST = {"type": "array", "items": _POS, "minItems": 2}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "output"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "p": {"type": "number", "exclusiveMinimum": 1},
        "dim": {"type": "integer", "minimum": 1, "maximum": 3},
        "r_max": {"type": "number", "minimum": 10},
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["preset"],
            "properties": {"preset": {"type": "string"}, "params": {"type": "object"}},
        },
        "bump": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "centers": {"type": "array", "items": _POINT, "minItems": 1},
                "phases": {"type": "array", "items": {"type": "number"}},
                "half_width": {"type": "number", "minimum": 10},
                "spacing": _POS,
                "cutoff_radius": _POS,
                "profile_mode": {"enum": ["grid", "radial"]},
                "recenter_gauge": {"type": ["boolean", "null"]},
            },
        },
        "eps": {"oneOf": [_POS, _EPS_LIST]},
        "box": {"type": "array", "items": _POINT, "minItems": 2, "maxItems": 2},
        "n": {"type": "integer", "minimum": 2},
        "gauge": {
            "type": "object",
            "additionalProperties": False,
            "required": ["f", "params"],
            "properties": {
                "f": {"enum": ["linear", "quadratic"]},
                "params": {"type": "object"},
                "spacings": {"type": "array", "items": _POS, "minItems": 1},
            },
        },
        "fit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"quartic": {"type": "boolean"}, "extrapolate": {"type": "boolean"}},
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _POS for k in ("outer", "inner", "krylov", "groundstate")},
        },
        "output": {"type": "string", "minLength": 1},
        "rng_seed": {"type": "integer", "minimum": 0},
        "probe_points": {"type": "integer", "minimum": 0},
    },
}

# fields each kind needs beyond kind and output; dotted names index into sub-objects
REQUIRED = {
    "groundstate": ["dim"],
    "field-scan": ["potential", "box", "n"],
    "ansatz": ["potential", "bump.centers", "eps"],
    "residual-scaling": ["potential", "bump.centers", "eps"],
    "energy-expansion": ["potential", "bump.centers", "eps"],
    "landscape": ["potential", "eps", "box", "n"],
    "solve": ["potential", "bump.centers", "eps"],
    "gauge-check": ["potential", "bump.centers", "eps", "gauge"],
}
_SWEEP = {"residual-scaling": 2, "energy-expansion": 4}

DEFAULTS = {
    "p": 3.0,
    "r_max": 30.0,
    "bump": {
        "phases": None,
        "half_width": 16.0,
        "spacing": 0.25,
        "cutoff_radius": 8.0,
        "profile_mode": "grid",
        "recenter_gauge": None,
    },
    "fit": {"quartic": False, "extrapolate": True},
    "gauge": {"spacings": [0.25, 0.125, 0.0625]},
    "tolerances": {"outer": 1e-9, "inner": None, "krylov": 1e-12, "groundstate": 1e-10},
    "rng_seed": 0,
    "probe_points": 8,
}


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _format(err) -> str:
    where = list(err.absolute_path)
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        return f"{_path(where + missing[:1])}: required field is missing"
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return f"{_path(where + extra[:1])}: unknown field"
    return f"{_path(where)}: {err.message}"


def _lookup(cfg, dotted):
    node = cfg
    for key in dotted.split("."):
        if not isinstance(node, dict) or key not in node:
            return False
        node = node[key]
    return True


def _merge(defaults, cfg):
    out = copy.deepcopy(cfg)
    for k, v in defaults.items():
        if k not in out:
            out[k] = copy.deepcopy(v)
        elif isinstance(v, dict) and isinstance(out[k], dict):
            out[k] = _merge(v, out[k])
    return out


def validate(cfg: dict) -> dict:
    """Check ``cfg`` against the schema and kind rules; return it with defaults filled in.

    Raises
    ------
    ConfigError
        The message starts with the dotted path of the offending field.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("<root>: config must be a JSON object")
    errors = sorted(
        jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg),
        key=lambda e: (len(e.absolute_path), _path(e.absolute_path)),
    )
    if errors:
        raise ConfigError(_format(errors[0]))
    kind = cfg["kind"]
    for name in REQUIRED[kind]:
        if not _lookup(cfg, name):
            raise ConfigError(f"{name}: required field is missing for kind {kind!r}")
    eps = cfg.get("eps")
    if kind in _SWEEP:
        if not isinstance(eps, list) or len(eps) < _SWEEP[kind]:
            raise ConfigError(f"eps: kind {kind!r} needs a list of at least {_SWEEP[kind]} values")
        if any(b >= a for a, b in zip(eps[:-1], eps[1:])):
            raise ConfigError("eps: sweep must be strictly decreasing")
    elif eps is not None and not isinstance(eps, (int, float)):
        raise ConfigError(f"eps: kind {kind!r} takes a single value")
    centers = cfg.get("bump", {}).get("centers")
    if centers and len({len(c) for c in centers}) != 1:
        raise ConfigError("bump.centers: all centres must have the same dimension")
    phases = cfg.get("bump", {}).get("phases")
    if phases is not None and centers is not None and len(phases) != len(centers):
        raise ConfigError("bump.phases: need one phase per centre")
    if "box" in cfg and len({len(c) for c in cfg["box"]}) != 1:
        raise ConfigError("box: corners must have the same dimension")
    return _merge(DEFAULTS, cfg)


def load(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<root>: {path} is not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"<root>: cannot read {path} ({exc.strerror})") from exc
    return raw


def config_hash(cfg: dict) -> str:
    """sha256 of the canonical JSON form."""
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
