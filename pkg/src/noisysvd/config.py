"""Flat YAML run configurations with strict key checking."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import yaml

from .errors import ConfigError

COMMANDS = ("bound", "verify", "plan", "classify", "sweep")
FORMATS = ("json", "csv", "both")


@dataclass(frozen=True)
class Field:
    kind: type
    default: Any = None
    check: Callable[[Any], bool] | None = None
    rule: str = ""
    seq: bool = False


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


_BOUND = {
    "eps": Field(float, None, _nonneg, "must be >= 0"),
    "n": Field(int, None, lambda x: x >= 2, "must be >= 2"),
    "k": Field(int, None, lambda x: x >= 1, "must be >= 1"),
    "sigma1": Field(float, None, lambda x: x > 0, "entries must be > 0", seq=True),
    "gamma": Field(float, 1.0, _nonneg, "must be >= 0"),
    "beta": Field(float, 0.25, lambda x: 0 < x < 0.5, "must lie in the open range (0, 1/2)"),
    "u1_max": Field(float, 1.0, lambda x: 0 < x <= 1, "must lie in (0, 1]"),
}

_VERIFY = {
    "n": _BOUND["n"],
    "k": _BOUND["k"],
    "spectrum": Field(float, None, lambda x: x > 0, "entries must be > 0", seq=True),
    "eps": _BOUND["eps"],
    "gamma": _BOUND["gamma"],
    "beta": _BOUND["beta"],
    "basis_seed": Field(int, 0, _nonneg, "must be >= 0"),
    "noise_seed": Field(int, 0, _nonneg, "must be >= 0"),
    "trials": Field(int, 100, lambda x: x >= 1, "must be >= 1"),
    "scale": Field(str, "unit", lambda x: x in ("unit", "problem"), "must be `unit` or `problem`"),
    "alignment": Field(str, "left", lambda x: x in ("left", "joint"), "must be `left` or `joint`"),
}

_PLAN = {
    "eps": Field(float, 0.0, _nonneg, "must be >= 0"),
    "n": Field(int, 100, lambda x: x >= 2, "must be >= 2"),
    "beta": _BOUND["beta"],
    "u1_max": _BOUND["u1_max"],
    "limit": Field(float, 1.0, _pos, "must be > 0"),
    "alpha": Field(float, None, _pos, "must be > 0"),
}

_MPSK = {
    "M_order": Field(int, 4, lambda x: x in (2, 4, 8, 16, 32), "must be one of 2, 4, 8, 16, 32"),
    "f_c": Field(float, 1e9, _pos, "must be > 0"),
    "T": Field(float, 1e-7, _pos, "must be > 0"),
    "theta_c": Field(float, 0.0, math.isfinite, "must be finite"),
    "L": Field(int, 21, lambda x: x >= 3, "must be >= 3"),
    "N_sym": Field(int, 200, lambda x: x >= 3, "must be >= 3"),
    "N0": Field(float, None, _nonneg, "must be >= 0"),
    "snr_db": Field(float, None, math.isfinite, "must be finite"),
    "seed": Field(int, 0, _nonneg, "must be >= 0"),
    "noise_factor": Field(float, 0.5, _pos, "must be > 0"),
    "alpha": Field(float, 0.5, _pos, "must be > 0"),
    "guard": Field(float, 0.1, lambda x: 0 < x < 1, "must lie in (0, 1)"),
    "snap": Field(bool, False),
}

_SWEEP = {
    **{k: v for k, v in _MPSK.items() if k not in ("N0", "snr_db", "M_order", "snap")},
    "snr_grid": Field(float, None, math.isfinite, "entries must be finite", seq=True),
    "runs": Field(int, 20, lambda x: x >= 1, "must be >= 1"),
    "orders": Field(int, [2, 4, 8], lambda x: x in (2, 4, 8, 16, 32),
                    "entries must be one of 2, 4, 8, 16, 32", seq=True),
}

SCHEMAS = {"bound": _BOUND, "verify": _VERIFY, "plan": _PLAN, "classify": _MPSK, "sweep": _SWEEP}
REQUIRED = {
    "bound": ("eps", "n", "k", "sigma1"),
    "verify": ("n", "k", "spectrum", "eps"),
    "plan": (),
    "classify": (),
    "sweep": ("snr_grid",),
}


def _key_lines(text: str) -> dict:
    """Line number (1-based) of every top-level key, when parseable."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def _coerce(name, value, spec: Field, line):
    def one(v):
        if spec.kind is bool:
            if not isinstance(v, bool):
                raise ConfigError(f"expected true/false, got {v!r}", name, line)
            return v
        if spec.kind is str:
            if not isinstance(v, str):
                raise ConfigError(f"expected a string, got {v!r}", name, line)
            out = v
        elif spec.kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"expected an integer, got {v!r}", name, line)
            out = v
        else:
            if isinstance(v, str):
                # YAML 1.1 leaves exponents without a sign (1e9) as strings
                try:
                    v = float(v)
                except ValueError:
                    pass
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"expected a number, got {v!r}", name, line)
            out = float(v)
            if not math.isfinite(out):
                raise ConfigError(f"must be finite (got {v!r})", name, line)
        if spec.check is not None and not spec.check(out):
            raise ConfigError(f"{spec.rule} (got {v!r})", name, line)
        return out

    if spec.seq:
        if not isinstance(value, list) or not value:
            raise ConfigError(f"expected a non-empty list, got {value!r}", name, line)
        return [one(v) for v in value]
    return one(value)


def parse_config(command: str, text: str = "", overrides: dict | None = None) -> dict:
    """Validate a flat YAML document for ``command`` and fill defaults.

    ``overrides`` (from command-line flags) win over file values and are
    validated the same way.
    """
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    try:
        raw = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a flat key-value mapping", line=1)
    lines = _key_lines(text)
    schema = SCHEMAS[command]
    merged = {**raw, **(overrides or {})}

    out = {}
    for key, value in merged.items():
        if key not in schema:
            raise ConfigError(f"unknown key for `{command}`", key, lines.get(key))
        if isinstance(value, dict):
            raise ConfigError("nested mappings are not allowed", key, lines.get(key))
        out[key] = _coerce(key, value, schema[key], lines.get(key))
    for key in REQUIRED[command]:
        if key not in out:
            raise ConfigError("required key is missing", key)
    for key, spec in schema.items():
        out.setdefault(key, spec.default)
    _cross_check(command, out)
    return out


def _cross_check(command: str, cfg: dict):
    if command == "bound":
        if not cfg["k"] < cfg["n"]:
            raise ConfigError("k must be smaller than n", "k")
        if len(cfg["sigma1"]) != cfg["k"]:
            raise ConfigError(f"needs exactly k={cfg['k']} entries", "sigma1")
    elif command == "verify":
        if not cfg["k"] < cfg["n"]:
            raise ConfigError("k must be smaller than n", "k")
        s = cfg["spectrum"]
        if len(s) != cfg["k"]:
            raise ConfigError(f"needs exactly k={cfg['k']} entries", "spectrum")
        if any(a < b for a, b in zip(s, s[1:])):
            raise ConfigError("entries must be non-increasing", "spectrum")
    elif command == "classify":
        if cfg["N0"] is not None and cfg["snr_db"] is not None:
            raise ConfigError("give either N0 or snr_db, not both", "snr_db")


def load_config(command: str, path: str | Path | None, overrides: dict | None = None) -> dict:
    text = Path(path).read_text() if path is not None else ""
    return parse_config(command, text, overrides)
