"""Experiment configuration: sectioned key=value files or the equivalent
JSON, fully validated with every error reported at once."""

from __future__ import annotations

import configparser
import difflib
import io
import json
import os
from dataclasses import dataclass, field as _dcfield, asdict

KINDS = ("sample-field", "covariance-check", "ids", "trace-ids",
         "wegner-eval", "wegner-verify", "asymptotics", "localize")
FORMATS = ("csv", "json", "both")
BCS = ("dirichlet", "neumann")

WORKERS_ENV = "GAUSSDOS_WORKERS"


class ConfigError(Exception):
    """Carries the full list of validation problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    kind: str
    d: int = 1
    L: float = 16.0
    h: float = 0.125
    sigma: float = 1.0
    xi: float = 1.0
    ell: float = None
    bc: str = "dirichlet"
    energies: list = _dcfield(default_factory=list)
    M: int = 2
    master_seed: int = 0
    workers: int = 0
    out_dir: str = "out"
    format: str = "both"
    offsets: list = _dcfield(default_factory=list)
    window_side: float = None
    energy: float = None
    t: float = None
    energy_pairs: list = _dcfield(default_factory=list)
    low_window: list = None
    mid_window: list = None

    def to_dict(self):
        return asdict(self)


# (section, key) -> (attribute, parser)
def _parse_float_list(text):
    """'lo:hi:num' linspace shorthand or comma-separated values."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        lo, hi, num = text.split(":")
        lo, hi, num = float(lo), float(hi), int(num)
        if num < 2:
            return [lo]
        step = (hi - lo) / (num - 1)
        return [lo + i * step for i in range(num)]
    return [float(x) for x in text.split(",")]


def _parse_offsets(text):
    out = []
    for part in str(text).split(";"):
        part = part.strip()
        if part:
            out.append([int(x) for x in part.split(",")])
    return out


def _parse_pairs(text):
    out = []
    for part in str(text).split(";"):
        part = part.strip()
        if part:
            trip = [float(x) for x in part.split(",")]
            if len(trip) != 3:
                raise ValueError(f"triple {part!r} must have 3 energies")
            out.append(trip)
    return out


def _parse_window(text):
    vals = [float(x) for x in str(text).split(",")]
    if len(vals) != 2:
        raise ValueError(f"window {text!r} must be 'lo,hi'")
    return vals


SCHEMA = {
    ("experiment", "kind"): ("kind", str),
    ("kernel", "sigma"): ("sigma", float),
    ("kernel", "xi"): ("xi", float),
    ("kernel", "ell"): ("ell", float),
    ("grid", "d"): ("d", int),
    ("grid", "L"): ("L", float),
    ("grid", "h"): ("h", float),
    ("run", "bc"): ("bc", str),
    ("run", "energies"): ("energies", _parse_float_list),
    ("run", "M"): ("M", int),
    ("run", "master_seed"): ("master_seed", int),
    ("run", "workers"): ("workers", int),
    ("run", "out_dir"): ("out_dir", str),
    ("run", "format"): ("format", str),
    ("run", "offsets"): ("offsets", _parse_offsets),
    ("run", "window_side"): ("window_side", float),
    ("run", "energy"): ("energy", float),
    ("run", "t"): ("t", float),
    ("run", "energy_pairs"): ("energy_pairs", _parse_pairs),
    ("run", "low_window"): ("low_window", _parse_window),
    ("run", "mid_window"): ("mid_window", _parse_window),
}

_KNOWN_KEYS = sorted({key for _, key in SCHEMA})


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def parse_config(text):
    """Parse INI-style sections or a JSON object into a validated config.

    All problems are collected and raised together as one ConfigError.
    """
    raw, errors = _read_sections(text)
    values = {}
    if not errors:
        for (section, key), val in raw.items():
            if (section, key) not in SCHEMA:
                errors.append(_unknown_key_error(section, key))
                continue
            attr, caster = SCHEMA[(section, key)]
            try:
                values[attr] = caster(val) if isinstance(val, str) else _coerce(caster, val)
            except (ValueError, TypeError) as exc:
                errors.append(f"[{section}] {key}: {exc}")
    if errors:
        raise ConfigError(errors)
    if "kind" not in values:
        raise ConfigError(["[experiment] kind is required"])
    cfg = ExperimentConfig(**values)
    if cfg.workers == 0:
        cfg.workers = default_workers()
    validate(cfg)
    return cfg


def _coerce(caster, val):
    """Apply the schema parser to an already-structured (JSON) value."""
    if not isinstance(val, list):
        return caster(val)
    if caster is _parse_float_list:
        return [float(x) for x in val]
    if caster is _parse_offsets:
        return [[int(c) for c in (off if isinstance(off, list) else [off])]
                for off in val]
    if caster is _parse_pairs:
        out = []
        for trip in val:
            trip = [float(c) for c in trip]
            if len(trip) != 3:
                raise ValueError(f"triple {trip!r} must have 3 energies")
            out.append(trip)
        return out
    if caster is _parse_window:
        vals = [float(c) for c in val]
        if len(vals) != 2:
            raise ValueError(f"window {val!r} must be [lo, hi]")
        return vals
    raise TypeError(f"unexpected list value {val!r}")


def _read_sections(text):
    errors = []
    stripped = text.lstrip()
    raw = {}
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            return {}, [f"invalid JSON: {exc}"]
        if not isinstance(doc, dict):
            return {}, ["JSON config must be an object of sections"]
        for section, body in doc.items():
            if not isinstance(body, dict):
                errors.append(f"section {section!r} must be an object")
                continue
            for key, val in body.items():
                raw[(section, key)] = val
    else:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            return {}, [f"invalid config syntax: {exc}"]
        for section in parser.sections():
            for key, val in parser.items(section):
                raw[(section, key)] = val
    return raw, errors


def _unknown_key_error(section, key):
    close = difflib.get_close_matches(key, _KNOWN_KEYS, n=1)
    hint = f"; did you mean {close[0]!r}?" if close else ""
    return f"[{section}] unknown key {key!r}{hint}"


def validate(cfg):
    errors = []
    if cfg.kind not in KINDS:
        errors.append(f"kind must be one of {', '.join(KINDS)}, got {cfg.kind!r}")
    if cfg.d not in (1, 2, 3):
        errors.append("dimension d must be 1, 2 or 3")
    if cfg.L <= 0:
        errors.append("side length must be positive")
    if cfg.h <= 0:
        errors.append("spacing must be positive")
    elif cfg.L > 0 and abs(round(cfg.L / cfg.h) * cfg.h - cfg.L) > 1e-9 * cfg.L:
        errors.append("side length must be a multiple of the spacing")
    if cfg.sigma <= 0:
        errors.append("sigma must be positive")
    if cfg.xi <= 0:
        errors.append("xi must be positive")
    if cfg.ell is not None and cfg.ell <= 0:
        errors.append("ell must be positive")
    if cfg.bc not in BCS:
        errors.append(f"bc must be one of {', '.join(BCS)}")
    if cfg.format not in FORMATS:
        errors.append(f"format must be one of {', '.join(FORMATS)}")
    if cfg.M < 1:
        errors.append("M must be at least 1")
    if cfg.workers < 1:
        errors.append("workers must be at least 1")
    if cfg.master_seed < 0:
        errors.append("master_seed must be a non-negative 64-bit integer")
    needs_energies = {"ids", "wegner-eval"}
    if cfg.kind in needs_energies and not cfg.energies:
        errors.append(f"{cfg.kind} requires run.energies")
    if cfg.kind == "covariance-check" and not cfg.offsets:
        errors.append("covariance-check requires run.offsets")
    if cfg.kind == "trace-ids":
        if cfg.window_side is None or cfg.energy is None:
            errors.append("trace-ids requires run.window_side and run.energy")
    if cfg.kind == "wegner-verify" and not cfg.energy_pairs:
        errors.append("wegner-verify requires run.energy_pairs")
    if cfg.kind == "localize" and (cfg.low_window is None or cfg.mid_window is None):
        errors.append("localize requires run.low_window and run.mid_window")
    if errors:
        raise ConfigError(errors)
    return cfg


def serialize(cfg):
    """Write the config back out in the sectioned text form; the result
    parses to an identical structure."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    sections = {}
    for (section, key), (attr, _) in SCHEMA.items():
        val = getattr(cfg, attr)
        if val is None or val == [] :
            continue
        sections.setdefault(section, {})[key] = _format_value(attr, val)
    for section in ("experiment", "kernel", "grid", "run"):
        if section in sections:
            parser[section] = sections[section]
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _format_value(attr, val):
    if attr == "energies":
        return ",".join(repr(float(v)) for v in val)
    if attr == "offsets":
        return ";".join(",".join(str(int(c)) for c in off) for off in val)
    if attr == "energy_pairs":
        return ";".join(",".join(repr(float(c)) for c in trip) for trip in val)
    if attr in ("low_window", "mid_window"):
        return ",".join(repr(float(c)) for c in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)
