"""Serialization: exact JSON, reproducible CSV, config validation."""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from dataclasses import asdict, is_dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema
import numpy as np

from .algebra import IntMatrix, TorusPoint, parse_rational
from .errors import ConfigInvalid
from .walk import WalkSpec

__all__ = [
    "COMMANDS",
    "CONFIG_SCHEMA",
    "dumps",
    "fmt_float",
    "rational_str",
    "spec_from_json",
    "spec_to_json",
    "validate_config",
    "write_csv",
    "write_json",
]

COMMANDS = [
    "orbit", "height", "pq-distance", "simulate", "decay-scan", "weyl", "trap-check", "lyapunov",
    "energy", "ch-fit", "margulis-check", "decompose", "fp-census", "fp-evolve", "fp-gap",
    "fp-dichotomy", "solzlin", "verify-all",
]

_RATIONAL = {"oneOf": [{"type": "string", "pattern": r"^\s*-?\d+(\s*/\s*\d+)?\s*$"}, {"type": "integer"}]}
_COORD = {"oneOf": [_RATIONAL, {"type": "number"}]}

_INLINE_SPEC = {
    "type": "object",
    "additionalProperties": False,
    "required": ["labels", "weights", "matrices"],
    "properties": {
        "labels": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "weights": {"type": "array", "items": _RATIONAL, "minItems": 1},
        "matrices": {"type": "array", "items": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}}},
        "translations": {"type": "array", "items": {"type": "array", "items": _COORD}},
        "p": {"type": "integer", "minimum": 2},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": COMMANDS},
        "spec": {"oneOf": [{"type": "string"}, _INLINE_SPEC]},
        "seed": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["exact", "float"]},
        "out": {"type": "string"},
        "parameters": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x": {"type": "string"},
                "y": {"type": "string"},
                "n": {"type": "integer", "minimum": 0},
                "n_list": {
                    "oneOf": [
                        {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                        {"type": "string", "pattern": r"^\d+:\d+(:\d+)?$"},
                    ]
                },
                "N": {"type": "integer", "minimum": 1},
                "a": {"type": "string"},
                "t": {"type": "number"},
                "q": {"type": "integer", "minimum": 1},
                "Q": {"type": "integer", "minimum": 1},
                "C": {"type": "number"},
                "rho": {"type": "number", "exclusiveMinimum": 0},
                "r": {"type": "number", "exclusiveMinimum": 0},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "lambda": {"type": "number", "exclusiveMinimum": 0},
                "m": {"type": "integer", "minimum": 1},
                "k": {"type": "integer", "minimum": 1},
                "p": {"type": "integer", "minimum": 2},
                "A_max": {"type": "integer", "minimum": 1},
                "eps": {"type": "number"},
                "C2": {"type": "number", "minimum": 0},
                "cap": {"type": "integer", "minimum": 1},
                "n_pairs": {"type": "integer", "minimum": 1},
                "n_walk": {"type": "integer", "minimum": 1},
                "forms": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
                "point": {"type": "string"},
                "points": {"type": "array", "items": {"type": "string"}},
                "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "only": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 13}},
            },
        },
    },
}


def validate_config(cfg: dict) -> dict:
    """Reject unknown or malformed fields before anything runs."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{path}: {exc.message}") from None
    return cfg


def rational_str(v) -> str:
    v = Fraction(v)
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def fmt_float(x) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(x))


def _encode(obj):
    if isinstance(obj, Fraction):
        return rational_str(obj)
    if isinstance(obj, TorusPoint):
        return [rational_str(c) if obj.exact else float(c) for c in obj.coords]
    if isinstance(obj, IntMatrix):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if is_dataclass(obj):
        return asdict(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    """UTF-8 JSON with sorted keys; rationals as "num/den" strings."""
    raw = json.loads(json.dumps(obj, default=_encode, allow_nan=True))
    return json.dumps(_clean(raw), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> Path:
    _atomic_write(Path(path), dumps(obj))
    return Path(path)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    if isinstance(v, Fraction):
        return rational_str(v)
    if isinstance(v, (tuple, list)):
        return " ".join(_cell(x) for x in v)
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """RFC 4180 CSV with shortest round-trip floats, written atomically."""
    _atomic_write(Path(path), csv_text(header, rows))
    return Path(path)


def spec_to_json(spec: WalkSpec) -> dict:
    return {
        "labels": list(spec.labels),
        "weights": [rational_str(w) for w in spec.weights],
        "matrices": [m.tolist() for m in spec.matrices],
        "translations": [_encode(t) for t in spec.translations],
    }


def spec_from_json(obj: dict) -> WalkSpec:
    trans = obj.get("translations")
    if trans is not None:
        pts = []
        for t in trans:
            if all(isinstance(c, (str, int)) for c in t):
                pts.append(TorusPoint.exact_point(parse_rational(c) for c in t))
            else:
                pts.append(TorusPoint.approx_point(float(Fraction(c)) if isinstance(c, str) else float(c) for c in t))
        trans = pts
    return WalkSpec.build(obj["labels"], obj["weights"], obj["matrices"], trans)
