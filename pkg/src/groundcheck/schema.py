"""JSON schemas for the pipeline's files and a line-by-line validator."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .corpus import PROVENANCES, Sample
from .ffl import FFLParseError, Lexicon, parse_ffl

_BOX = {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 4, "maxItems": 4}

FINDING = {
    "type": "object",
    "required": ["ffl", "box", "e"],
    "properties": {
        "ffl": {"type": "string"},
        "box": _BOX,
        "e": {"enum": [0, 1]},
        "provenance": {"enum": list(PROVENANCES)},
    },
    "additionalProperties": False,
}

SAMPLE = {
    "type": "object",
    "required": ["image_id", "image_ref", "findings"],
    "properties": {
        "image_id": {"type": "string", "minLength": 1},
        "image_ref": {"type": "string"},
        "findings": {"type": "array", "items": FINDING},
    },
    "additionalProperties": False,
}

REPORT = {
    "type": "object",
    "required": ["image_id", "findings"],
    "properties": {
        "image_id": {"type": "string", "minLength": 1},
        "image_ref": {"type": "string"},
        "findings": {"type": "array", "items": {"type": "string"}, "minItems": 1},
    },
    "additionalProperties": False,
}

LEXICON = {
    "type": "object",
    "required": ["findings", "regions"],
    "properties": {
        "version": {"type": "string"},
        "findings": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "string"}}},
        "finding_types": {"type": "object", "additionalProperties": {"type": "string"}},
        "regions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "contradictions": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "string"}}},
    },
    "additionalProperties": False,
}

CHECKPOINT = {
    "type": "object",
    "required": ["format", "format_version", "config", "seed", "lexicon", "params", "metrics"],
    "properties": {
        "format": {"const": "groundcheck-checkpoint"},
        "format_version": {"const": 1},
        "config": {"type": "object"},
        "seed": {"type": "integer"},
        "lexicon": LEXICON,
        "metrics": {"type": "array", "items": {"type": "object"}},
        "params": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["dtype", "shape", "data"],
                "properties": {"dtype": {"type": "string"}, "shape": {"type": "array"}, "data": {"type": "string"}},
            },
        },
    },
}

KINDS = ("gold", "corpus", "reports", "lexicon", "checkpoint")


def _errors(schema: dict, obj, where: str) -> list[str]:
    v = jsonschema.Draft202012Validator(schema)
    return [f"{where}: {'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in v.iter_errors(obj)]


def _check_sample(d: dict, where: str, gold: bool) -> list[str]:
    try:
        s = Sample.from_json(d)
    except (FFLParseError, ValueError, KeyError) as exc:
        return [f"{where}: {exc}"]
    errs = []
    if gold and s.findings_fake:
        errs.append(f"{where}: gold sample contains fake findings")
    keys = [g.key for g in s.findings]
    if len(keys) != len(set(keys)):
        errs.append(f"{where}: duplicate (ffl, box) pair")
    for g in s.findings:
        if g.veracity == 1 and g.box.w * g.box.h <= 0:
            errs.append(f"{where}: real finding {g.ffl} has an empty box")
        if (g.provenance == "reversal") != g.box.is_zero:
            errs.append(f"{where}: zero box must mark exactly the reversal fakes ({g.ffl})")
    return errs


def validate_file(kind: str, path: str | Path) -> list[str]:
    """Return a list of human-readable problems; empty when valid."""
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")
    path = Path(path)
    if kind in ("lexicon", "checkpoint"):
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            return [f"{path}: invalid JSON: {exc}"]
        errs = _errors(LEXICON if kind == "lexicon" else CHECKPOINT, obj, str(path))
        if not errs and kind == "lexicon":
            try:
                Lexicon.from_dict(obj)
            except ValueError as exc:
                errs.append(f"{path}: {exc}")
        return errs
    errs: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{n}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errs.append(f"{where}: invalid JSON: {exc}")
                continue
            if kind == "reports":
                line_errs = _errors(REPORT, obj, where)
                if not line_errs:
                    for text in obj["findings"]:
                        try:
                            parse_ffl(text)
                        except FFLParseError as exc:
                            line_errs.append(f"{where}: {exc}")
            else:
                line_errs = _errors(SAMPLE, obj, where)
                if not line_errs:
                    line_errs = _check_sample(obj, where, gold=kind == "gold")
            errs.extend(line_errs)
    return errs
