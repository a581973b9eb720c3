"""Fine-grained finding labels (FFL) and the finding lexicon.

An FFL is the pipe-delimited structured form of a report sentence::

    anatomicalfinding | no | vascular congestion | lung

i.e. ``type | polarity | core finding | anatomy``. The three-field form
without anatomy is also accepted.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

POLARITIES = ("yes", "no")
UNSPECIFIED = "unspecified"
DEFAULT_TYPE = "anatomicalfinding"

_SPACES = re.compile(r"\s+")


class FFLParseError(ValueError):
    pass


class UnknownTermError(KeyError):
    """Raised when a term cannot be resolved against the lexicon."""

    def __init__(self, term: str, kind: str = "finding"):
        super().__init__(term)
        self.term = term
        self.kind = kind

    def __str__(self) -> str:
        return f"unknown {self.kind}: {self.term!r}"


def fold(text: str) -> str:
    """Lower-case, trim and collapse internal whitespace."""
    return _SPACES.sub(" ", text.strip().lower())


@dataclass(frozen=True, order=True)
class FFL:
    finding_type: str
    polarity: str
    core_finding: str
    anatomy: str = UNSPECIFIED

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise FFLParseError(f"polarity must be one of {POLARITIES}, got {self.polarity!r}")

    @property
    def positive(self) -> bool:
        return self.polarity == "yes"

    def serialize(self) -> str:
        return " | ".join((self.finding_type, self.polarity, self.core_finding, self.anatomy))

    def serialize3(self) -> str:
        """Three-field projection without anatomy."""
        return " | ".join((self.finding_type, self.polarity, self.core_finding))

    def __str__(self) -> str:
        return self.serialize()


def parse_ffl(text: str) -> FFL:
    parts = [fold(p) for p in text.split("|")]
    if len(parts) not in (3, 4):
        raise FFLParseError(f"expected 3 or 4 '|'-separated fields, got {len(parts)}: {text!r}")
    if any(not p for p in parts):
        raise FFLParseError(f"empty field in {text!r}")
    if parts[1] not in POLARITIES:
        raise FFLParseError(f"unknown polarity {parts[1]!r} in {text!r}")
    if len(parts) == 3:
        parts.append(UNSPECIFIED)
    return FFL(*parts)


def negate(f: FFL) -> FFL:
    return replace(f, polarity="no" if f.polarity == "yes" else "yes")


@dataclass(frozen=True)
class Lexicon:
    """Canonical findings with synonyms, the anatomical region catalogue and
    pairwise contradictions (stored symmetrically)."""

    findings: tuple[str, ...]
    synonyms: dict[str, str]
    regions: tuple[str, ...]
    contradictions: dict[str, frozenset[str]]
    finding_types: dict[str, str] = field(default_factory=dict)
    version: str = "unversioned"

    def __post_init__(self):
        if len(set(self.regions)) != len(self.regions):
            raise ValueError("region names must be unique")

    @classmethod
    def from_dict(cls, data: dict) -> "Lexicon":
        unknown = set(data) - {"version", "findings", "regions", "contradictions", "finding_types"}
        if unknown:
            raise ValueError(f"unknown lexicon keys: {sorted(unknown)}")
        findings = tuple(sorted(fold(k) for k in data["findings"]))
        if len(set(findings)) != len(findings):
            raise ValueError("duplicate canonical findings after folding")
        synonyms: dict[str, str] = {f: f for f in findings}
        for canon, syns in data["findings"].items():
            canon = fold(canon)
            for s in syns:
                s = fold(s)
                if synonyms.get(s, canon) != canon:
                    raise ValueError(f"synonym {s!r} maps to both {synonyms[s]!r} and {canon!r}")
                synonyms[s] = canon
        regions = tuple(fold(r) for r in data["regions"])
        contra: dict[str, set[str]] = {f: set() for f in findings}
        for a, bs in data.get("contradictions", {}).items():
            a = fold(a)
            for b in bs:
                b = fold(b)
                if a not in contra or b not in contra:
                    raise ValueError(f"contradiction references unknown finding: {a!r} / {b!r}")
                contra[a].add(b)
                contra[b].add(a)
        types = {fold(k): fold(v) for k, v in data.get("finding_types", {}).items()}
        return cls(
            findings=findings,
            synonyms=synonyms,
            regions=regions,
            contradictions={k: frozenset(v) for k, v in contra.items()},
            finding_types=types,
            version=str(data.get("version", "unversioned")),
        )

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Lexicon":
        if path is None:
            text = resources.files("groundcheck.data").joinpath("lexicon.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        syn: dict[str, list[str]] = {f: [] for f in self.findings}
        for s, canon in sorted(self.synonyms.items()):
            if s != canon:
                syn[canon].append(s)
        contra = {k: sorted(v) for k, v in sorted(self.contradictions.items()) if v}
        return {
            "version": self.version,
            "findings": syn,
            "finding_types": dict(sorted(self.finding_types.items())),
            "regions": list(self.regions),
            "contradictions": contra,
        }

    def type_of(self, finding: str) -> str:
        return self.finding_types.get(finding, DEFAULT_TYPE)

    def make(self, polarity: str, finding: str, anatomy: str = UNSPECIFIED) -> FFL:
        return FFL(self.type_of(finding), polarity, finding, anatomy)

    def contradicts(self, a: str, b: str) -> bool:
        return b in self.contradictions.get(a, ())

    def has_region(self, name: str) -> bool:
        return name in self.regions


def normalize_finding(raw: str, lex: Lexicon) -> str:
    key = fold(raw)
    try:
        return lex.synonyms[key]
    except KeyError:
        raise UnknownTermError(raw) from None


def normalize_ffl(f: FFL, lex: Lexicon) -> FFL:
    """Map the core finding to canonical vocabulary and check the anatomy."""
    core = normalize_finding(f.core_finding, lex)
    if f.anatomy != UNSPECIFIED and not lex.has_region(f.anatomy):
        raise UnknownTermError(f.anatomy, kind="region")
    return replace(f, core_finding=core)
