"""Grounded finding records and the JSONL corpus format.

One sample per line::

    {"image_id": "toy-000001", "image_ref": "images/toy-000001.png",
     "findings": [{"ffl": "...", "box": [x, y, w, h], "e": 1, "provenance": "original"}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .ffl import FFL, parse_ffl
from .geometry import BBox

PROVENANCES = ("original", "reversal", "relocate", "substitution")


@dataclass(frozen=True)
class GroundedFinding:
    ffl: FFL
    box: BBox
    veracity: int
    provenance: str = "original"

    def __post_init__(self):
        if self.veracity not in (0, 1):
            raise ValueError(f"veracity must be 0 or 1, got {self.veracity!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def key(self) -> tuple[FFL, BBox]:
        return (self.ffl, self.box)

    def to_json(self) -> dict:
        return {
            "ffl": self.ffl.serialize(),
            "box": self.box.as_list(),
            "e": self.veracity,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, d: dict) -> "GroundedFinding":
        return cls(
            ffl=parse_ffl(d["ffl"]),
            box=BBox.from_list(d["box"]),
            veracity=int(d["e"]),
            provenance=d.get("provenance", "original"),
        )


@dataclass(frozen=True)
class Sample:
    image_id: str
    image_ref: str
    findings_real: tuple[GroundedFinding, ...] = ()
    findings_fake: tuple[GroundedFinding, ...] = field(default=())

    def __post_init__(self):
        if any(g.veracity != 1 for g in self.findings_real):
            raise ValueError(f"{self.image_id}: real findings must have e=1")
        if any(g.veracity != 0 for g in self.findings_fake):
            raise ValueError(f"{self.image_id}: fake findings must have e=0")

    @property
    def findings(self) -> tuple[GroundedFinding, ...]:
        return self.findings_real + self.findings_fake

    def real_cores(self) -> set[str]:
        return {g.ffl.core_finding for g in self.findings_real}

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "image_ref": self.image_ref,
            "findings": [g.to_json() for g in self.findings],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Sample":
        found = [GroundedFinding.from_json(x) for x in d["findings"]]
        return cls(
            image_id=d["image_id"],
            image_ref=d.get("image_ref", ""),
            findings_real=tuple(g for g in found if g.veracity == 1),
            findings_fake=tuple(g for g in found if g.veracity == 0),
        )


def dumps_sample(s: Sample) -> str:
    return json.dumps(s.to_json(), sort_keys=True, separators=(",", ":"))


def write_jsonl(path: str | Path, samples: Iterable[Sample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(dumps_sample(s))
            fh.write("\n")


def iter_jsonl(path: str | Path) -> Iterator[Sample]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield Sample.from_json(json.loads(line))


def read_jsonl(path: str | Path) -> list[Sample]:
    return list(iter_jsonl(path))
