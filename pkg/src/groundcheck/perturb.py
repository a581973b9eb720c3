"""Synthetic real/fake corpus generation by perturbing gold findings.

Every positive gold finding spawns up to three kinds of fakes:

* reversal      - polarity flipped, box zeroed;
* relocation    - same finding moved to another location observed for it
                  elsewhere in the corpus;
* substitution  - a finding absent from the image, placed at one of its own
                  observed locations.

Locations only ever come from the per-finding pools, so every fake box is a
box that finding really occupies in some image.
"""

from __future__ import annotations

import zlib
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .corpus import GroundedFinding, Sample
from .ffl import FFL, Lexicon, negate
from .geometry import BBox, iou

DEFAULT_OVERLAP_THRESHOLD = 0.2


class PerturbationUnavailable(LookupError):
    pass


class RelocationUnavailable(PerturbationUnavailable):
    pass


class SubstitutionUnavailable(PerturbationUnavailable):
    pass


@dataclass(frozen=True)
class PoolEntry:
    box: BBox
    anatomy: str


class LocationPool:
    """Per-finding list of every location the finding was observed at."""

    def __init__(self, entries: dict[str, list[PoolEntry]] | None = None):
        self._entries: dict[str, list[PoolEntry]] = entries or {}

    def add(self, finding: str, entry: PoolEntry) -> None:
        self._entries.setdefault(finding, []).append(entry)

    def entries(self, finding: str) -> list[PoolEntry]:
        return self._entries.get(finding, [])

    def boxes(self, finding: str) -> list[BBox]:
        return [e.box for e in self.entries(finding)]

    def findings(self) -> list[str]:
        return list(self._entries)

    def sizes(self) -> dict[str, int]:
        return {k: len(v) for k, v in self._entries.items()}

    def __contains__(self, finding: str) -> bool:
        return bool(self._entries.get(finding))

    def __len__(self) -> int:
        return len(self._entries)


def build_pools(gold: Iterable[Sample]) -> LocationPool:
    """Accumulate the boxes of positive real findings, in corpus order.

    Negative mentions are skipped: their box marks where a finding is denied,
    not where it occurs.
    """
    pool = LocationPool()
    for s in gold:
        if s.findings_fake:
            raise ValueError(f"gold sample {s.image_id} contains fake findings")
        for g in s.findings_real:
            if g.ffl.positive:
                pool.add(g.ffl.core_finding, PoolEntry(g.box, g.ffl.anatomy))
    return pool


def perturb_reversal(g: GroundedFinding) -> GroundedFinding:
    if g.veracity != 1:
        raise ValueError("reversal applies to real findings only")
    return GroundedFinding(negate(g.ffl), BBox.zero(), 0, "reversal")


def _taken(sample: Sample | None) -> tuple[set, set[FFL]]:
    if sample is None:
        return set(), set()
    return {f.key for f in sample.findings}, {f.ffl for f in sample.findings_real}


def eligible_relocations(
    g: GroundedFinding,
    pool: LocationPool,
    sample: Sample | None = None,
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD,
) -> list[int]:
    """Indices into ``pool.entries(finding)`` that count as a new position."""
    keys, real_ffls = _taken(sample)
    ok: dict[PoolEntry, bool] = {}
    out = []
    for i, e in enumerate(pool.entries(g.ffl.core_finding)):
        if e not in ok:
            moved = replace(g.ffl, anatomy=e.anatomy)
            ok[e] = not (
                iou(e.box, g.box) >= overlap_threshold or moved in real_ffls or (moved, e.box) in keys
            )
        if ok[e]:
            out.append(i)
    return out


def perturb_relocate(
    g: GroundedFinding,
    pool: LocationPool,
    rng: np.random.Generator,
    sample: Sample | None = None,
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD,
) -> GroundedFinding:
    """Move ``g`` to a uniformly drawn pool location overlapping it by
    less than ``overlap_threshold`` IoU."""
    idx = eligible_relocations(g, pool, sample, overlap_threshold)
    if not idx:
        raise RelocationUnavailable(g.ffl.serialize())
    e = pool.entries(g.ffl.core_finding)[idx[int(rng.integers(len(idx)))]]
    return GroundedFinding(replace(g.ffl, anatomy=e.anatomy), e.box, 0, "relocate")


def substitution_candidates(sample: Sample, pool: LocationPool, lex: Lexicon) -> list[str]:
    present = sample.real_cores()
    out = []
    for f in lex.findings:
        if f in present or f not in pool:
            continue
        if any(lex.contradicts(f, r) for r in present):
            continue
        out.append(f)
    return out


def perturb_substitute(
    s: Sample,
    g: GroundedFinding,
    pool: LocationPool,
    lex: Lexicon,
    rng: np.random.Generator,
) -> GroundedFinding:
    """Swap in a finding absent from ``s`` at one of that finding's own
    pool locations. The finding is drawn first, then its location."""
    keys, _ = _taken(s)
    used_cores = {ffl.core_finding for ffl, _ in keys}
    options: list[tuple[str, list[PoolEntry]]] = []
    for f in substitution_candidates(s, pool, lex):
        if f not in used_cores:
            options.append((f, pool.entries(f)))
            continue
        ffl_type = lex.type_of(f)
        free = [e for e in pool.entries(f) if (FFL(ffl_type, "yes", f, e.anatomy), e.box) not in keys]
        if free:
            options.append((f, free))
    if not options:
        raise SubstitutionUnavailable(g.ffl.serialize())
    f, free = options[int(rng.integers(len(options)))]
    e = free[int(rng.integers(len(free)))]
    return GroundedFinding(lex.make("yes", f, e.anatomy), e.box, 0, "substitution")


@dataclass(frozen=True)
class PerturbConfig:
    reversal: int = 1
    relocate: int = 1
    substitution: int = 1
    overlap_threshold: float = DEFAULT_OVERLAP_THRESHOLD
    reverse_negatives: bool = False

    @classmethod
    def table2(cls) -> "PerturbConfig":
        return cls(relocate=2)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GenerationReport:
    counts: dict[str, Counter] = field(
        default_factory=lambda: {k: Counter() for k in ("reversal", "relocate", "substitution")}
    )
    samples: int = 0
    real: int = 0
    fake: int = 0

    def to_dict(self) -> dict:
        keys = ("emitted", "skipped", "not_applicable")
        return {
            "samples": self.samples,
            "real": self.real,
            "fake": self.fake,
            "counts": {t: {k: int(c[k]) for k in keys} for t, c in self.counts.items()},
        }


def sample_rng(seed: int, image_id: str) -> np.random.Generator:
    """Per-sample stream; independent of corpus order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(image_id.encode())]))


def perturb_sample(
    s: Sample,
    pool: LocationPool,
    lex: Lexicon,
    config: PerturbConfig,
    rng: np.random.Generator,
    report: GenerationReport | None = None,
) -> Sample:
    report = report if report is not None else GenerationReport()
    out = replace(s, findings_fake=())
    real_ffls = {g.ffl for g in s.findings_real}

    def emit(kind: str, fake: GroundedFinding | None) -> None:
        nonlocal out
        if fake is None or fake.key in {f.key for f in out.findings} or fake.ffl in real_ffls:
            report.counts[kind]["skipped"] += 1
            return
        out = replace(out, findings_fake=out.findings_fake + (fake,))
        report.counts[kind]["emitted"] += 1

    for g in s.findings_real:
        for _ in range(config.reversal):
            if g.ffl.positive or config.reverse_negatives:
                emit("reversal", perturb_reversal(g))
            else:
                report.counts["reversal"]["not_applicable"] += 1
        for _ in range(config.relocate):
            if not g.ffl.positive:
                report.counts["relocate"]["not_applicable"] += 1
                continue
            try:
                fake = perturb_relocate(g, pool, rng, out, config.overlap_threshold)
            except RelocationUnavailable:
                fake = None
            emit("relocate", fake)
        for _ in range(config.substitution):
            try:
                fake = perturb_substitute(out, g, pool, lex, rng)
            except SubstitutionUnavailable:
                fake = None
            emit("substitution", fake)
    report.samples += 1
    report.real += len(out.findings_real)
    report.fake += len(out.findings_fake)
    return out


def generate_corpus(
    gold: Sequence[Sample],
    lex: Lexicon,
    config: PerturbConfig | None = None,
    seed: int = 0,
    pool: LocationPool | None = None,
) -> tuple[list[Sample], GenerationReport]:
    config = config or PerturbConfig()
    pool = pool if pool is not None else build_pools(gold)
    report = GenerationReport()
    out = [perturb_sample(s, pool, lex, config, sample_rng(seed, s.image_id), report) for s in gold]
    return out, report
