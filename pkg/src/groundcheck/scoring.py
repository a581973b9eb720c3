"""Report error quantification (FC score / RQ), model evaluation, Lin's
concordance coefficient and a simulated report generator."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import GroundedFinding, Sample
from .ffl import FFL, UNSPECIFIED, Lexicon, negate
from .geometry import EPS, BBox, iou
from .perturb import LocationPool
from .toyworld import RegionLayout, ToyImage

CONVENTIONS = ("default", "paper-literal")
THRESHOLD = 0.5


class UndefinedScoreError(ValueError):
    """Raised when a report has no findings to verify."""


@dataclass(frozen=True)
class IndicatedFinding:
    ffl: FFL
    indicated_box: BBox


def indicate(ffl: FFL, layout: RegionLayout) -> IndicatedFinding:
    """Recover the location a report implies from its anatomy field."""
    if ffl.anatomy == UNSPECIFIED:
        return IndicatedFinding(ffl, BBox.zero())
    return IndicatedFinding(ffl, layout.slot_box(ffl.anatomy))


@dataclass(frozen=True)
class Row:
    ffl: FFL
    indicated_box: BBox
    predicted_box: BBox
    e_prob: float
    iou: float
    error: str | None = None

    @property
    def real(self) -> bool:
        return self.e_prob >= THRESHOLD

    def to_json(self) -> dict:
        d = {
            "ffl": self.ffl.serialize(),
            "indicated_box": self.indicated_box.as_list(),
            "predicted_box": self.predicted_box.as_list(),
            "e_prob": self.e_prob,
            "e": int(self.real),
            "iou": self.iou,
        }
        if self.error:
            d["error"] = self.error
        return d


def make_row(ffl: FFL, indicated: BBox, predicted: BBox, e_prob: float, error: str | None = None) -> Row:
    return Row(ffl, indicated, predicted, float(e_prob), iou(indicated, predicted), error)


def fc_score(rows: Sequence[Row], convention: str = "default") -> float:
    """Half veracity agreement, half location agreement.

    ``default``: fraction of rows predicted real plus mean IoU, halved.
    ``paper-literal``: the printed expression, whose veracity ratio is 1 as
    soon as any row is predicted real and whose IoU term is halved again.
    """
    if not rows:
        raise UndefinedScoreError("no findings to score")
    n = len(rows)
    n_real = sum(r.real for r in rows)
    if convention == "default":
        return 0.5 * (n_real / n + math.fsum(r.iou for r in rows) / n)
    if convention == "paper-literal":
        ratio = n_real / n_real if n_real else 0.0
        return 0.5 * (ratio + math.fsum(r.iou / 2 for r in rows) / n)
    raise ValueError(f"unknown convention {convention!r}")


def rq(rows: Sequence[Row], convention: str = "default") -> float:
    return min(max(1.0 - fc_score(rows, convention), 0.0), 1.0)


@dataclass
class ReportAssessment:
    image_id: str
    rows: list[Row]
    convention: str = "default"
    fc_score: float = field(init=False)
    rq: float = field(init=False)

    def __post_init__(self):
        self.fc_score = fc_score(self.rows, self.convention)
        self.rq = min(max(1.0 - self.fc_score, 0.0), 1.0)

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "convention": self.convention,
            "fc_score": self.fc_score,
            "rq": self.rq,
            "rows": [r.to_json() for r in self.rows],
        }


def assess_report(
    checkpoint,
    image: ToyImage,
    indicated: Sequence[IndicatedFinding],
    convention: str = "default",
    mask_fake_boxes: bool = False,
) -> ReportAssessment:
    """Verify each indicated finding with the model and score the report.

    Rows keep the model's box even for findings it calls fake; with
    ``mask_fake_boxes`` those get the zero box instead.
    """
    from .fc.train import Prediction, predict

    if not indicated:
        raise UndefinedScoreError("no findings to verify")
    preds = predict(checkpoint, image, [f.ffl for f in indicated])
    rows = []
    for ind, p in zip(indicated, preds):
        if not isinstance(p, Prediction):
            rows.append(make_row(ind.ffl, ind.indicated_box, BBox.zero(), 0.0, p.error))
            continue
        box = p.bbox if (p.real or not mask_fake_boxes) else BBox.zero()
        rows.append(make_row(ind.ffl, ind.indicated_box, box, p.veracity_prob))
    return ReportAssessment(image.image_id, rows, convention)


def match_gold(ffl: FFL, gold: Sample, anatomy_strict: bool = False) -> GroundedFinding | None:
    for g in gold.findings_real:
        if g.ffl.polarity == ffl.polarity and g.ffl.core_finding == ffl.core_finding:
            if not anatomy_strict or g.ffl.anatomy == ffl.anatomy:
                return g
    return None


def ground_truth_rows(
    indicated: Sequence[IndicatedFinding], gold: Sample, anatomy_strict: bool = False
) -> list[Row]:
    rows = []
    for ind in indicated:
        g = match_gold(ind.ffl, gold, anatomy_strict)
        if g is None:
            rows.append(make_row(ind.ffl, ind.indicated_box, BBox.zero(), 0.0))
        else:
            rows.append(make_row(ind.ffl, ind.indicated_box, g.box, 1.0))
    return rows


def rq_ground_truth(
    indicated: Sequence[IndicatedFinding],
    gold: Sample,
    convention: str = "default",
    anatomy_strict: bool = False,
) -> float:
    """RQ with veracity and location read off the gold annotation.

    A claim is real when polarity and finding match a gold finding; its
    anatomy is judged through the IoU term unless ``anatomy_strict``.
    """
    return rq(ground_truth_rows(indicated, gold, anatomy_strict), convention)


def ccc(x: Sequence[float], y: Sequence[float]) -> float:
    """Lin's concordance correlation coefficient (population moments)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("need at least two paired values")
    mx, my = x.mean(), y.mean()
    vx, vy = ((x - mx) ** 2).mean(), ((y - my) ** 2).mean()
    cov = ((x - mx) * (y - my)).mean()
    denom = vx + vy + (mx - my) ** 2
    if denom < EPS**2:
        return 0.0
    return float(2 * cov / denom)


def evaluation_metrics(pairs: Sequence[tuple[GroundedFinding, object]]) -> dict[str, float]:
    """Accuracy over all (gold, prediction) pairs, mean IoU over gold-real ones.

    Predictions need ``real`` and ``bbox`` attributes.
    """
    if not pairs:
        raise ValueError("empty test set")
    correct = sum(int(p.real) == g.veracity for g, p in pairs)
    ious = [iou(p.bbox, g.box) for g, p in pairs if g.veracity == 1]
    return {
        "accuracy": correct / len(pairs),
        "miou": float(np.mean(ious)) if ious else 0.0,
        "n_findings": len(pairs),
        "n_real": len(ious),
    }


def evaluate_model(checkpoint, test: Sequence[Sample], images: Mapping[str, ToyImage]) -> dict[str, float]:
    from .fc.train import Prediction, predict

    pairs = []
    for s in test:
        preds = predict(checkpoint, images[s.image_id], [g.ffl for g in s.findings])
        for g, p in zip(s.findings, preds):
            if not isinstance(p, Prediction):
                raise ValueError(f"{s.image_id}: {p.error}")
            pairs.append((g, p))
    return evaluation_metrics(pairs)


@dataclass(frozen=True)
class ErrorProfile:
    """Per-finding corruption probabilities of a simulated report generator."""

    name: str
    reverse: float = 0.0
    relocate: float = 0.0
    substitute: float = 0.0

    def __post_init__(self):
        rates = (self.reverse, self.relocate, self.substitute)
        if min(rates) < 0 or sum(rates) > 1 + 1e-12:
            raise ValueError(f"invalid error rates {rates}")

    @property
    def error_rate(self) -> float:
        return self.reverse + self.relocate + self.substitute

    @classmethod
    def uniform(cls, name: str, rate: float) -> "ErrorProfile":
        return cls(name, rate / 3, rate / 3, rate / 3)

    def to_dict(self) -> dict:
        return {"name": self.name, "reverse": self.reverse, "relocate": self.relocate, "substitute": self.substitute}


def default_profiles(n: int = 7, max_rate: float = 0.8) -> list[ErrorProfile]:
    return [ErrorProfile.uniform(f"gen-{i}", max_rate * i / (n - 1)) for i in range(n)]


def report_rng(seed: int, image_id: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(image_id.encode()), 1]))


def simulate_generator(
    gold: Sample,
    profile: ErrorProfile,
    rng: np.random.Generator,
    lex: Lexicon,
    layout: RegionLayout,
    pool: LocationPool | None = None,
) -> list[IndicatedFinding]:
    """Corrupt a gold report into an "automated" one.

    Four uniforms are drawn per finding whatever the outcome, so with a
    shared seed a higher error rate only ever turns kept findings into
    errors. Relocation of a negative mention would still be true, so those
    are kept.
    """
    present = gold.real_cores()
    subs = [f for f in lex.findings if f not in present and not any(lex.contradicts(f, p) for p in present)]
    out = []
    for g in gold.findings_real:
        u, v, w1, w2 = rng.random(4)
        f = g.ffl
        t1 = profile.reverse
        t2 = t1 + profile.relocate
        t3 = t2 + profile.substitute
        if u < t1:
            f = negate(f)
        elif u < t2 and f.positive:
            regions = _locations(f.core_finding, lex, pool)
            regions = [r for r in regions if r != f.anatomy] or [r for r in lex.regions if r != f.anatomy]
            f = FFL(f.finding_type, f.polarity, f.core_finding, regions[int(w1 * len(regions))])
        elif t2 <= u < t3 and subs:
            m = subs[int(w1 * len(subs))]
            regions = _locations(m, lex, pool)
            f = lex.make("yes", m, regions[int(w2 * len(regions))])
        del v
        out.append(indicate(f, layout))
    return out


def _locations(finding: str, lex: Lexicon, pool: LocationPool | None) -> list[str]:
    if pool is not None and finding in pool:
        return sorted({e.anatomy for e in pool.entries(finding) if e.anatomy != UNSPECIFIED}) or list(lex.regions)
    return list(lex.regions)


@dataclass
class ConcordanceRow:
    generator: str
    error_rate: float
    rq_ap: float
    rq_ag: float
    n_reports: int

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "error_rate": self.error_rate,
            "rq_ap": self.rq_ap,
            "rq_ag": self.rq_ag,
            "n_reports": self.n_reports,
        }


def concordance_study(
    checkpoint,
    gold: Sequence[Sample],
    images: Mapping[str, ToyImage],
    lex: Lexicon,
    layout: RegionLayout,
    profiles: Sequence[ErrorProfile] | None = None,
    seed: int = 0,
    pool: LocationPool | None = None,
    convention: str = "default",
    anatomy_strict: bool = False,
) -> dict:
    """Mean RQ(A,P) and RQ(A,G) per simulated generator, plus their CCC."""
    profiles = list(profiles or default_profiles())
    rows = []
    for prof in profiles:
        ap, ag = [], []
        for s in gold:
            ind = simulate_generator(s, prof, report_rng(seed, s.image_id), lex, layout, pool)
            ap.append(assess_report(checkpoint, images[s.image_id], ind, convention).rq)
            ag.append(rq_ground_truth(ind, s, convention, anatomy_strict))
        rows.append(ConcordanceRow(prof.name, prof.error_rate, float(np.mean(ap)), float(np.mean(ag)), len(gold)))
    return {
        "rows": [r.to_dict() for r in rows],
        "ccc": ccc([r.rq_ap for r in rows], [r.rq_ag for r in rows]),
        "profiles": [p.to_dict() for p in profiles],
    }
