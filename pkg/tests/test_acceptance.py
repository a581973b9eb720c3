"""Acceptance suite: one PASS/FAIL line per primary criterion.

The lines are printed in the terminal summary (see conftest.py) and inline
when run with ``-s``. Run alone with ``pytest tests/test_acceptance.py``.
"""

import json
import math
import time
from collections import Counter

import numpy as np
import pytest
import torch

from groundcheck.cli import main as cli_main
from groundcheck.corpus import GroundedFinding, Sample, dumps_sample
from groundcheck.fc import FCConfig, train
from groundcheck.fc.config import MODES
from groundcheck.fc.gradcheck import grad_check, small_config
from groundcheck.fc.losses import supcon_loss
from groundcheck.ffl import FFL
from groundcheck.geometry import BBox, giou, hull, iou
from groundcheck.perturb import build_pools, generate_corpus
from groundcheck.scoring import (
    IndicatedFinding,
    ccc,
    concordance_study,
    default_profiles,
    evaluate_model,
    fc_score,
    make_row,
    rq_ground_truth,
)
from groundcheck.splits import make_split, select
from groundcheck.toyworld import PlacedFinding, SceneSpec, generate_gold, glyph_id, render_scene
from oracles import _overlap, ccc_oracle, fc_score_oracle, perturbation_violations, random_aligned_box, raster_geometry

pytestmark = pytest.mark.slow

RESULTS: list[str] = []


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# -- loss correctness ---------------------------------------------------------------


def test_loss_correctness(lex):
    start = time.perf_counter()
    errors = {mode: grad_check(small_config(mode=mode), seed=0, lex=lex) for mode in MODES}
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        s_r, s_f = rng.uniform(-1, 1, size=2)
        tau = rng.uniform(0.05, 2.0)
        zi, r, f = [1.0, 0.0], [s_r, math.sqrt(1 - s_r**2)], [s_f, math.sqrt(1 - s_f**2)]
        worst = max(worst, abs(supcon_loss(zi, [r], [f], tau) - (s_f - s_r) / tau))
    elapsed = time.perf_counter() - start
    ok = max(errors.values()) < 1e-4 and worst <= 1e-12 and elapsed < 60
    detail = ", ".join(f"{m} {e:.1e}" for m, e in errors.items())
    record("loss correctness", ok, f"grad rel err {detail}; closed form max err {worst:.1e}; {elapsed:.1f}s")


# -- geometry oracle ------------------------------------------------------------------


def test_geometry_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = Counter()
    for k in range(1000):
        a = random_aligned_box(rng, degenerate=k % 5 == 0)
        b = random_aligned_box(rng, degenerate=k % 7 == 3)
        o = raster_geometry(a, b)
        A, B = BBox(*a), BBox(*b)
        worst["iou"] = max(worst["iou"], abs(iou(A, B) - o["iou"]))
        worst["giou"] = max(worst["giou"], abs(giou(A, B) - o["giou"]))
        worst["hull"] = max(worst["hull"], max(abs(u - v) for u, v in zip(hull(A, B).as_list(), o["hull"])))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 2e-3 and elapsed < 60
    record("geometry oracle", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s")


# -- perturbation invariants ------------------------------------------------------------


def test_perturbation_invariants(lex):
    start = time.perf_counter()
    _, gold = generate_gold(1000, lex, seed=7)
    a, _ = generate_corpus(gold, lex, seed=8)
    b, _ = generate_corpus(gold, lex, seed=8)
    identical = "".join(map(dumps_sample, a)) == "".join(map(dumps_sample, b))
    contra = {k: set(v) for k, v in lex.contradictions.items()}
    bad = perturbation_violations([s.to_json() for s in gold], [s.to_json() for s in a], contra)
    elapsed = time.perf_counter() - start
    n_fake = sum(len(s.findings_fake) for s in a)
    ok = not bad and identical and elapsed < 60
    record(
        "perturbation invariants",
        ok,
        f"{sum(bad.values())} violations over {n_fake} fakes {dict(bad)}; byte-identical rerun {identical}; {elapsed:.1f}s",
    )


# -- learnability and concordance -----------------------------------------------------------


@pytest.fixture(scope="module")
def toy_study(lex):
    """4,000 gold images, default perturbations, the 70/10/20 split of fold 0."""
    images, gold = generate_gold(4000, lex, seed=1)
    synth, _ = generate_corpus(gold, lex, seed=2)
    split = make_split([s.image_id for s in gold], fold=0)
    return {
        "images": {im.image_id: im for im in images},
        "gold": gold,
        "split": split,
        "train": select(synth, split.train),
        "test": select(synth, split.test),
    }


@pytest.fixture(scope="module")
def trained(toy_study, lex):
    out = {}
    for mode in ("FCRegComb", "FCRegSep"):
        start = time.perf_counter()
        ckpt = train(toy_study["train"], FCConfig(mode=mode, epochs=100), 0, toy_study["images"], lex)
        out[mode] = (ckpt, time.perf_counter() - start)
    return out


def test_learnability(toy_study, trained):
    m = {mode: evaluate_model(ck, toy_study["test"], toy_study["images"]) for mode, (ck, _) in trained.items()}
    elapsed = sum(t for _, t in trained.values())
    comb, sep = m["FCRegComb"], m["FCRegSep"]
    ok = comb["accuracy"] >= 0.90 and comb["miou"] >= 0.45 and comb["miou"] >= sep["miou"] and elapsed < 20 * 60
    record(
        "end-to-end learnability",
        ok,
        f"FCRegComb accuracy {comb['accuracy']:.4f} mIoU {comb['miou']:.4f}; "
        f"FCRegSep accuracy {sep['accuracy']:.4f} mIoU {sep['miou']:.4f}; "
        f"{len(toy_study['train'])} train / {len(toy_study['test'])} test samples; {elapsed:.0f}s",
    )


def test_concordance(toy_study, trained, lex, layout):
    start = time.perf_counter()
    ckpt = trained["FCRegComb"][0]
    test_gold = select(toy_study["gold"], toy_study["split"].test)
    pool = build_pools(select(toy_study["gold"], toy_study["split"].train))
    out = concordance_study(ckpt, test_gold, toy_study["images"], lex, layout, default_profiles(7, 0.8), seed=3, pool=pool)
    elapsed = time.perf_counter() - start
    rq_ag = [r["rq_ag"] for r in out["rows"]]
    monotone = all(x < y for x, y in zip(rq_ag, rq_ag[1:]))
    ok = len(out["rows"]) >= 7 and out["ccc"] >= 0.90 and monotone and elapsed < 5 * 60
    pairs = " ".join(f"{r['rq_ap']:.3f}/{r['rq_ag']:.3f}" for r in out["rows"])
    record("concordance", ok, f"CCC {out['ccc']:.4f}; RQ(A,P)/RQ(A,G) {pairs}; monotone {monotone}; {elapsed:.0f}s")


def test_extra_glyph_separation(trained, lex, layout):
    """Supplementary: images differing in one glyph embed apart after training."""
    model = trained["FCRegComb"][0].model().eval()
    worst = -1.0
    with torch.no_grad():
        for region in lex.regions:
            z = []
            for f in lex.findings:
                placed = PlacedFinding(f, region, layout.slot_box(region), glyph_id(lex, f))
                img = render_scene(SceneSpec("x", [placed]), layout, np.random.default_rng(0))
                z.append(model.image_encoder(model.features(img.pixels))[0])
            sim = torch.stack(z) @ torch.stack(z).T
            sim.fill_diagonal_(-1.0)
            worst = max(worst, float(sim.max()))
    record("[extra] one-glyph image separation", worst < 1 - 1e-3, f"max cosine between distinct glyphs {worst:.4f}")


# -- scoring oracle --------------------------------------------------------------------------


def _random_box(rng):
    x, y = rng.uniform(0, 0.8, size=2)
    return BBox(x, y, rng.uniform(0.01, 1 - x), rng.uniform(0.01, 1 - y))


def _rq_ground_truth_oracle(claims, gold_findings, strict=False):
    """claims and gold findings as (polarity, finding, anatomy, box-list) tuples."""
    real, ious = 0, []
    for pol, fnd, ana, box in claims:
        hit = next(
            (g for g in gold_findings if g[0] == pol and g[1] == fnd and (not strict or g[2] == ana)),
            None,
        )
        real += hit is not None
        ious.append(_overlap(box, hit[3]) if hit else 0.0)
    return 1 - (real / len(claims) + math.fsum(ious) / len(claims)) / 2


def test_scoring_oracle(lex):
    rng = np.random.default_rng(0)
    worst = Counter()
    findings, regions = lex.findings, lex.regions
    for _ in range(200):
        n = int(rng.integers(1, 9))
        rows, pairs = [], []
        for _ in range(n):
            a, b = _random_box(rng), _random_box(rng)
            if rng.random() < 0.2:
                b = a
            e = float(rng.random())
            rows.append(make_row(FFL("disease", "yes", findings[0], regions[0]), a, b, e))
            pairs.append((e, _overlap(a.as_list(), b.as_list())))
        worst["fc_score"] = max(worst["fc_score"], abs(fc_score(rows) - fc_score_oracle(pairs)))

        gold_t = []
        for f in rng.choice(len(findings), size=int(rng.integers(1, 5)), replace=False):
            gold_t.append(("yes" if rng.random() < 0.7 else "no", findings[f], regions[rng.integers(len(regions))], _random_box(rng)))
        gold = Sample("g", "g.png", tuple(GroundedFinding(FFL("disease", p, f, r), box, 1) for p, f, r, box in gold_t))
        claims = []
        for _ in range(int(rng.integers(1, 7))):
            if rng.random() < 0.5:  # restate a gold finding, sometimes elsewhere
                p, f, r, _ = gold_t[rng.integers(len(gold_t))]
                if rng.random() < 0.4:
                    r = regions[rng.integers(len(regions))]
            else:
                p, f = ("yes", "no")[rng.integers(2)], findings[rng.integers(len(findings))]
                r = regions[rng.integers(len(regions))]
            claims.append((p, f, r, _random_box(rng)))
        indicated = [IndicatedFinding(FFL("disease", p, f, r), box) for p, f, r, box in claims]
        claims_l = [(p, f, r, box.as_list()) for p, f, r, box in claims]
        gold_l = [(p, f, r, box.as_list()) for p, f, r, box in gold_t]
        for strict in (False, True):
            diff = abs(rq_ground_truth(indicated, gold, anatomy_strict=strict) - _rq_ground_truth_oracle(claims_l, gold_l, strict))
            worst["rq_ground_truth"] = max(worst["rq_ground_truth"], diff)

        k = int(rng.integers(2, 30))
        x, y = rng.normal(size=k).tolist(), rng.normal(size=k).tolist()
        worst["ccc"] = max(worst["ccc"], abs(ccc(x, y) - ccc_oracle(x, y)))
    v = rng.normal(size=50)
    v -= v.mean()
    identities = ccc(v.tolist(), v.tolist()) == 1.0 and ccc(v.tolist(), (-v).tolist()) == -1.0
    ok = max(worst.values()) <= 1e-9 and identities
    record("scoring oracle", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; identities exact {identities}")


# -- CLI reproducibility -----------------------------------------------------------------------


def test_cli_reproducibility(tmp_path):
    def run(*argv):
        code = cli_main([str(a) for a in argv])
        assert code == 0, argv

    small = ["--epochs", 2, "--d-joint", 16, "--text-hidden", 32, "--regressor-widths", 32, 16, "--warmup-steps", 2]
    a = tmp_path / "a"
    run("gen-gold", "--n", 40, "--seed", 5, "--out", a / "gen-gold")
    gold = a / "gen-gold/gold.jsonl"
    images = a / "gen-gold/images"
    run("gen-synth", "--gold", gold, "--seed", 6, "--out", a / "gen-synth")
    corpus = a / "gen-synth/synth.jsonl"
    run("train", "--corpus", corpus, "--images", images, "--seed", 1, *small, "--out", a / "train")
    ckpt = a / "train/checkpoint.json"
    first = json.loads(gold.read_text().splitlines()[0])
    ffls = [f["ffl"] for f in first["findings"]]
    run("predict", "--checkpoint", ckpt, "--image", images / f"{first['image_id']}.png", "--ffl", *ffls, "--out", a / "predict")
    reports = tmp_path / "reports.jsonl"
    reports.write_text(json.dumps({"image_id": first["image_id"], "findings": ffls}) + "\n")
    run("assess", "--checkpoint", ckpt, "--reports", reports, "--images", images, "--gold", gold, "--out", a / "assess")
    run("evaluate", "--checkpoint", ckpt, "--corpus", corpus, "--images", images, "--out", a / "evaluate")
    run("concordance", "--checkpoint", ckpt, "--gold", gold, "--generators", 3, "--out", a / "concordance")
    run("ablate", "--corpus", corpus, "--images", images, "--modes", "FCRegComb", "FCRegDual", *small, "--out", a / "ablate")

    mismatched = []
    commands = sorted(p.name for p in a.iterdir())
    for cmd in commands:
        first_dir, again = a / cmd, tmp_path / "b" / cmd
        run(cmd, "--config", first_dir / "run.json", "--out", again)
        files = sorted(p.relative_to(first_dir) for p in first_dir.rglob("*") if p.is_file())
        for rel in files:
            if not (again / rel).exists() or (again / rel).read_bytes() != (first_dir / rel).read_bytes():
                mismatched.append(f"{cmd}/{rel}")
        if sorted(p.relative_to(again) for p in again.rglob("*") if p.is_file()) != files:
            mismatched.append(f"{cmd}: file sets differ")
    record(
        "CLI reproducibility",
        not mismatched and len(commands) == 8,
        f"{len(commands)} commands rerun from run.json; mismatches {mismatched or 'none'}",
    )
