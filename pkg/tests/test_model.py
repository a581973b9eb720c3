import json
import sys

import numpy as np
import pytest
import torch

from groundcheck.ffl import FFL, parse_ffl
from groundcheck.fc import Checkpoint, FCConfig, FCModel, Prediction, PredictionError, TrainingDiverged, predict, train
from groundcheck.fc.config import MODES
from groundcheck.fc.train import warmup_cosine
from groundcheck.toyworld import PlacedFinding, SceneSpec, glyph_id, render_scene

train_mod = sys.modules["groundcheck.fc.train"]

TINY = dict(epochs=1, d_joint=8, text_hidden=16, regressor_widths=(16, 8), warmup_steps=2, batch_size=4)


def test_regressor_parameter_count_matches_reported_size(lex):
    model = FCModel(FCConfig(d_joint=512), lex)
    assert sum(p.numel() for p in model.regressor.parameters()) == 657_413


def test_config_validation_and_roundtrip():
    cfg = FCConfig(mode="FCRegDual", regressor_widths=[32, 16])
    assert cfg.regressor_widths == (32, 16)
    assert FCConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    for bad in (dict(tau=0), dict(batch_size=1), dict(mode="X"), dict(lambda_bce=-1), dict(giou="other")):
        with pytest.raises(ValueError):
            FCConfig(**bad)
    with pytest.raises(ValueError, match="unknown"):
        FCConfig.from_dict({"learning_rate": 1})
    assert FCConfig.paper_recipe().lr_max == 1e-5


def test_outputs_shapes_ranges_and_norms(lex, small_world):
    torch.manual_seed(0)
    model = FCModel(FCConfig(), lex).eval()
    s = small_world["synth"][0]
    feats = model.features(small_world["images"][s.image_id].pixels)
    tokens = model.tokens([g.ffl for g in s.findings])
    out = model(feats, tokens, torch.zeros(len(tokens), dtype=torch.long))
    n = len(s.findings)
    assert out.box.shape == (n, 4) and out.veracity.shape == (n,)
    assert ((out.box > 0) & (out.box < 1)).all() and ((out.veracity > 0) & (out.veracity < 1)).all()
    assert torch.allclose(out.z_image.norm(dim=-1), torch.ones(1), atol=1e-6)
    assert torch.allclose(out.z_text.norm(dim=-1), torch.ones(n), atol=1e-6)


def test_image_shape_mismatch(lex):
    with pytest.raises(ValueError, match="expected 128x128"):
        FCModel(FCConfig(), lex).features(np.zeros((64, 64)))


def test_text_encoding_distinguishes_polarity_and_follows_canonical_form(lex):
    torch.manual_seed(0)
    model = FCModel(FCConfig(), lex).eval()
    f = parse_ffl("disease|yes|edema|left lung")
    z = model.text_encoder(model.tokens([f, parse_ffl(f.serialize()), FFL("disease", "no", "edema", "left lung")]))
    assert torch.equal(z[0], z[1])
    assert not torch.allclose(z[0], z[2])
    three = FCModel(FCConfig(text_input="ffl3"), lex)
    t = three.tokens([f, FFL("disease", "yes", "edema", "right lung")])
    assert torch.equal(t[0], t[1])  # anatomy dropped from the text input


def test_sep_mode_freezes_encoders(lex, small_world):
    cfg = FCConfig(mode="FCRegSep", **TINY)
    torch.manual_seed(7)
    before = FCModel(cfg, lex).state_dict()
    ckpt = train(small_world["synth"][:12], cfg, 7, small_world["images"], lex)
    for k, v in ckpt.state.items():
        if k.startswith(("image_encoder", "text_encoder")):
            assert np.array_equal(v, before[k].numpy()), k
    assert any(not np.array_equal(v, before[k].numpy()) for k, v in ckpt.state.items() if k.startswith("regressor"))


def test_dual_mode_has_two_heads(lex):
    model = FCModel(FCConfig(mode="FCRegDual"), lex)
    assert hasattr(model, "box_head") and hasattr(model, "veracity_head") and not hasattr(model, "regressor")


@pytest.mark.parametrize("mode", MODES)
def test_one_epoch_and_checkpoint_roundtrip(mode, lex, small_world, tmp_path):
    cfg = FCConfig(mode=mode, **TINY)
    samples = small_world["synth"][:10]
    ckpt = train(samples, cfg, 3, small_world["images"], lex, val=small_world["synth"][10:14])
    assert len(ckpt.metrics) == 1 and "val_accuracy" in ckpt.metrics[0]
    ckpt.save(tmp_path / "a.json")
    loaded = Checkpoint.load(tmp_path / "a.json")
    assert loaded.config == cfg and loaded.seed == 3 and loaded.metrics == ckpt.metrics
    s = samples[0]
    img = small_world["images"][s.image_id]
    ffls = [g.ffl for g in s.findings]
    assert [p.to_json() for p in predict(loaded, img, ffls)] == [p.to_json() for p in predict(ckpt, img, ffls)]
    loaded.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_training_is_deterministic(lex, small_world, tmp_path):
    cfg = FCConfig(**{**TINY, "epochs": 2})
    a = train(small_world["synth"][:16], cfg, 5, small_world["images"], lex)
    b = train(small_world["synth"][:16], cfg, 5, small_world["images"], lex)
    a.save(tmp_path / "a.json")
    b.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    c = train(small_world["synth"][:16], cfg, 6, small_world["images"], lex)
    assert any(not np.array_equal(a.state[k], c.state[k]) for k in a.state)


def test_empty_corpus_rejected(lex):
    with pytest.raises(ValueError):
        train([], FCConfig(), 0, {}, lex)


def test_nan_loss_aborts_with_diagnostics(lex, small_world, monkeypatch):
    real = train_mod.compute_losses

    def poisoned(model, batch):
        out = real(model, batch)
        out["total"] = out["total"] * float("nan")
        return out

    monkeypatch.setattr(train_mod, "compute_losses", poisoned)
    with pytest.raises(TrainingDiverged, match="epoch 0 batch 0"):
        train(small_world["synth"][:4], FCConfig(**TINY), 0, small_world["images"], lex)


def test_predict_reports_unknown_terms_per_finding(small_checkpoint, small_world):
    img = next(iter(small_world["images"].values()))
    f = parse_ffl("disease|yes|edema|left lung")
    out = predict(small_checkpoint, img, [f, FFL("disease", "yes", "unicorn", "left lung"), f])
    assert isinstance(out[0], Prediction) and isinstance(out[1], PredictionError)
    assert "unicorn" in out[1].error
    assert out[0] == out[2]
    assert all(0 < v < 1 for v in out[0].box) and 0 < out[0].veracity_prob < 1


@pytest.fixture(scope="module")
def trained_checkpoint(small_world, lex):
    return train(small_world["synth"], FCConfig(epochs=120, warmup_steps=5), 0, small_world["images"], lex)


def glyph_scene(lex, layout, finding, region):
    placed = PlacedFinding(finding, region, layout.slot_box(region), glyph_id(lex, finding))
    return render_scene(SceneSpec("x", [placed]), layout, np.random.default_rng(0))


def test_embeddings_separate_images_differing_in_one_glyph(trained_checkpoint, lex, layout):
    model = trained_checkpoint.model().eval()
    worst = -1.0
    with torch.no_grad():
        for region in lex.regions:
            z = torch.cat(
                [model.image_encoder(model.features(glyph_scene(lex, layout, f, region).pixels)) for f in lex.findings]
            )
            sim = z @ z.T
            sim.fill_diagonal_(-1.0)
            worst = max(worst, float(sim.max()))
        again = model.image_encoder(model.features(glyph_scene(lex, layout, lex.findings[0], lex.regions[0]).pixels))
    assert worst < 1 - 1e-3
    first = model.image_encoder(model.features(glyph_scene(lex, layout, lex.findings[0], lex.regions[0]).pixels))
    assert torch.equal(first.detach(), again)


def test_warmup_cosine_schedule():
    assert warmup_cosine(0, 50, 1000) == pytest.approx(1 / 50)
    assert warmup_cosine(49, 50, 1000) == pytest.approx(1.0)
    assert warmup_cosine(50, 50, 1000) == pytest.approx(1.0)
    assert warmup_cosine(525, 50, 1000) == pytest.approx(0.5)
    assert warmup_cosine(1000, 50, 1000) == pytest.approx(0.0, abs=1e-12)
    values = [warmup_cosine(s, 50, 1000) for s in range(50, 1001)]
    assert all(a >= b for a, b in zip(values, values[1:]))
