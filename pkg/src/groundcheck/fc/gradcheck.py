"""Finite-difference check of the analytic gradients of the training loss."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import torch

from ..ffl import Lexicon
from .config import FCConfig
from .model import FCModel
from .train import Batch, compute_losses

STEP = 1e-5
REL_FLOOR = 1e-6


def small_config(**overrides) -> FCConfig:
    base = dict(
        d_joint=6,
        pool=12,
        grid=6,
        patch_width=3,
        token_dim=3,
        text_hidden=8,
        regressor_widths=(8, 6),
        dropout=0.0,
    )
    base.update(overrides)
    return FCConfig(**base)


def random_batch(model: FCModel, lex: Lexicon, rng: np.random.Generator, n_samples: int = 2) -> Batch:
    """Random images with 1-2 real and 2-3 fake findings each; fakes with
    even index carry the zero box like polarity reversals."""
    cfg = model.cfg
    feats, tokens, idx, boxes, es = [], [], [], [], []
    sizes = model.vocab.sizes
    for b in range(n_samples):
        pixels = torch.tensor(rng.random((cfg.image_size, cfg.image_size)), dtype=torch.float64)
        feats.append(model.features(pixels)[0])
        n_real, n_fake = int(rng.integers(1, 3)), int(rng.integers(2, 4))
        for k in range(n_real + n_fake):
            tokens.append([int(rng.integers(n)) for n in sizes])
            idx.append(b)
            real = k < n_real
            if not real and k % 2 == 0:
                boxes.append([0.0, 0.0, 0.0, 0.0])
            else:
                x, y = rng.uniform(0.05, 0.5, size=2)
                w, h = rng.uniform(0.1, 0.45, size=2)
                boxes.append([x, y, w, h])
            es.append(1.0 if real else 0.0)
    return Batch(
        feats=torch.stack(feats),
        tokens=torch.tensor(tokens, dtype=torch.long),
        sample_idx=torch.tensor(idx, dtype=torch.long),
        boxes=torch.tensor(boxes, dtype=torch.float64),
        e=torch.tensor(es, dtype=torch.float64),
    )


def gradients(config: FCConfig, seed: int, lex: Lexicon | None = None, step: float = STEP):
    """Analytic and central-difference gradients of the total loss over all
    trainable parameters, flattened."""
    lex = lex or Lexicon.load()
    config = replace(config, dropout=0.0)
    torch.manual_seed(seed)
    model = FCModel(config, lex).double()
    model.eval()
    batch = random_batch(model, lex, np.random.default_rng(seed))
    params = [p for p in model.parameters() if p.requires_grad]
    model.zero_grad()
    compute_losses(model, batch)["total"].backward()
    analytic = np.concatenate([p.grad.detach().numpy().ravel() if p.grad is not None else np.zeros(p.numel()) for p in params])
    numeric = np.empty_like(analytic)
    k = 0
    with torch.no_grad():
        for p in params:
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + step
                up = float(compute_losses(model, batch)["total"])
                flat[i] = orig - step
                down = float(compute_losses(model, batch)["total"])
                flat[i] = orig
                numeric[k] = (up - down) / (2 * step)
                k += 1
    return analytic, numeric


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def grad_check(config: FCConfig | None = None, seed: int = 0, lex: Lexicon | None = None) -> float:
    """Max relative error between analytic and finite-difference gradients."""
    analytic, numeric = gradients(config or small_config(), seed, lex)
    return float(relative_errors(analytic, numeric).max())
