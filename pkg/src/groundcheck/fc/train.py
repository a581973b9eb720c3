"""Training, inference and the loss wiring shared with gradient checking."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import torch

from ..corpus import Sample
from ..ffl import FFL, Lexicon, UnknownTermError
from ..geometry import BBox, iou
from ..toyworld import ToyImage
from .checkpoint import Checkpoint
from .config import FCConfig
from .losses import batched_supcon, regression_loss, similarity_bce
from .model import FCModel

log = logging.getLogger(__name__)

VERACITY_THRESHOLD = 0.5

ImageSource = Mapping[str, "ToyImage | np.ndarray"]


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class Encoded:
    feats: torch.Tensor  # (pool, pool)
    tokens: torch.Tensor  # (n, 4)
    boxes: torch.Tensor  # (n, 4)
    e: torch.Tensor  # (n,)


@dataclass
class Batch:
    feats: torch.Tensor
    tokens: torch.Tensor
    sample_idx: torch.Tensor
    boxes: torch.Tensor
    e: torch.Tensor

    @property
    def is_real(self) -> torch.Tensor:
        return self.e > 0.5


def _pixels(src: ImageSource, image_id: str) -> np.ndarray:
    img = src[image_id]
    return img.pixels if isinstance(img, ToyImage) else np.asarray(img)


def encode_samples(model: FCModel, samples: Sequence[Sample], images: ImageSource) -> list[Encoded]:
    out = []
    dtype = model.dtype
    for s in samples:
        ffls = [g.ffl for g in s.findings]
        out.append(
            Encoded(
                feats=model.features(_pixels(images, s.image_id))[0],
                tokens=model.tokens(ffls),
                boxes=torch.tensor([g.box.as_list() for g in s.findings], dtype=dtype),
                e=torch.tensor([float(g.veracity) for g in s.findings], dtype=dtype),
            )
        )
    return out


def collate(items: Sequence[Encoded]) -> Batch:
    idx = torch.cat([torch.full((len(it.e),), i, dtype=torch.long) for i, it in enumerate(items)])
    return Batch(
        feats=torch.stack([it.feats for it in items]),
        tokens=torch.cat([it.tokens for it in items]),
        sample_idx=idx,
        boxes=torch.cat([it.boxes for it in items]),
        e=torch.cat([it.e for it in items]),
    )


def compute_losses(model: FCModel, batch: Batch) -> dict[str, torch.Tensor]:
    cfg = model.cfg
    out = model(batch.feats, batch.tokens, batch.sample_idx)
    weights = (cfg.lambda_l1, cfg.lambda_giou, cfg.lambda_mse, cfg.lambda_bce)
    reg = regression_loss(out.box, out.veracity, batch.boxes, batch.e, weights, cfg.giou).mean()
    supc, skipped = batched_supcon(
        out.z_image,
        out.z_text,
        batch.sample_idx,
        batch.is_real,
        cfg.tau,
        cfg.incl_positive_denominator,
        cfg.cross_sample_negatives,
    )
    if cfg.mode == "FCRegBCE":
        head = similarity_bce(out.z_image, out.z_text, batch.sample_idx, batch.e, cfg.tau)
        total = cfg.contrastive_weight * head + reg
    elif cfg.mode == "FCRegSep":
        head = supc.detach()
        total = reg
    else:
        head = supc
        total = cfg.contrastive_weight * supc + reg
    return {"total": total, "head": head, "supcon": supc, "reg": reg, "skipped": torch.tensor(skipped)}


def warmup_cosine(step: int, warmup: int, total: int) -> float:
    if step < warmup:
        return (step + 1) / warmup
    span = max(total - warmup, 1)
    return 0.5 * (1.0 + math.cos(math.pi * min(step - warmup, span) / span))


@dataclass(frozen=True)
class Prediction:
    ffl: FFL
    box: tuple[float, float, float, float]  # raw sigmoid outputs x, y, w, h
    veracity_prob: float

    @property
    def real(self) -> bool:
        return self.veracity_prob >= VERACITY_THRESHOLD

    @property
    def bbox(self) -> BBox:
        return BBox.clipped(*self.box)

    def to_json(self) -> dict:
        return {
            "ffl": self.ffl.serialize(),
            "box": list(self.box),
            "e_prob": self.veracity_prob,
            "e": int(self.real),
        }


@dataclass(frozen=True)
class PredictionError:
    ffl: FFL
    error: str

    def to_json(self) -> dict:
        return {"ffl": self.ffl.serialize(), "error": self.error}


@torch.no_grad()
def predict_batch(model: FCModel, batch: Batch) -> tuple[np.ndarray, np.ndarray]:
    model.eval()
    out = model(batch.feats, batch.tokens, batch.sample_idx)
    return out.box.double().numpy(), out.veracity.double().numpy()


def _as_model(checkpoint: "Checkpoint | FCModel") -> FCModel:
    return checkpoint if isinstance(checkpoint, FCModel) else checkpoint.model()


def predict(
    checkpoint: "Checkpoint | FCModel",
    image: "ToyImage | np.ndarray",
    ffls: Sequence[FFL],
) -> list[Prediction | PredictionError]:
    """One prediction per FFL; FFLs outside the vocabulary yield an error entry."""
    model = _as_model(checkpoint)
    pixels = image.pixels if isinstance(image, ToyImage) else np.asarray(image)
    results: list[Prediction | PredictionError | None] = [None] * len(ffls)
    ok: list[int] = []
    rows = []
    with_anatomy = model.cfg.text_input == "ffl4"
    for i, f in enumerate(ffls):
        try:
            rows.append(model.vocab.encode(f, with_anatomy))
            ok.append(i)
        except UnknownTermError as exc:
            results[i] = PredictionError(f, str(exc))
    if ok:
        feats = model.features(pixels)
        tokens = torch.tensor(rows, dtype=torch.long)
        batch = Batch(feats, tokens, torch.zeros(len(ok), dtype=torch.long), None, None)
        boxes, probs = predict_batch(model, batch)
        for j, i in enumerate(ok):
            results[i] = Prediction(ffls[i], tuple(float(v) for v in boxes[j]), float(probs[j]))
    return results  # type: ignore[return-value]


def evaluate_encoded(model: FCModel, items: Sequence[Encoded], batch_size: int = 128) -> dict[str, float]:
    """Thresholded veracity accuracy over all findings; mean IoU of clipped
    predicted boxes over real findings."""
    correct = total = 0
    ious: list[float] = []
    for start in range(0, len(items), batch_size):
        batch = collate(items[start : start + batch_size])
        boxes, probs = predict_batch(model, batch)
        e = batch.e.numpy() > 0.5
        correct += int(((probs >= VERACITY_THRESHOLD) == e).sum())
        total += len(e)
        gold = batch.boxes.double().numpy()
        for k in np.flatnonzero(e):
            ious.append(iou(BBox.clipped(*boxes[k]), BBox.clipped(*gold[k])))
    if total == 0:
        raise ValueError("empty evaluation set")
    return {"accuracy": correct / total, "miou": float(np.mean(ious)) if ious else 0.0}


def train(
    corpus: Sequence[Sample],
    config: FCConfig,
    seed: int,
    images: ImageSource,
    lex: Lexicon | None = None,
    val: Sequence[Sample] | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> Checkpoint:
    """Train end to end on ``corpus``; returns a checkpoint with per-epoch
    metrics. Deterministic given ``seed``."""
    if not corpus:
        raise ValueError("empty training corpus")
    lex = lex or Lexicon.load()
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = FCModel(config, lex)
    items = encode_samples(model, corpus, images)
    val_items = encode_samples(model, val, images) if val else []
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.AdamW(params, lr=config.lr_max, weight_decay=config.weight_decay)
    per_epoch = math.ceil(len(items) / config.batch_size)
    total_steps = config.epochs * per_epoch
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt, lambda s: warmup_cosine(s, config.warmup_steps, total_steps)
    )
    history = []
    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(len(items))
        sums = {"supcon": 0.0, "reg": 0.0, "head": 0.0}
        skipped = 0
        for b in range(per_epoch):
            batch = collate([items[i] for i in order[b * config.batch_size : (b + 1) * config.batch_size]])
            losses = compute_losses(model, batch)
            if not torch.isfinite(losses["total"]):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {b}: "
                    + ", ".join(f"{k}={float(v.detach()):.4g}" for k, v in losses.items())
                )
            opt.zero_grad()
            losses["total"].backward()
            opt.step()
            sched.step()
            for k in sums:
                sums[k] += float(losses[k].detach())
            skipped += int(losses["skipped"])
        row = {"epoch": epoch + 1, "skipped_samples": skipped}
        row.update({f"{k}_loss": v / per_epoch for k, v in sums.items()})
        if val_items:
            m = evaluate_encoded(model, val_items)
            row.update({"val_accuracy": m["accuracy"], "val_miou": m["miou"]})
        history.append(row)
        log.info("epoch %s", row)
        if on_epoch is not None:
            on_epoch(row)
    model.eval()
    return Checkpoint.from_model(model, lex, seed, history)
