"""Contrastive and regression losses of the fact-checking model."""

from __future__ import annotations

import math
from typing import Sequence

import torch
import torch.nn.functional as F

from ..geometry import EPS

PROB_CLAMP = 1e-7


def supcon_loss(
    z_image: Sequence[float],
    reals: Sequence[Sequence[float]],
    fakes: Sequence[Sequence[float]],
    tau: float,
    incl_positive_denominator: bool = False,
) -> float:
    """Per-sample multi-label contrastive loss on plain vectors.

    For every real finding the numerator is its image-text similarity and the
    denominator sums over the sample's *fake* findings only, so the value
    can be negative. Averaged over the real findings.
    """
    if not reals or not fakes:
        raise ValueError("need at least one real and one fake finding")
    zi = [float(v) for v in z_image]

    def sim(z):
        return math.fsum(a * float(b) for a, b in zip(zi, z)) / tau

    s_fake = [sim(z) for z in fakes]
    m = max(s_fake)
    lse_fake = m + math.log(math.fsum(math.exp(s - m) for s in s_fake))
    total = 0.0
    for z in reals:
        s = sim(z)
        denom = lse_fake
        if incl_positive_denominator:
            hi = max(s, lse_fake)
            denom = hi + math.log(math.exp(s - hi) + math.exp(lse_fake - hi))
        total += -(s - denom)
    return total / len(reals)


def batched_supcon(
    z_image: torch.Tensor,
    z_text: torch.Tensor,
    sample_idx: torch.Tensor,
    is_real: torch.Tensor,
    tau: float,
    incl_positive_denominator: bool = False,
    cross_sample_negatives: bool = False,
) -> tuple[torch.Tensor, int]:
    """Batch form of :func:`supcon_loss`, averaged over usable samples.

    Returns the loss and the number of samples skipped for lacking a real or
    a fake finding.
    """
    B = z_image.shape[0]
    sims = z_image @ z_text.T / tau  # (B, N)
    own = sample_idx.unsqueeze(0) == torch.arange(B, device=sims.device).unsqueeze(1)
    fake = ~is_real
    neg = fake.unsqueeze(0) & (own | cross_sample_negatives)
    pos = is_real.unsqueeze(0) & own
    has_neg = neg.any(1)
    has_pos = pos.any(1)
    valid = has_neg & has_pos
    skipped = int(B - valid.sum().item())
    if not bool(valid.any()):
        return sims.sum() * 0.0, skipped
    neg_inf = torch.finfo(sims.dtype).min
    lse_neg = torch.logsumexp(sims.masked_fill(~neg, neg_inf), dim=1)  # (B,)
    s_pos = sims.masked_fill(~pos, 0.0)
    denom = lse_neg.unsqueeze(1).expand_as(sims)
    if incl_positive_denominator:
        denom = torch.logaddexp(denom, sims)
    per_pair = (denom - s_pos).masked_fill(~pos, 0.0)
    per_sample = per_pair.sum(1) / pos.sum(1).clamp_min(1)
    return per_sample[valid].mean(), skipped


def _corners(b: torch.Tensor):
    x, y, w, h = b.unbind(-1)
    return x, y, x + w, y + h


def box_iou_terms(p: torch.Tensor, g: torch.Tensor):
    """Intersection, union and hull areas for (..., 4) xywh boxes."""
    px1, py1, px2, py2 = _corners(p)
    gx1, gy1, gx2, gy2 = _corners(g)
    iw = (torch.minimum(px2, gx2) - torch.maximum(px1, gx1)).clamp_min(0)
    ih = (torch.minimum(py2, gy2) - torch.maximum(py1, gy1)).clamp_min(0)
    inter = iw * ih
    union = p[..., 2] * p[..., 3] + g[..., 2] * g[..., 3] - inter
    hull = (torch.maximum(px2, gx2) - torch.minimum(px1, gx1)) * (torch.maximum(py2, gy2) - torch.minimum(py1, gy1))
    return inter, union, hull


def box_giou(p: torch.Tensor, g: torch.Tensor, literal: bool = False) -> torch.Tensor:
    inter, union, hull = box_iou_terms(p, g)
    iou = torch.where(union >= EPS, inter / union.clamp_min(EPS), torch.zeros_like(inter))
    empty = (hull - inter) if literal else (hull - union)
    out = iou - empty / hull.clamp_min(EPS)
    return torch.where(hull >= EPS, out, torch.zeros_like(out))


def bce(p: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    p = p.clamp(PROB_CLAMP, 1 - PROB_CLAMP)
    return -(y * torch.log(p) + (1 - y) * torch.log(1 - p))


def regression_terms(
    pred_box: torch.Tensor,
    pred_e: torch.Tensor,
    target_box: torch.Tensor,
    target_e: torch.Tensor,
    giou: str = "standard",
) -> dict[str, torch.Tensor]:
    """Unweighted per-finding terms: L1, GIoU, squared error, BCE."""
    diff = pred_box - target_box
    if giou == "standard":
        g = 1.0 - box_giou(pred_box, target_box)
    else:
        # printed form: the raw literal value enters the minimized loss
        g = box_giou(pred_box, target_box, literal=True)
    return {
        "l1": diff.abs().sum(-1),
        "giou": g,
        "mse": (diff * diff).sum(-1),
        "bce": bce(pred_e, target_e),
    }


def regression_loss(
    pred_box: torch.Tensor,
    pred_e: torch.Tensor,
    target_box: torch.Tensor,
    target_e: torch.Tensor,
    weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0),
    giou: str = "standard",
) -> torch.Tensor:
    """Weighted sum of the four terms per finding, shape (...)."""
    t = regression_terms(pred_box, pred_e, target_box, target_e, giou)
    w_l1, w_giou, w_mse, w_bce = weights
    return w_l1 * t["l1"] + w_giou * t["giou"] + w_mse * t["mse"] + w_bce * t["bce"]


def similarity_bce(
    z_image: torch.Tensor, z_text: torch.Tensor, sample_idx: torch.Tensor, target_e: torch.Tensor, tau: float
) -> torch.Tensor:
    """Replacement for the contrastive head: BCE on sigmoid(similarity / tau)."""
    logits = (z_image[sample_idx] * z_text).sum(-1) / tau
    return F.binary_cross_entropy_with_logits(logits, target_e)
