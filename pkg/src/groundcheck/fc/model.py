"""Toy image/text encoders, joint projections and the regression heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..ffl import FFL, UNSPECIFIED, Lexicon, UnknownTermError
from .config import FCConfig


class Vocab:
    """Token ids for the four FFL fields, fixed by the lexicon."""

    def __init__(self, lex: Lexicon):
        self.types = sorted({"anatomicalfinding", *lex.finding_types.values()})
        self.polarities = ["yes", "no"]
        self.findings = list(lex.findings)
        self.anatomies = [UNSPECIFIED, *lex.regions]
        self._maps = [{v: i for i, v in enumerate(t)} for t in (self.types, self.polarities, self.findings, self.anatomies)]

    @property
    def sizes(self) -> tuple[int, int, int, int]:
        return tuple(len(m) for m in self._maps)

    def encode(self, f: FFL, with_anatomy: bool = True) -> list[int]:
        kinds = ("type", "polarity", "finding", "region")
        values = (f.finding_type, f.polarity, f.core_finding, f.anatomy if with_anatomy else UNSPECIFIED)
        out = []
        for m, v, kind in zip(self._maps, values, kinds):
            if v not in m:
                raise UnknownTermError(v, kind)
            out.append(m[v])
        return out


def pool_features(pixels: torch.Tensor, pool: int) -> torch.Tensor:
    """Fixed backbone: average-pool (B, H, W) images onto a pool x pool grid."""
    if pixels.dim() == 2:
        pixels = pixels.unsqueeze(0)
    return F.adaptive_avg_pool2d(pixels.unsqueeze(1), pool).squeeze(1)


def _act(name: str) -> nn.Module:
    return nn.ReLU() if name == "relu" else nn.Identity()


class ToyImageEncoder(nn.Module):
    """Patch-average features, a patch embedding shared across the region
    grid, then a linear projection into the joint space."""

    def __init__(self, cfg: FCConfig):
        super().__init__()
        self.grid = cfg.grid
        self.cell = cfg.pool // cfg.grid
        self.patch = nn.Linear(self.cell * self.cell, cfg.patch_width)
        self.pos = nn.Parameter(torch.zeros(cfg.grid * cfg.grid, cfg.patch_width))
        self.act = _act(cfg.activation)
        self.proj = nn.Linear(cfg.grid * cfg.grid * cfg.patch_width, cfg.d_joint)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        B, g, c = feats.shape[0], self.grid, self.cell
        patches = feats.reshape(B, g, c, g, c).permute(0, 1, 3, 2, 4).reshape(B, g * g, c * c)
        h = self.act(self.patch(patches) + self.pos)
        return F.normalize(self.proj(h.reshape(B, -1)), dim=-1)


class FFLTextEncoder(nn.Module):
    """Token embeddings of (type, polarity, finding, anatomy), concatenated
    and passed through a two-layer projection."""

    def __init__(self, cfg: FCConfig, sizes: tuple[int, int, int, int]):
        super().__init__()
        self.tables = nn.ModuleList(nn.Embedding(n, cfg.token_dim) for n in sizes)
        self.fc1 = nn.Linear(4 * cfg.token_dim, cfg.text_hidden)
        self.act = _act(cfg.activation)
        self.fc2 = nn.Linear(cfg.text_hidden, cfg.d_joint)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        e = torch.cat([t(tokens[:, i]) for i, t in enumerate(self.tables)], dim=-1)
        return F.normalize(self.fc2(self.act(self.fc1(e))), dim=-1)


def _mlp(d_in: int, widths: tuple[int, ...], d_out: int, dropout: float, act: str) -> nn.Sequential:
    layers: list[nn.Module] = []
    for w in widths:
        layers += [nn.Linear(d_in, w), _act(act), nn.Dropout(dropout)]
        d_in = w
    layers.append(nn.Linear(d_in, d_out))
    return nn.Sequential(*layers)


@dataclass
class Outputs:
    z_image: torch.Tensor  # (B, d)
    z_text: torch.Tensor  # (N, d)
    box: torch.Tensor  # (N, 4) in (0, 1)
    veracity: torch.Tensor  # (N,) in (0, 1)


class FCModel(nn.Module):
    def __init__(self, cfg: FCConfig, lex: Lexicon):
        super().__init__()
        self.cfg = cfg
        self.vocab = Vocab(lex)
        self.image_encoder = ToyImageEncoder(cfg)
        self.text_encoder = FFLTextEncoder(cfg, self.vocab.sizes)
        d_in = 2 * cfg.d_joint
        if cfg.mode == "FCRegDual":
            self.box_head = _mlp(d_in, cfg.regressor_widths, 4, cfg.dropout, cfg.activation)
            self.veracity_head = _mlp(d_in, cfg.regressor_widths, 1, cfg.dropout, cfg.activation)
        else:
            self.regressor = _mlp(d_in, cfg.regressor_widths, 5, cfg.dropout, cfg.activation)
        if cfg.mode == "FCRegSep":
            for p in (*self.image_encoder.parameters(), *self.text_encoder.parameters()):
                p.requires_grad_(False)

    def tokens(self, ffls: list[FFL]) -> torch.Tensor:
        with_anatomy = self.cfg.text_input == "ffl4"
        return torch.tensor([self.vocab.encode(f, with_anatomy) for f in ffls], dtype=torch.long)

    def features(self, pixels: torch.Tensor | np.ndarray) -> torch.Tensor:
        pixels = torch.as_tensor(np.asarray(pixels), dtype=self.dtype)
        if pixels.shape[-2:] != (self.cfg.image_size, self.cfg.image_size):
            raise ValueError(f"expected {self.cfg.image_size}x{self.cfg.image_size} image, got {tuple(pixels.shape[-2:])}")
        return pool_features(pixels, self.cfg.pool)

    @property
    def dtype(self) -> torch.dtype:
        return self.image_encoder.proj.weight.dtype

    def forward(self, feats: torch.Tensor, tokens: torch.Tensor, sample_idx: torch.Tensor) -> Outputs:
        z_i = self.image_encoder(feats)
        z_t = self.text_encoder(tokens)
        joint = torch.cat([z_i[sample_idx], z_t], dim=-1)
        if self.cfg.mode == "FCRegDual":
            box = torch.sigmoid(self.box_head(joint))
            ver = torch.sigmoid(self.veracity_head(joint)).squeeze(-1)
        else:
            out = torch.sigmoid(self.regressor(joint))
            box, ver = out[:, :4], out[:, 4]
        return Outputs(z_i, z_t, box, ver)
