"""Seeded 70-10-20 train/val/test splits by image, regenerated per fold."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Sample

FRACTIONS = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def part(self, name: str) -> tuple[str, ...]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown split part {name!r}")
        return getattr(self, name)


def make_split(image_ids: Sequence[str], fold: int = 0, folds: int = 3, seed: int = 0) -> Split:
    """Shuffle ids once per seed, then rotate the order by ``fold / folds``
    of its length. With ``folds`` <= 5 the test parts of different folds
    are disjoint."""
    if folds < 1 or not 0 <= fold < folds:
        raise ValueError(f"need 0 <= fold < folds, got fold={fold} folds={folds}")
    ids = sorted(set(image_ids))
    if len(ids) < 3:
        raise ValueError("need at least three images to split")
    order = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
    shift = (fold * len(ids)) // folds
    order = order[shift:] + order[:shift]
    n_train = int(round(FRACTIONS[0] * len(ids)))
    n_val = max(int(round(FRACTIONS[1] * len(ids))), 1)
    n_train = min(n_train, len(ids) - n_val - 1)
    return Split(
        tuple(order[:n_train]),
        tuple(order[n_train : n_train + n_val]),
        tuple(order[n_train + n_val :]),
    )


def select(samples: Sequence[Sample], ids: Sequence[str]) -> list[Sample]:
    """Samples whose image is in ``ids``, in corpus order."""
    keep = set(ids)
    return [s for s in samples if s.image_id in keep]
