"""Self-describing single-file checkpoints (JSON with base64 tensors)."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..ffl import Lexicon
from .config import FCConfig

FORMAT = "groundcheck-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    return {
        "dtype": a.dtype.str,
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


@dataclass
class Checkpoint:
    config: FCConfig
    seed: int
    lexicon: dict
    state: dict[str, np.ndarray]
    metrics: list[dict] = field(default_factory=list)
    _model: object = field(default=None, repr=False, compare=False)

    @classmethod
    def from_model(cls, model, lex: Lexicon, seed: int, metrics: list[dict]) -> "Checkpoint":
        state = {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}
        ckpt = cls(model.cfg, seed, lex.to_dict(), state, list(metrics))
        ckpt._model = model
        return ckpt

    def model(self):
        from .model import FCModel

        if self._model is None:
            m = FCModel(self.config, Lexicon.from_dict(self.lexicon))
            m.load_state_dict({k: torch.from_numpy(v) for k, v in self.state.items()})
            m.eval()
            self._model = m
        return self._model

    def to_json(self) -> dict:
        return {
            "format": FORMAT,
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "seed": self.seed,
            "lexicon": self.lexicon,
            "metrics": self.metrics,
            "params": {k: _encode_array(v) for k, v in sorted(self.state.items())},
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, d: dict) -> "Checkpoint":
        if d.get("format") != FORMAT:
            raise CheckpointError("not a groundcheck checkpoint")
        if d.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {d.get('format_version')!r}")
        try:
            return cls(
                config=FCConfig.from_dict(d["config"]),
                seed=int(d["seed"]),
                lexicon=d["lexicon"],
                state={k: _decode_array(v) for k, v in d["params"].items()},
                metrics=list(d.get("metrics", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"malformed checkpoint: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: not JSON ({exc})") from exc
        return cls.from_json(d)
