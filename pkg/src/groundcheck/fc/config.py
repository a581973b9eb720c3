from __future__ import annotations

from dataclasses import asdict, dataclass, fields

MODES = ("FCRegComb", "FCRegBCE", "FCRegSep", "FCRegDual")
GIOU_CONVENTIONS = ("standard", "paper-literal")
TEXT_INPUTS = ("ffl3", "ffl4")


@dataclass(frozen=True)
class FCConfig:
    """Hyper-parameters of the fact-checking model and its training run.

    The learning rate default is scaled for the toy corpus; the large-scale
    recipe (peak 1e-5, 50 warm-up steps, 100 epochs, batch 32) is available
    through :meth:`paper_recipe`.
    """

    mode: str = "FCRegComb"
    tau: float = 0.07
    d_joint: int = 64
    # image encoder
    image_size: int = 128
    grid: int = 6
    pool: int = 24
    patch_width: int = 32
    # text encoder
    token_dim: int = 16
    text_hidden: int = 128
    text_input: str = "ffl4"
    # regressor
    regressor_widths: tuple[int, ...] = (512, 256)
    dropout: float = 0.1
    activation: str = "relu"
    # losses
    lambda_l1: float = 1.0
    lambda_giou: float = 1.0
    lambda_mse: float = 1.0
    lambda_bce: float = 1.0
    contrastive_weight: float = 1.0
    giou: str = "standard"
    incl_positive_denominator: bool = False
    cross_sample_negatives: bool = False
    # optimization
    lr_max: float = 2e-3
    weight_decay: float = 0.01
    warmup_steps: int = 50
    epochs: int = 100
    batch_size: int = 32

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.giou not in GIOU_CONVENTIONS:
            raise ValueError(f"giou must be one of {GIOU_CONVENTIONS}")
        if self.text_input not in TEXT_INPUTS:
            raise ValueError(f"text_input must be one of {TEXT_INPUTS}")
        if self.activation not in ("relu", "identity"):
            raise ValueError("activation must be 'relu' or 'identity'")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.pool % self.grid:
            raise ValueError("pool must be a multiple of grid")
        weights = (self.lambda_l1, self.lambda_giou, self.lambda_mse, self.lambda_bce, self.contrastive_weight)
        if min(weights) < 0:
            raise ValueError("loss weights must be non-negative")
        object.__setattr__(self, "regressor_widths", tuple(int(w) for w in self.regressor_widths))

    @classmethod
    def paper_recipe(cls, **overrides) -> "FCConfig":
        base = dict(d_joint=512, lr_max=1e-5, warmup_steps=50, epochs=100, batch_size=32)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regressor_widths"] = list(self.regressor_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FCConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown FCConfig keys: {sorted(unknown)}")
        d = dict(d)
        if "regressor_widths" in d:
            d["regressor_widths"] = tuple(d["regressor_widths"])
        return cls(**d)
