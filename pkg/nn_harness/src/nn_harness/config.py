"""Training configuration with paper-scale and desk-scale presets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any


@dataclass(frozen=True)
class Stage1Config:
    """Sequence autoencoder training settings."""

    variant: str = "vae"          # "ae" or "vae"
    latent_dim: int = 64          # paper default 256, desk 64
    model_dim: int = 256
    layers: int = 3               # per encoder/decoder stack
    heads: int = 8
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    kl_weight: float = 1e-2       # linear warm-up over the first 10% of epochs
    augment: bool = True          # slot-noise augmentation of training matrices
    tail_average: float = 0.1     # average weights over this final fraction of epochs
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("ae", "vae"):
            raise ValueError(f"variant must be 'ae' or 'vae', got {self.variant!r}")


@dataclass(frozen=True)
class Stage2Config:
    """Image-encoder regression settings."""

    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    dropout: float = 0.4
    image_size: int = 64          # images are resized to this square input
    pretrained: bool = True       # falls back to random init when unavailable
    seed: int = 0


#: Paper-scale presets (full corpus, long training).
PAPER_STAGE1 = Stage1Config(latent_dim=256, epochs=500, batch_size=512)
PAPER_STAGE2 = Stage2Config(epochs=50, batch_size=128, image_size=128)

#: Desk-scale presets (hundreds of samples, minutes of CPU time).
DESK_STAGE1 = Stage1Config()
DESK_STAGE2 = Stage2Config()


def stage1_preset(name: str, **overrides: Any) -> Stage1Config:
    base = {"paper": PAPER_STAGE1, "desk": DESK_STAGE1}[name]
    return replace(base, **overrides)


def stage2_preset(name: str, **overrides: Any) -> Stage2Config:
    base = {"paper": PAPER_STAGE2, "desk": DESK_STAGE2}[name]
    return replace(base, **overrides)
