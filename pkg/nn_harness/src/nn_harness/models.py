"""Model architectures for the two training stages.

Stage 1 is an attention-based sequence autoencoder over 10x7 quantized
matrices.  Rows embed as the sum of a type embedding and per-slot
projections of a frozen multi-frequency phase code of the parameter value
(-1 has its own learned embedding); the same phase table scores the
per-slot categorical output heads (257 classes: the sentinel plus bins
0..255), which keeps nearby bins nearby in representation space and lets
the codec interpolate between training samples.  The latent is a linear
map of the concatenated row features, so each row stays recoverable.

Stage 2 is a convolutional residual image encoder (ResNet18) with a
dropout layer before the final projection to the latent dimension.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import torch
import torch.nn as nn

NUM_ROWS = 10
NUM_TYPES = 7
NUM_SLOTS = 6
NUM_CLASSES = 257  # the -1 sentinel plus bins 0..255
EOP = 6
SENTINEL = -1


def phase_table(levels: int, dim: int, min_period: float = 4.0,
                max_period: float = 4000.0) -> torch.Tensor:
    """Sin/cos features of a bin index over geometrically spaced periods."""
    i = torch.arange(dim // 2).float()
    periods = min_period * (max_period / min_period) ** (i / (dim // 2 - 1))
    pos = torch.arange(levels).float().unsqueeze(1)
    angles = 2 * math.pi * pos / periods
    out = torch.zeros(levels, dim)
    out[:, 0::2] = torch.sin(angles)
    out[:, 1::2] = torch.cos(angles)
    return out


def _encoder_stack(dim: int, heads: int, layers: int) -> nn.TransformerEncoder:
    layer = nn.TransformerEncoderLayer(
        dim, heads, dim_feedforward=4 * dim, batch_first=True,
        norm_first=True, activation="gelu", dropout=0.0,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return nn.TransformerEncoder(layer, layers)


class SequenceCodec(nn.Module):
    """Autoencoder (plain or variational) over feature matrices."""

    def __init__(self, variant: str = "vae", latent_dim: int = 64,
                 model_dim: int = 256, layers: int = 3, heads: int = 8):
        super().__init__()
        if variant not in ("ae", "vae"):
            raise ValueError(f"variant must be 'ae' or 'vae', got {variant!r}")
        self.variant = variant
        self.latent_dim = latent_dim
        self.model_dim = model_dim
        d = model_dim
        self.type_emb = nn.Embedding(NUM_TYPES, d)
        table = torch.zeros(NUM_CLASSES, d)
        table[1:] = phase_table(256, d)
        self.register_buffer("value_table", table)
        self.sentinel = nn.Parameter(torch.randn(d) * 0.1)
        self.in_proj = nn.ModuleList(
            [nn.Linear(d, d, bias=False) for _ in range(NUM_SLOTS)]
        )
        self.pos = nn.Parameter(torch.randn(NUM_ROWS, d) * 0.02)
        self.encoder = _encoder_stack(d, heads, layers)
        bottleneck_out = 2 * latent_dim if variant == "vae" else latent_dim
        self.to_latent = nn.Linear(NUM_ROWS * d, bottleneck_out)
        self.from_latent = nn.Linear(latent_dim, NUM_ROWS * d)
        self.queries = nn.Parameter(torch.randn(NUM_ROWS, d) * 0.02)
        self.decoder = _encoder_stack(d, heads, layers)
        self.type_head = nn.Linear(d, NUM_TYPES)
        self.slot_proj = nn.ModuleList([nn.Linear(d, d) for _ in range(NUM_SLOTS)])
        self.slot_bias = nn.Parameter(torch.zeros(NUM_SLOTS, NUM_CLASSES))

    def _value_embed(self, values: torch.Tensor) -> torch.Tensor:
        emb = self.value_table[values + 1]
        return torch.where(
            (values < 0).unsqueeze(-1), self.sentinel.expand_as(emb), emb
        )

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        h = self.type_emb(x[:, :, 0])
        for k in range(NUM_SLOTS):
            h = h + self.in_proj[k](self._value_embed(x[:, :, k + 1]))
        return h + self.pos

    def encode_stats(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor | None]:
        """Latent mean plus the log-variance for the variational variant."""
        h = self.encoder(self.embed(x))
        flat = self.to_latent(h.reshape(h.shape[0], -1))
        if self.variant == "vae":
            mu, logvar = flat.chunk(2, dim=-1)
            return mu, logvar
        return flat, None

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.encode_stats(x)[0]

    def reparameterize(self, mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
        return mu + torch.randn_like(mu) * torch.exp(0.5 * logvar)

    def decode(self, z: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Type logits (B, 10, 7) and six slot logits (B, 10, 257)."""
        h = self.from_latent(z).reshape(-1, NUM_ROWS, self.model_dim) + self.queries
        h = self.decoder(h)
        type_logits = self.type_head(h)
        table = torch.cat([self.sentinel.unsqueeze(0), self.value_table[1:]], dim=0)
        scale = 1.0 / math.sqrt(self.model_dim)
        slot_logits = [
            self.slot_proj[k](h) @ table.T * scale + self.slot_bias[k]
            for k in range(NUM_SLOTS)
        ]
        return type_logits, slot_logits

    def forward(self, x: torch.Tensor):
        mu, logvar = self.encode_stats(x)
        z = self.reparameterize(mu, logvar) if (self.training and logvar is not None) else mu
        type_logits, slot_logits = self.decode(z)
        return type_logits, slot_logits, mu, logvar


def greedy_matrices(type_logits: torch.Tensor,
                    slot_logits: list[torch.Tensor]) -> np.ndarray:
    """Per-slot argmax decode to (B, 10, 7) matrices with forced padding.

    From the first predicted end mark onward every row becomes a full
    end-mark row, so decoder outputs are always grammar-padded.
    """
    types = type_logits.argmax(dim=-1).cpu().numpy()
    params = torch.stack(
        [logits.argmax(dim=-1) - 1 for logits in slot_logits], dim=-1
    ).cpu().numpy()
    batch = types.shape[0]
    out = np.empty((batch, NUM_ROWS, 1 + NUM_SLOTS), dtype=np.int64)
    out[:, :, 0] = types
    out[:, :, 1:] = params
    for i in range(batch):
        eops = np.nonzero(out[i, :, 0] == EOP)[0]
        if eops.size:
            first = int(eops[0])
            out[i, first:, 0] = EOP
            out[i, first:, 1:] = SENTINEL
    return out


def build_image_encoder(latent_dim: int, dropout: float = 0.4,
                        pretrained: bool = True) -> nn.Module:
    """ResNet18 backbone projecting to the latent dimension.

    Tries the pretrained weights first and falls back to random
    initialization when they cannot be fetched (offline environments).
    """
    import torchvision

    weights = None
    if pretrained:
        try:
            weights = torchvision.models.ResNet18_Weights.DEFAULT
            encoder = torchvision.models.resnet18(weights=weights)
        except Exception as exc:  # no network: fall back to random init
            warnings.warn(f"pretrained weights unavailable ({exc}); using random init")
            encoder = torchvision.models.resnet18(weights=None)
    else:
        encoder = torchvision.models.resnet18(weights=None)
    encoder.fc = nn.Sequential(nn.Dropout(dropout), nn.Linear(512, latent_dim))
    return encoder
