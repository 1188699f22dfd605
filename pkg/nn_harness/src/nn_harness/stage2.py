"""Stage 2: regress the stage-1 latent of a sample from its image.

The encoder minimizes squared error between its embedding of the image
and the paired latent vector, plus weight regularization.  Images are
resized to the configured square input, replicated to three channels and
standardized by training-set statistics (stored with the checkpoint).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .config import Stage2Config
from .data import Dataset, SampleRecord, load_images
from .errors import DatasetMissingError, DimensionMismatchError, MissingLatentError
from .models import build_image_encoder


def prepare_images(records: list[SampleRecord], image_size: int) -> torch.Tensor:
    """(N, 3, size, size) float tensor from the records' PGM files."""
    raw = torch.from_numpy(load_images(records)).unsqueeze(1)
    resized = F.interpolate(raw, size=(image_size, image_size),
                            mode="bilinear", align_corners=False)
    return resized.repeat(1, 3, 1, 1)


@dataclass
class Stage2Artifacts:
    checkpoint_path: Path
    history: dict[str, list[float]] = field(default_factory=dict)

    @property
    def final_val_loss(self) -> float:
        return self.history["val_loss"][-1]


def train_stage2(dataset: Dataset, latent_table: dict[str, np.ndarray],
                 config: Stage2Config, out_dir: str | Path,
                 shuffle_pairs: int | None = None, log: bool = True) -> Stage2Artifacts:
    """Train the image encoder against the latent table.

    ``shuffle_pairs`` (a seed) deliberately permutes the image-to-latent
    pairing of the training split; it exists for the negative control
    showing that learning depends on correct pairing.  The logged
    validation loss always uses correctly paired held-out samples.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_records = dataset.split("train")
    if not train_records:
        raise DatasetMissingError("dataset has no training split")
    for record in train_records:
        if record.sample_id not in latent_table:
            raise MissingLatentError(f"no latent for training sample {record.sample_id}")
    latent_dim = len(next(iter(latent_table.values())))

    torch.manual_seed(config.seed)
    images = prepare_images(train_records, config.image_size)
    mean = float(images.mean())
    std = float(images.std()) + 1e-6
    images = (images - mean) / std
    targets = torch.from_numpy(
        np.stack([latent_table[r.sample_id] for r in train_records])
    ).float()
    if shuffle_pairs is not None:
        perm = torch.from_numpy(
            np.random.default_rng(shuffle_pairs).permutation(len(targets))
        )
        targets = targets[perm]

    # held-out pairs for the logged validation regression loss
    val_records = [r for r in dataset.split("val") if r.sample_id in latent_table]
    if val_records:
        val_images = prepare_images(val_records, config.image_size)
        val_images = (val_images - mean) / std
        val_targets = torch.from_numpy(
            np.stack([latent_table[r.sample_id] for r in val_records])
        ).float()
        holdout = (val_images, val_targets)
    else:
        # no validation latents available: hold out the training tail
        held = max(1, len(train_records) // 10)
        holdout = (images[-held:], targets[-held:])
        images, targets = images[:-held], targets[:-held]

    encoder = build_image_encoder(latent_dim, config.dropout, config.pretrained)
    optimizer = torch.optim.Adam(
        encoder.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    steps = max(1, math.ceil(len(images) / config.batch_size)) * config.epochs
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=steps, eta_min=config.learning_rate * 0.01
    )
    history: dict[str, list[float]] = {"train_loss": [], "val_loss": []}
    for epoch in range(config.epochs):
        encoder.train()
        perm = torch.randperm(len(images))
        epoch_loss = 0.0
        for start in range(0, len(images), config.batch_size):
            idx = perm[start:start + config.batch_size]
            optimizer.zero_grad()
            loss = F.mse_loss(encoder(images[idx]), targets[idx])
            loss.backward()
            optimizer.step()
            scheduler.step()
            epoch_loss += float(loss.detach()) * len(idx)
        history["train_loss"].append(epoch_loss / len(images))
        encoder.eval()
        with torch.no_grad():
            val_loss = float(F.mse_loss(encoder(holdout[0]), holdout[1]))
        history["val_loss"].append(val_loss)
        if log and (epoch + 1) % max(1, config.epochs // 10) == 0:
            print(f"stage2 epoch {epoch + 1}/{config.epochs}: "
                  f"train {history['train_loss'][-1]:.4f} val {val_loss:.4f}")

    checkpoint_path = out / "encoder.pt"
    torch.save(
        {
            "state_dict": encoder.state_dict(),
            "config": asdict(config),
            "latent_dim": latent_dim,
            "image_mean": mean,
            "image_std": std,
        },
        checkpoint_path,
    )
    (out / "history.json").write_text(json.dumps(history) + "\n", encoding="utf-8")
    return Stage2Artifacts(checkpoint_path, history)


def load_image_encoder(checkpoint_path: str | Path):
    payload = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    config = Stage2Config(**payload["config"])
    encoder = build_image_encoder(payload["latent_dim"], config.dropout, pretrained=False)
    encoder.load_state_dict(payload["state_dict"])
    encoder.eval()
    return encoder, config, payload["latent_dim"], payload["image_mean"], payload["image_std"]


def check_latent_dims(stage1_dim: int, stage2_dim: int) -> None:
    if stage1_dim != stage2_dim:
        raise DimensionMismatchError(
            f"stage-1 latent dimension {stage1_dim} != stage-2 output {stage2_dim}"
        )
