"""Stage 1: train the sequence autoencoder and export its latent table.

The reconstruction loss is cross-entropy per slot: plain for the type
column, the sketch-plane slot and the unused sentinel, and against a
small ordinal kernel over neighboring bins for quantized continuous
slots.  Training matrices are augmented with slot noise (bin jitter and
occasional uniform resampling of used slots), which densifies the
identity map the codec must learn; validation always sees clean data.
The variational variant adds a KL term whose weight warms up linearly
over the first tenth of the epochs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .config import Stage1Config
from .data import Dataset, load_matrices, write_matrix
from .errors import DatasetMissingError
from .models import NUM_CLASSES, NUM_SLOTS, SequenceCodec, greedy_matrices

_KERNEL_OFFSETS = (-2, -1, 0, 1, 2)
_KERNEL_WEIGHTS = (0.05, 0.25, 1.0, 0.25, 0.05)


def _soft_targets(values: torch.Tensor, plane_slot: bool) -> torch.Tensor:
    """Target distributions over the 257 classes for one slot column."""
    n = values.shape[0]
    out = torch.zeros(n, NUM_CLASSES)
    idx = values + 1
    exact = (values < 0) | torch.full((n,), plane_slot, dtype=torch.bool)
    out[torch.arange(n)[exact], idx[exact]] = 1.0
    rest = (~exact).nonzero().squeeze(-1)
    if rest.numel():
        for off, w in zip(_KERNEL_OFFSETS, _KERNEL_WEIGHTS):
            j = (idx[rest] + off).clamp(1, NUM_CLASSES - 1)
            out[rest, j] += w
        out[rest] /= out[rest].sum(dim=1, keepdim=True)
    return out


def reconstruction_loss(type_logits: torch.Tensor, slot_logits: list[torch.Tensor],
                        x: torch.Tensor, type_weight: float = 3.0) -> torch.Tensor:
    loss = type_weight * F.cross_entropy(
        type_logits.reshape(-1, type_logits.shape[-1]), x[:, :, 0].reshape(-1)
    )
    for k in range(NUM_SLOTS):
        targets = _soft_targets(x[:, :, k + 1].reshape(-1), plane_slot=(k == 0))
        logp = F.log_softmax(slot_logits[k].reshape(-1, NUM_CLASSES), dim=-1)
        loss = loss + (-(targets * logp).sum(dim=-1)).mean()
    return loss / (type_weight + NUM_SLOTS)


def kl_divergence(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    return (-0.5 * (1 + logvar - mu.pow(2) - logvar.exp()).sum(dim=-1)).mean()


def augment_slots(batch: torch.Tensor, rng: np.random.Generator,
                  jitter: int = 16, jitter_prob: float = 0.75,
                  resample_prob: float = 0.25) -> torch.Tensor:
    """Slot-noise augmentation keeping the used/unused pattern intact."""
    x = batch.clone()
    values = x[:, :, 1:]
    used = values >= 0
    used[:, :, 0] = False  # the plane slot keeps its discrete value
    shape = values.shape
    offsets = torch.from_numpy(rng.integers(-jitter, jitter + 1, size=shape))
    offsets[torch.from_numpy(rng.random(shape) >= jitter_prob)] = 0
    resample = torch.from_numpy(rng.random(shape) < resample_prob)
    uniform = torch.from_numpy(rng.integers(0, 256, size=shape))
    noisy = torch.where(resample, uniform, (values + offsets).clamp(0, 255))
    x[:, :, 1:] = torch.where(used, noisy, values)
    return x


@dataclass
class Stage1Artifacts:
    checkpoint_path: Path
    latents_path: Path
    history: dict[str, list[float]] = field(default_factory=dict)


def train_stage1(dataset: Dataset, config: Stage1Config, out_dir: str | Path,
                 log: bool = True) -> Stage1Artifacts:
    """Train the codec on the train split and export training latents.

    Writes ``model.pt`` (weights plus config), ``latents.json`` (the
    latent vector of every training sample keyed by id) and
    ``history.json`` (per-epoch train/validation losses).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_records = dataset.split("train")
    val_records = dataset.split("val")
    if not train_records:
        raise DatasetMissingError("dataset has no training split")
    torch.manual_seed(config.seed)
    x_train = torch.from_numpy(load_matrices(train_records))
    x_val = torch.from_numpy(load_matrices(val_records)) if val_records else None

    model = SequenceCodec(
        config.variant, config.latent_dim, config.model_dim, config.layers, config.heads
    )
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    steps_per_epoch = max(1, math.ceil(len(x_train) / config.batch_size))
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=config.epochs * steps_per_epoch, eta_min=config.learning_rate * 0.01
    )
    warmup_epochs = max(1, config.epochs // 10)
    aug_rng = np.random.default_rng(config.seed)

    # averaging the weights of the final epochs damps end-of-run noise
    tail_start = config.epochs - max(1, int(config.epochs * config.tail_average))
    averaged: dict[str, torch.Tensor] | None = None
    averaged_count = 0

    history: dict[str, list[float]] = {"train_loss": [], "val_loss": []}
    for epoch in range(config.epochs):
        beta = config.kl_weight * min(1.0, (epoch + 1) / warmup_epochs)
        model.train()
        perm = torch.randperm(len(x_train))
        epoch_loss = 0.0
        for start in range(0, len(x_train), config.batch_size):
            batch = x_train[perm[start:start + config.batch_size]]
            if config.augment:
                batch = augment_slots(batch, aug_rng)
            optimizer.zero_grad()
            type_logits, slot_logits, mu, logvar = model(batch)
            loss = reconstruction_loss(type_logits, slot_logits, batch)
            if logvar is not None:
                loss = loss + beta * kl_divergence(mu, logvar)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), 1.0)
            optimizer.step()
            scheduler.step()
            epoch_loss += float(loss.detach()) * len(batch)
        history["train_loss"].append(epoch_loss / len(x_train))
        if config.tail_average > 0 and epoch >= tail_start:
            with torch.no_grad():
                state = model.state_dict()
                if averaged is None:
                    averaged = {k: v.detach().clone().double() for k, v in state.items()}
                else:
                    for k, v in state.items():
                        averaged[k] += v.double()
                averaged_count += 1

        if x_val is not None:
            model.eval()
            with torch.no_grad():
                type_logits, slot_logits, mu, logvar = model(x_val)
                val_loss = reconstruction_loss(type_logits, slot_logits, x_val)
                if logvar is not None:
                    val_loss = val_loss + beta * kl_divergence(mu, logvar)
            history["val_loss"].append(float(val_loss))
        if log and (epoch + 1) % max(1, config.epochs // 10) == 0:
            val_text = f" val {history['val_loss'][-1]:.4f}" if x_val is not None else ""
            print(f"stage1 epoch {epoch + 1}/{config.epochs}: "
                  f"train {history['train_loss'][-1]:.4f}{val_text}")

    if averaged is not None and averaged_count > 1:
        state = model.state_dict()
        model.load_state_dict(
            {k: (averaged[k] / averaged_count).to(state[k].dtype) for k in state}
        )
    model.eval()
    latent_table: dict[str, list[float]] = {}
    # train latents are the stage-2 regression targets; validation latents
    # let stage 2 log a correctly paired held-out loss
    for records, matrices in ((train_records, x_train), (val_records, x_val)):
        if not records:
            continue
        with torch.no_grad():
            latents = model.encode(matrices).numpy()
        for i, record in enumerate(records):
            latent_table[record.sample_id] = [float(v) for v in latents[i]]
    checkpoint_path = out / "model.pt"
    torch.save(
        {"state_dict": model.state_dict(), "config": asdict(config)}, checkpoint_path
    )
    latents_path = out / "latents.json"
    latents_path.write_text(
        json.dumps({"latent_dim": config.latent_dim, "latents": latent_table},
                   sort_keys=True) + "\n",
        encoding="utf-8",
    )
    (out / "history.json").write_text(json.dumps(history) + "\n", encoding="utf-8")
    return Stage1Artifacts(checkpoint_path, latents_path, history)


def load_codec(checkpoint_path: str | Path) -> tuple[SequenceCodec, Stage1Config]:
    payload = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    config = Stage1Config(**payload["config"])
    model = SequenceCodec(
        config.variant, config.latent_dim, config.model_dim, config.layers, config.heads
    )
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, config


def load_latent_table(latents_path: str | Path) -> tuple[dict[str, np.ndarray], int]:
    payload = json.loads(Path(latents_path).read_text(encoding="utf-8"))
    table = {k: np.asarray(v, dtype=np.float32) for k, v in payload["latents"].items()}
    return table, int(payload["latent_dim"])


def reconstruct_matrices(model: SequenceCodec, dataset: Dataset, out_dir: str | Path,
                         split: str = "all", batch_size: int = 256) -> list[Path]:
    """Encode-decode each sample's matrix and write the reconstructions."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = dataset.split(split)
    paths = []
    model.eval()
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        x = torch.from_numpy(load_matrices(chunk))
        with torch.no_grad():
            z = model.encode(x)
            matrices = greedy_matrices(*model.decode(z))
        for record, matrix in zip(chunk, matrices):
            path = out / f"{record.sample_id}.json"
            write_matrix(path, matrix)
            paths.append(path)
    return paths
