"""Application path: images through the stage-2 encoder and stage-1 decoder."""

from __future__ import annotations

from pathlib import Path

import torch

from .data import Dataset, SampleRecord, write_matrix
from .models import SequenceCodec, greedy_matrices
from .stage2 import check_latent_dims, prepare_images


def predict_records(codec: SequenceCodec, encoder, records: list[SampleRecord],
                    image_size: int, image_mean: float, image_std: float,
                    out_dir: str | Path, batch_size: int = 64) -> list[Path]:
    """Greedy-decoded prediction matrices for each record's image.

    Every output matrix is grammar-padded: rows from the first predicted
    end mark onward are full end-mark rows.
    """
    codec.eval()
    encoder.eval()
    with torch.no_grad():
        probe = encoder(torch.zeros(1, 3, image_size, image_size))
    check_latent_dims(codec.latent_dim, probe.shape[-1])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        images = prepare_images(chunk, image_size)
        images = (images - image_mean) / image_std
        with torch.no_grad():
            z = encoder(images)
            matrices = greedy_matrices(*codec.decode(z))
        for record, matrix in zip(chunk, matrices):
            path = out / f"{record.sample_id}.json"
            write_matrix(path, matrix)
            paths.append(path)
    return paths


def predict_dataset(codec: SequenceCodec, encoder, dataset: Dataset,
                    image_size: int, image_mean: float, image_std: float,
                    out_dir: str | Path, split: str = "all") -> list[Path]:
    return predict_records(
        codec, encoder, dataset.split(split), image_size, image_mean, image_std, out_dir
    )
