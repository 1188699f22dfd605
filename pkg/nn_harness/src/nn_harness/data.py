"""File-based access to cadseq datasets.

The harness shares no code with the toolkit that writes these files; it
reads the documented formats directly: ``manifest.json`` with records and
splits, matrix documents ``{"matrix": [[t, I, x, y, a, r, d] x 10]}``, and
8-bit binary PGM images.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetMissingError, ShapeMismatchError

MATRIX_SHAPE = (10, 7)
EOP = 6


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    sequence_id: str
    split: str
    matrix_path: Path
    image_path: Path


@dataclass
class Dataset:
    root: Path
    records: list[SampleRecord]

    def split(self, name: str) -> list[SampleRecord]:
        if name == "all":
            return list(self.records)
        return [r for r in self.records if r.split == name]

    def ids(self, split: str = "all") -> list[str]:
        return [r.sample_id for r in self.split(split)]


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DatasetMissingError(f"no manifest.json under {root}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    records = []
    for entry in manifest["records"]:
        record = SampleRecord(
            sample_id=entry["id"],
            sequence_id=entry["sequence"],
            split=entry["split"],
            matrix_path=root / entry["matrix"],
            image_path=root / entry["image"],
        )
        if not record.matrix_path.exists():
            raise DatasetMissingError(f"missing matrix file {record.matrix_path}")
        if not record.image_path.exists():
            raise DatasetMissingError(f"missing image file {record.image_path}")
        records.append(record)
    return Dataset(root=root, records=records)


def read_matrix(path: str | Path) -> np.ndarray:
    data = np.array(json.loads(Path(path).read_text(encoding="utf-8"))["matrix"], dtype=np.int64)
    if data.shape != MATRIX_SHAPE:
        raise ShapeMismatchError(f"{path}: matrix shape {data.shape} != {MATRIX_SHAPE}")
    return data


def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    if matrix.shape != MATRIX_SHAPE:
        raise ShapeMismatchError(f"matrix shape {matrix.shape} != {MATRIX_SHAPE}")
    payload = {"matrix": [[int(v) for v in row] for row in matrix]}
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def read_pgm(path: str | Path) -> np.ndarray:
    """8-bit binary PGM to a float array in [0, 1]."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ShapeMismatchError(f"{path}: not a binary PGM file")
    fields: list[bytes] = []
    i = 2
    while len(fields) < 3:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(raw) and not raw[i : i + 1].isspace():
            i += 1
        fields.append(raw[start:i])
    i += 1  # the single whitespace after maxval
    width, height, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise ShapeMismatchError(f"{path}: unsupported maxval {maxval}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=i)
    if pixels.size != width * height:
        raise ShapeMismatchError(f"{path}: truncated pixel data")
    return pixels.reshape(height, width).astype(np.float32) / 255.0


def load_matrices(records: list[SampleRecord]) -> np.ndarray:
    if not records:
        raise DatasetMissingError("no records to load matrices from")
    return np.stack([read_matrix(r.matrix_path) for r in records])


def load_images(records: list[SampleRecord]) -> np.ndarray:
    if not records:
        raise DatasetMissingError("no records to load images from")
    return np.stack([read_pgm(r.image_path) for r in records])


def sequence_length(matrix: np.ndarray) -> int:
    eops = np.nonzero(matrix[:, 0] == EOP)[0]
    return int(eops[0]) + 1 if eops.size else matrix.shape[0]
