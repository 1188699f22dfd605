"""One-command reproduction pipeline.

Chains dataset synthesis (through the cadseq CLI), stage-1 and stage-2
training, prediction, and scoring (again through the cadseq CLI).  The
two packages exchange only files: dataset directories in, prediction
matrix documents out, report JSON back.
"""

from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

from .config import Stage1Config, Stage2Config
from .data import load_dataset
from .predict import predict_dataset
from .stage1 import load_codec, load_latent_table, reconstruct_matrices, train_stage1
from .stage2 import load_image_encoder, train_stage2

DEFAULT_COUNTS = "TS1=140,TS2=45,TS3=45,TS4a=45,TS4b=45,TS4c=45,TS5a=45,TS5b=45,TS5c=45"


def _cadseq(*args: str) -> None:
    command = [sys.executable, "-m", "cadseq.cli", *args]
    result = subprocess.run(command, capture_output=True, text=True)
    if result.returncode != 0:
        raise RuntimeError(
            f"cadseq command failed ({' '.join(args[:2])}): {result.stderr.strip()}"
        )


@dataclass
class RunSummary:
    work_dir: Path
    dataset_dir: Path
    stage1_val_report: Path
    train_report: Path
    test_report: Path
    stage2_val_loss: float
    control_val_loss: float | None

    def to_json_dict(self) -> dict:
        return {
            "dataset": str(self.dataset_dir),
            "stage1_val_report": str(self.stage1_val_report),
            "train_report": str(self.train_report),
            "test_report": str(self.test_report),
            "stage2_val_loss": self.stage2_val_loss,
            "control_val_loss": self.control_val_loss,
        }


def run_all(work_dir: str | Path, *, seed: int = 0, counts: str = DEFAULT_COUNTS,
            dataset_dir: str | Path | None = None,
            stage1: Stage1Config | None = None,
            stage2: Stage2Config | None = None,
            with_control: bool = False, log: bool = True) -> RunSummary:
    """Synthesize (or reuse) a dataset, train both stages, predict, score."""
    work = Path(work_dir)
    work.mkdir(parents=True, exist_ok=True)
    stage1 = stage1 or Stage1Config(seed=seed)
    stage2 = stage2 or Stage2Config(seed=seed)

    if dataset_dir is None:
        dataset_dir = work / "dataset"
        if log:
            print(f"synthesizing dataset into {dataset_dir}")
        _cadseq(
            "synth", "--mode", "rules", "--seed", str(seed), "--counts", counts,
            "--out", str(dataset_dir),
        )
    dataset_dir = Path(dataset_dir)
    dataset = load_dataset(dataset_dir)

    if log:
        print(f"training stage 1 ({stage1.variant}, {stage1.epochs} epochs)")
    stage1_art = train_stage1(dataset, stage1, work / "stage1", log=log)
    codec, _ = load_codec(stage1_art.checkpoint_path)

    reconstructions = work / "stage1" / "reconstructions"
    reconstruct_matrices(codec, dataset, reconstructions, split="all")
    stage1_val_report = work / "reports" / "stage1_val_report.json"
    stage1_val_report.parent.mkdir(parents=True, exist_ok=True)
    _cadseq(
        "eval", "--gt", str(dataset_dir), "--pred", str(reconstructions),
        "--split", "val", "--no-geometry", "--out", str(stage1_val_report),
    )

    latent_table, latent_dim = load_latent_table(stage1_art.latents_path)
    if log:
        print(f"training stage 2 ({stage2.epochs} epochs, latent dim {latent_dim})")
    stage2_art = train_stage2(dataset, latent_table, stage2, work / "stage2", log=log)
    control_val_loss = None
    if with_control:
        if log:
            print("training shuffled-pairing control")
        control = train_stage2(
            dataset, latent_table, stage2, work / "stage2_control",
            shuffle_pairs=seed + 1, log=log,
        )
        control_val_loss = control.final_val_loss

    encoder, s2_config, enc_dim, image_mean, image_std = load_image_encoder(
        stage2_art.checkpoint_path
    )
    predictions = work / "predictions"
    if log:
        print(f"writing predictions into {predictions}")
    predict_dataset(
        codec, encoder, dataset, s2_config.image_size, image_mean, image_std, predictions
    )

    train_report = work / "reports" / "train_report.json"
    test_report = work / "reports" / "test_report.json"
    _cadseq(
        "eval", "--gt", str(dataset_dir), "--pred", str(predictions),
        "--split", "train", "--no-geometry", "--out", str(train_report),
    )
    _cadseq(
        "eval", "--gt", str(dataset_dir), "--pred", str(predictions),
        "--split", "test", "--out", str(test_report),
    )

    summary = RunSummary(
        work_dir=work,
        dataset_dir=dataset_dir,
        stage1_val_report=stage1_val_report,
        train_report=train_report,
        test_report=test_report,
        stage2_val_loss=stage2_art.final_val_loss,
        control_val_loss=control_val_loss,
    )
    (work / "summary.json").write_text(
        json.dumps(summary.to_json_dict(), indent=1) + "\n", encoding="utf-8"
    )
    if log:
        train_asot = json.loads(train_report.read_text())["per_n"]["6"]["asot"]
        print(f"training-split ASOT at n=6: {train_asot:.3f}")
        print(f"summary written to {work / 'summary.json'}")
    return summary
