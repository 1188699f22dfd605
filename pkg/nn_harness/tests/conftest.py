from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import pytest

from nn_harness.config import Stage1Config, Stage2Config
from nn_harness.data import Dataset, load_dataset

#: Tiny model settings that keep unit tests fast; acceptance uses real ones.
TINY_STAGE1 = Stage1Config(variant="ae", latent_dim=16, model_dim=64, layers=1,
                           heads=4, epochs=4, batch_size=16, seed=0)
TINY_STAGE2 = Stage2Config(epochs=2, batch_size=16, image_size=32, pretrained=False, seed=0)


def synthesize(out: Path, counts: str, seed: int = 11) -> Dataset:
    command = [
        sys.executable, "-m", "cadseq.cli", "synth", "--mode", "rules",
        "--seed", str(seed), "--counts", counts, "--out", str(out),
        "--resolution", "32", "--image-size", "64x64",
    ]
    result = subprocess.run(command, capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    return load_dataset(out)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory) -> Dataset:
    out = tmp_path_factory.mktemp("tiny_ds")
    return synthesize(out, "all=8")
