"""Command-line interface for the training harness."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .config import stage1_preset, stage2_preset
from .data import load_dataset
from .errors import HarnessError
from .predict import predict_dataset
from .run_all import DEFAULT_COUNTS, run_all
from .stage1 import load_codec, load_latent_table, reconstruct_matrices, train_stage1
from .stage2 import load_image_encoder, train_stage2


def _add_stage1_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--variant", choices=("ae", "vae"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--seed", type=int, default=0)


def _stage1_config(args):
    overrides = {"seed": args.seed}
    for name in ("variant", "epochs", "batch_size", "latent_dim"):
        value = getattr(args, name.replace("-", "_"))
        if value is not None:
            overrides[name] = value
    return stage1_preset(args.preset, **overrides)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nn-harness",
                                     description="Two-stage image-to-CAD-sequence trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-stage1", help="train the sequence autoencoder")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_stage1_flags(p)

    p = sub.add_parser("reconstruct", help="encode-decode dataset matrices")
    p.add_argument("--dataset", required=True)
    p.add_argument("--stage1", required=True, help="stage-1 output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="all")

    p = sub.add_parser("train-stage2", help="train the image encoder")
    p.add_argument("--dataset", required=True)
    p.add_argument("--stage1", required=True, help="stage-1 output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=("desk", "paper"), default="desk")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--shuffle-pairs", type=int, help="negative control: permute pairings with this seed")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("predict", help="images through encoder and decoder")
    p.add_argument("--dataset", required=True)
    p.add_argument("--stage1", required=True)
    p.add_argument("--stage2", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="all")

    p = sub.add_parser("run-all", help="synth, train both stages, predict, score")
    p.add_argument("--work", required=True)
    p.add_argument("--dataset", help="reuse an existing dataset directory")
    p.add_argument("--counts", default=DEFAULT_COUNTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stage1-epochs", type=int)
    p.add_argument("--stage1-batch-size", type=int)
    p.add_argument("--variant", choices=("ae", "vae"))
    p.add_argument("--stage2-epochs", type=int)
    p.add_argument("--with-control", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train-stage1":
            dataset = load_dataset(args.dataset)
            train_stage1(dataset, _stage1_config(args), args.out)
        elif args.command == "reconstruct":
            dataset = load_dataset(args.dataset)
            codec, _ = load_codec(Path(args.stage1) / "model.pt")
            reconstruct_matrices(codec, dataset, args.out, split=args.split)
        elif args.command == "train-stage2":
            dataset = load_dataset(args.dataset)
            overrides = {"seed": args.seed}
            for name in ("epochs", "batch_size", "image_size"):
                value = getattr(args, name)
                if value is not None:
                    overrides[name] = value
            config = stage2_preset(args.preset, **overrides)
            latent_table, _ = load_latent_table(Path(args.stage1) / "latents.json")
            train_stage2(dataset, latent_table, config, args.out,
                         shuffle_pairs=args.shuffle_pairs)
        elif args.command == "predict":
            dataset = load_dataset(args.dataset)
            codec, _ = load_codec(Path(args.stage1) / "model.pt")
            encoder, config, _, mean, std = load_image_encoder(Path(args.stage2) / "encoder.pt")
            predict_dataset(codec, encoder, dataset, config.image_size, mean, std,
                            args.out, split=args.split)
        elif args.command == "run-all":
            stage1 = stage1_preset("desk", seed=args.seed)
            if args.stage1_epochs is not None:
                stage1 = replace(stage1, epochs=args.stage1_epochs)
            if args.stage1_batch_size is not None:
                stage1 = replace(stage1, batch_size=args.stage1_batch_size)
            if args.variant is not None:
                stage1 = replace(stage1, variant=args.variant)
            stage2 = stage2_preset("desk", seed=args.seed)
            if args.stage2_epochs is not None:
                stage2 = replace(stage2, epochs=args.stage2_epochs)
            run_all(args.work, seed=args.seed, counts=args.counts,
                    dataset_dir=args.dataset, stage1=stage1, stage2=stage2,
                    with_control=args.with_control)
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
