"""Command-line entry point wiring all toolkit modules together."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dsl import (
    CadProgram,
    emit_gallery_script,
    emit_sim_gallery,
    parse_program,
    validate_grammar,
)
from .errors import CadseqError, EmptyInputError
from .geometry import evaluate_program, write_stl, write_voxel_grid
from .metrics import (
    DEFAULT_ETA,
    DEFAULT_PREFIX_MAX,
    MetricsReport,
    PredictionPair,
    baseline_ap1_no_sketch,
    baseline_ap1_with_sketch,
    report,
)
from .rendering import Camera, render, write_pgm
from .synth import (
    DESK_COUNTS,
    FULL_COUNTS,
    MANIFEST_FORMAT_VERSION,
    TEMPLATES,
    all_templates,
    draw_template_program,
    load_manifest,
    load_matrix,
    synthesize_dataset,
)
from .vector import MATRIX_FORMAT_VERSION, devectorize, vectorize

DEFAULT_RESOLUTION = 64
DEFAULT_IMAGE_SIZE = (128, 128)


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        size = (int(w), int(h))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 128x128, got {text!r}")
    if size[0] < 1 or size[1] < 1 or size[0] > 512 or size[1] > 512:
        raise argparse.ArgumentTypeError(f"size {text!r} outside 1x1..512x512")
    return size


def _parse_camera(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"camera must be x,y,z, got {text!r}")
    return tuple(float(p) for p in parts)


def _parse_counts(text: str) -> dict[str, int]:
    if text == "desk":
        return dict(DESK_COUNTS)
    if text == "full":
        return dict(FULL_COUNTS)
    known = {t.seq_id.lower(): t.seq_id for t in TEMPLATES}
    counts: dict[str, int] = {}
    for piece in text.split(","):
        if "=" not in piece:
            raise argparse.ArgumentTypeError(
                f"counts must be 'desk', 'full' or ID=N pairs, got {piece!r}"
            )
        key, value = piece.split("=", 1)
        key = key.strip().lower()
        if key == "all":
            for seq_id in known.values():
                counts[seq_id] = int(value)
            continue
        if key not in known:
            raise argparse.ArgumentTypeError(f"unknown sequence id {key!r}")
        counts[known[key]] = int(value)
    return counts


def threads_cap() -> int:
    """Worker cap from CADSEQ_THREADS (subcommands never exceed it)."""
    raw = os.environ.get("CADSEQ_THREADS", "")
    if not raw:
        return 1
    try:
        cap = int(raw)
    except ValueError:
        raise CadseqError(f"CADSEQ_THREADS must be an integer, got {raw!r}") from None
    if cap < 1:
        raise CadseqError(f"CADSEQ_THREADS must be positive, got {cap}")
    return cap


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cadseq",
        description="Sketch-and-extrude CAD program toolkit",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"cadseq {__version__} "
            f"(matrix-format {MATRIX_FORMAT_VERSION}, manifest-format {MANIFEST_FORMAT_VERSION})"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a paired image/matrix dataset")
    p.add_argument("--mode", choices=("random", "rules"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counts", type=_parse_counts, default="desk",
                   help="'desk', 'full', 'all=N' or 'TS1=60,TS2=20,...'")
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    p.add_argument("--image-size", type=_parse_size, default=DEFAULT_IMAGE_SIZE)
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("parse", help="parse program text and validate it")
    p.add_argument("file")
    p.add_argument("--json", action="store_true", help="print the program as JSON")

    p = sub.add_parser("emit", help="re-emit program text")
    p.add_argument("file")
    p.add_argument("--style", choices=("sim", "gallery"), default="sim")
    p.add_argument("--out")
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("vectorize", help="program text to feature matrix")
    p.add_argument("file")
    p.add_argument("--out", required=True)
    p.add_argument("--packed", action="store_true", help="write 70 int16 LE instead of JSON")
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("devectorize", help="feature matrix to program text")
    p.add_argument("file")
    p.add_argument("--out", required=True)
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("evaluate", help="evaluate a program into solid bodies")
    p.add_argument("file")
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    p.add_argument("--stl", help="write the render meshes as ASCII STL")
    p.add_argument("--voxels", help="write the occupancy union as RLE binary")
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("render", help="render a program to a PGM image")
    p.add_argument("file")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=_parse_size, default=DEFAULT_IMAGE_SIZE)
    p.add_argument("--camera", type=_parse_camera, default=(20.0, 20.0, 20.0))
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--gt", required=True, help="dataset dir with manifest.json, or dir of matrix docs")
    p.add_argument("--pred", required=True, help="dir of predicted matrix docs named by sample id")
    p.add_argument("--eta", type=int, default=DEFAULT_ETA)
    p.add_argument("--prefix-max", type=int, default=DEFAULT_PREFIX_MAX)
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION)
    p.add_argument("--image-size", type=_parse_size, default=DEFAULT_IMAGE_SIZE)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="all")
    p.add_argument("--no-geometry", action="store_true", help="skip IoU/MSE computation")
    p.add_argument("--out", help="write the report JSON here")
    p.add_argument("--text", action="store_true", help="print the text tables")
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("baseline", help="closed-form random-guess parameter accuracy")
    p.add_argument("--eta", type=int, required=True)

    p = sub.add_parser("report", help="pretty-print a saved report JSON")
    p.add_argument("file")

    p = sub.add_parser("roundtrip-check", help="representation round-trip self-test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1000)
    return parser


def _load_program(path: str) -> CadProgram:
    return parse_program(Path(path).read_text(encoding="utf-8"))


def _gt_entries(gt_dir: Path, split: str) -> dict[str, Path]:
    manifest_path = gt_dir / "manifest.json"
    if manifest_path.exists():
        manifest = load_manifest(manifest_path)
        return {
            r.sample_id: gt_dir / r.matrix_path
            for r in manifest.records
            if split == "all" or r.split == split
        }
    return {p.stem: p for p in sorted(gt_dir.glob("*.json")) + sorted(gt_dir.glob("*.bin"))}


def _cmd_synth(args) -> int:
    counts = args.counts if isinstance(args.counts, dict) else _parse_counts(args.counts)
    manifest = synthesize_dataset(
        counts, args.mode, args.seed, args.out,
        resolution=args.resolution, image_size=args.image_size, dry_run=args.dry_run,
    )
    print(f"synthesized {len(manifest.records)} samples into {args.out}"
          + (" (dry run)" if args.dry_run else ""))
    return 0


def _cmd_parse(args) -> int:
    program = _load_program(args.file)
    report_ = validate_grammar(program)
    if args.json:
        print(json.dumps(program.to_dict(), sort_keys=True))
    print(f"{len(program.body)} operations, grammar {report_}")
    return 0 if report_.ok else 1


def _cmd_emit(args) -> int:
    program = _load_program(args.file)
    text = emit_sim_gallery(program) if args.style == "sim" else emit_gallery_script(program)
    if args.out:
        if args.dry_run:
            print(f"would write {args.out}")
            return 0
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_vectorize(args) -> int:
    matrix = vectorize(_load_program(args.file))
    if args.dry_run:
        print(f"would write {args.out}")
        return 0
    if args.packed:
        Path(args.out).write_bytes(matrix.to_bytes())
    else:
        Path(args.out).write_text(matrix.to_json(), encoding="utf-8")
    return 0


def _cmd_devectorize(args) -> int:
    program = devectorize(load_matrix(args.file))
    if args.dry_run:
        print(f"would write {args.out}")
        return 0
    Path(args.out).write_text(emit_sim_gallery(program), encoding="utf-8")
    return 0


def _cmd_evaluate(args) -> int:
    scene = evaluate_program(_load_program(args.file), args.resolution)
    print(f"bodies: {len(scene.bodies)}")
    print(f"voxel volume: {scene.total_volume:.6g}")
    if args.stl:
        if args.dry_run:
            print(f"would write {args.stl}")
        else:
            with open(args.stl, "w", encoding="ascii") as fh:
                write_stl(fh, scene)
    if args.voxels:
        if args.dry_run:
            print(f"would write {args.voxels}")
        else:
            with open(args.voxels, "wb") as fh:
                write_voxel_grid(fh, scene.union_grid())
    return 0


def _cmd_render(args) -> int:
    scene = evaluate_program(_load_program(args.file), args.resolution)
    image = render(scene, Camera(eye=args.camera), args.size)
    if args.dry_run:
        print(f"would write {args.out}")
        return 0
    write_pgm(args.out, image)
    return 0


def _cmd_eval(args) -> int:
    gt_dir = Path(args.gt)
    pred_dir = Path(args.pred)
    gt_entries = _gt_entries(gt_dir, args.split)
    pairs = []
    missing = 0
    for sample_id, gt_path in sorted(gt_entries.items()):
        pred_path = pred_dir / f"{sample_id}.json"
        if not pred_path.exists():
            pred_path = pred_dir / f"{sample_id}.bin"
        if not pred_path.exists():
            missing += 1
            continue
        pairs.append(PredictionPair(load_matrix(gt_path), load_matrix(pred_path)))
    if missing:
        print(f"warning: {missing} ground-truth samples have no prediction", file=sys.stderr)
    if not pairs:
        raise EmptyInputError("no (ground truth, prediction) pairs found")
    if args.dry_run:
        print(f"would evaluate {len(pairs)} pairs"
              + (f" and write {args.out}" if args.out else ""))
        return 0
    result = report(
        pairs, eta=args.eta, n_max=args.prefix_max, resolution=args.resolution,
        image_size=args.image_size, include_geometry=not args.no_geometry,
    )
    if args.out:
        Path(args.out).write_text(
            json.dumps(result.to_json_dict(), sort_keys=True) + "\n", encoding="utf-8"
        )
    if args.text or not args.out:
        sys.stdout.write(result.to_text())
    return 0


def _cmd_baseline(args) -> int:
    print(f"eta {args.eta}")
    print(f"ap1-random-no-sketch {baseline_ap1_no_sketch(args.eta)!r}")
    print(f"ap1-random-with-sketch {baseline_ap1_with_sketch(args.eta)!r}")
    return 0


def _cmd_report(args) -> int:
    data = json.loads(Path(args.file).read_text(encoding="utf-8"))
    sys.stdout.write(MetricsReport.from_json_dict(data).to_text())
    return 0


def _cmd_roundtrip_check(args) -> int:
    from .synth import MODE_RANDOM, MODE_RULES

    failures = 0
    checked = 0
    templates = all_templates()
    for i in range(args.count):
        template = templates[i % len(templates)]
        mode = MODE_RANDOM if (i // len(templates)) % 2 == 0 else MODE_RULES
        rng = np.random.default_rng([args.seed, i])
        program = draw_template_program(template, mode, rng)
        matrix = vectorize(program)
        recovered = devectorize(matrix)
        checked += 1
        if recovered != program or vectorize(recovered) != matrix:
            failures += 1
    print(f"round trip: {checked - failures}/{checked} programs identical after snapping")
    if failures:
        return 1
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "parse": _cmd_parse,
    "emit": _cmd_emit,
    "vectorize": _cmd_vectorize,
    "devectorize": _cmd_devectorize,
    "evaluate": _cmd_evaluate,
    "render": _cmd_render,
    "eval": _cmd_eval,
    "baseline": _cmd_baseline,
    "report": _cmd_report,
    "roundtrip-check": _cmd_roundtrip_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        threads_cap()
        return _COMMANDS[args.command](args)
    except CadseqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
