"""Synthesis of paired (image, feature-matrix) training datasets.

Nine template sequences over five template shapes are instantiated with
either uniformly random parameters ("random" mode) or parameters tied by
deterministic design rules ("rules" mode).  Every drawn parameter is
snapped to its quantization bin center before the program is evaluated,
so the stored matrix is an exact record of the geometry that produced
the image.  The last chaining curve of a loop is redirected to the loop
start so profiles close; instantiation rejects and resamples programs
that still fail geometrically (degenerate or self-crossing shapes).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .dsl import CadOp, CadProgram, OpType, emit_sim_gallery
from .errors import CadseqError, SynthesisExhaustedError
from .geometry import SolidScene, evaluate_program
from .rendering import Camera, render, write_pgm
from .vector import (
    COORD_RANGE,
    UNIT_RANGE,
    FeatureMatrix,
    snap_value,
    vectorize,
)

MANIFEST_FORMAT_VERSION = 1
RULES_VERSION = "rules-v1"
MAX_ATTEMPTS = 100

MODE_RANDOM = "random"
MODE_RULES = "rules"

_S, _L, _A, _C, _E = (OpType.SKETCH, OpType.LINE, OpType.ARC, OpType.CIRCLE, OpType.EXTRUDE)


@dataclass(frozen=True)
class TemplateSequence:
    """One template shape variant: an operation-type skeleton to fill in."""

    shape_id: int
    variant: int
    seq_id: str
    body_types: tuple[OpType, ...]

    @property
    def op_type_sequence(self) -> tuple[OpType, ...]:
        return (OpType.SOP, *self.body_types, OpType.EOP)


#: The nine template sequences: shapes 1-3 have one variant each, shapes
#: 4 and 5 three each, all pairwise distinct, bodies at most five ops.
TEMPLATES: tuple[TemplateSequence, ...] = (
    TemplateSequence(1, 0, "TS1", (_S, _C, _E)),
    TemplateSequence(2, 0, "TS2", (_S, _L, _L, _A, _E)),
    TemplateSequence(3, 0, "TS3", (_S, _A, _A, _A, _E)),
    TemplateSequence(4, 0, "TS4a", (_S, _L, _A, _A, _E)),
    TemplateSequence(4, 1, "TS4b", (_S, _A, _L, _A, _E)),
    TemplateSequence(4, 2, "TS4c", (_S, _A, _A, _L, _E)),
    TemplateSequence(5, 0, "TS5a", (_S, _A, _L, _L, _E)),
    TemplateSequence(5, 1, "TS5b", (_S, _L, _A, _L, _E)),
    TemplateSequence(5, 2, "TS5c", (_S, _L, _L, _L, _E)),
)

_TEMPLATES_BY_ID = {t.seq_id: t for t in TEMPLATES}


def all_templates() -> tuple[TemplateSequence, ...]:
    return TEMPLATES


def template_by_id(seq_id: str) -> TemplateSequence:
    try:
        return _TEMPLATES_BY_ID[seq_id]
    except KeyError:
        raise KeyError(f"unknown template sequence {seq_id!r}") from None


def _depth_rule_circle(x: float, y: float) -> float:
    """Extrusion depth tied to the circle center position."""
    return min(1.0, max(0.1, 0.3 + 0.25 * (abs(x) + abs(y))))


def _depth_rule_loop(r_equiv: float) -> float:
    """Extrusion depth tied to the loop's farthest vertex from the origin."""
    return min(1.0, max(0.1, 0.2 + 0.6 * r_equiv))


#: Sweep vocabulary used by the rules mode (quantized design choices).
RULE_SWEEP_CHOICES = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class RuleSet:
    """Deterministic parameter dependencies of the rules synthesis mode."""

    version: str = RULES_VERSION
    circle_depth: Callable[[float, float], float] = _depth_rule_circle
    loop_depth: Callable[[float], float] = _depth_rule_loop
    sweep_choices: tuple[float, ...] = RULE_SWEEP_CHOICES


DEFAULT_RULES = RuleSet()


def rule_depth_for_program(program: CadProgram, rules: RuleSet = DEFAULT_RULES) -> float:
    """Recompute the rules-mode depth implied by a program's own curves.

    For circle templates the input is the circle center; for loop
    templates it is the farthest chained endpoint from the origin.
    """
    body = program.body
    circles = [op for op in body if op.op_type is OpType.CIRCLE]
    if circles:
        return rules.circle_depth(circles[0].end_x, circles[0].end_y)
    r_equiv = 0.0
    for op in body:
        if op.op_type in (OpType.LINE, OpType.ARC):
            r_equiv = max(r_equiv, float(np.hypot(op.end_x, op.end_y)))
    return rules.loop_depth(r_equiv)


def _draw_coord(rng: np.random.Generator) -> float:
    return snap_value(float(rng.uniform(-1.0, 1.0)), COORD_RANGE)


def _draw_unit(rng: np.random.Generator) -> float:
    # 1 - U keeps the draw inside (0, 1].
    return snap_value(1.0 - float(rng.uniform(0.0, 1.0)), UNIT_RANGE)


def draw_template_program(template: TemplateSequence, mode: str,
                          rng: np.random.Generator,
                          rules: RuleSet = DEFAULT_RULES) -> CadProgram:
    """One parameter draw for a template, snapped to bin centers.

    The result is always grammatically valid; geometric validity is the
    caller's concern (see :func:`instantiate_template`).
    """
    if mode not in (MODE_RANDOM, MODE_RULES):
        raise ValueError(f"mode must be '{MODE_RANDOM}' or '{MODE_RULES}', got {mode!r}")
    body: list[CadOp] = []
    curve_indices = [i for i, t in enumerate(template.body_types)
                     if t in (OpType.LINE, OpType.ARC)]
    last_chain = curve_indices[-1] if curve_indices else None
    origin = snap_value(0.0, COORD_RANGE)
    for i, op_type in enumerate(template.body_types):
        if op_type is OpType.SKETCH:
            body.append(CadOp.sketch(int(rng.integers(0, 3))))
        elif op_type is OpType.LINE:
            x, y = _draw_coord(rng), _draw_coord(rng)
            if i == last_chain:
                x = y = origin  # close the loop at the chain start
            body.append(CadOp.line(x, y))
        elif op_type is OpType.ARC:
            x, y = _draw_coord(rng), _draw_coord(rng)
            if i == last_chain:
                x = y = origin
            if mode == MODE_RULES:
                sweep = snap_value(float(rng.choice(rules.sweep_choices)), UNIT_RANGE)
            else:
                sweep = _draw_unit(rng)
            body.append(CadOp.arc(x, y, sweep))
        elif op_type is OpType.CIRCLE:
            body.append(CadOp.circle(_draw_coord(rng), _draw_coord(rng), _draw_unit(rng)))
        elif op_type is OpType.EXTRUDE:
            if mode == MODE_RULES:
                partial = CadProgram.from_body(body)
                depth = snap_value(rule_depth_for_program(partial, rules), COORD_RANGE)
            else:
                depth = 0.0
                while depth == 0.0:
                    depth = float(rng.uniform(-1.0, 1.0))
                depth = snap_value(depth, COORD_RANGE)
            body.append(CadOp.extrude(depth))
    return CadProgram.from_body(body)


def instantiate_template(template: TemplateSequence, mode: str,
                         rng: np.random.Generator, *, resolution: int = 64,
                         rules: RuleSet = DEFAULT_RULES,
                         max_attempts: int = MAX_ATTEMPTS) -> CadProgram:
    """Draw until the program also evaluates into a non-empty solid."""
    program, _ = _instantiate_with_scene(
        template, mode, rng, resolution=resolution, rules=rules,
        max_attempts=max_attempts,
    )
    return program


def _instantiate_with_scene(template: TemplateSequence, mode: str,
                            rng: np.random.Generator, *, resolution: int,
                            rules: RuleSet = DEFAULT_RULES,
                            max_attempts: int = MAX_ATTEMPTS) -> tuple[CadProgram, SolidScene]:
    for _ in range(max_attempts):
        program = draw_template_program(template, mode, rng, rules)
        try:
            scene = evaluate_program(program, resolution)
        except CadseqError:
            continue
        return program, scene
    raise SynthesisExhaustedError(template.seq_id, max_attempts)


@dataclass(frozen=True)
class ManifestRecord:
    sample_id: str
    sequence_id: str
    split: str
    program_path: str
    matrix_path: str
    image_path: str

    def to_json_dict(self) -> dict[str, str]:
        return {
            "id": self.sample_id,
            "sequence": self.sequence_id,
            "split": self.split,
            "program": self.program_path,
            "matrix": self.matrix_path,
            "image": self.image_path,
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, str]) -> "ManifestRecord":
        return cls(
            sample_id=data["id"],
            sequence_id=data["sequence"],
            split=data["split"],
            program_path=data["program"],
            matrix_path=data["matrix"],
            image_path=data["image"],
        )


@dataclass
class DatasetManifest:
    """Description of one synthesized dataset; paths are directory-relative."""

    mode: str
    seed: int
    counts: dict[str, int]
    resolution: int
    image_size: tuple[int, int]
    records: list[ManifestRecord] = field(default_factory=list)
    rules_version: str = RULES_VERSION
    camera_eye: tuple[float, float, float] = (20.0, 20.0, 20.0)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "format_version": MANIFEST_FORMAT_VERSION,
            "mode": self.mode,
            "seed": self.seed,
            "counts": self.counts,
            "resolution": self.resolution,
            "image_size": list(self.image_size),
            "rules_version": self.rules_version,
            "camera_eye": list(self.camera_eye),
            "records": [r.to_json_dict() for r in self.records],
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "DatasetManifest":
        manifest = cls(
            mode=data["mode"],
            seed=data["seed"],
            counts={k: int(v) for k, v in data["counts"].items()},
            resolution=data["resolution"],
            image_size=tuple(data["image_size"]),
            rules_version=data.get("rules_version", RULES_VERSION),
            camera_eye=tuple(data.get("camera_eye", (20.0, 20.0, 20.0))),
        )
        manifest.records = [ManifestRecord.from_json_dict(r) for r in data["records"]]
        return manifest

    def split_ids(self, split: str) -> list[str]:
        return [r.sample_id for r in self.records if r.split == split]


def load_manifest(path: str | Path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        return DatasetManifest.from_json_dict(json.load(fh))


#: The desk-scale per-sequence sample counts (1:100 of the full corpus,
#: which uses 6,000 for the first sequence and 2,000 for the others).
DESK_COUNTS: dict[str, int] = {t.seq_id: (60 if t.seq_id == "TS1" else 20) for t in TEMPLATES}
FULL_COUNTS: dict[str, int] = {t.seq_id: (6000 if t.seq_id == "TS1" else 2000) for t in TEMPLATES}


def _assign_splits(ids: Iterable[str]) -> dict[str, str]:
    """Deterministic 8:1:1 split, ordering ids by a stable content hash."""
    ordered = sorted(ids, key=lambda s: hashlib.md5(s.encode("ascii")).hexdigest())
    n = len(ordered)
    n_test = int(n * 0.1 + 0.5)
    n_val = int(n * 0.1 + 0.5)
    assignment: dict[str, str] = {}
    for i, sample_id in enumerate(ordered):
        if i < n_test:
            assignment[sample_id] = "test"
        elif i < n_test + n_val:
            assignment[sample_id] = "val"
        else:
            assignment[sample_id] = "train"
    return assignment


def synthesize_dataset(counts: dict[str, int], mode: str, seed: int,
                       out_dir: str | Path, *, resolution: int = 64,
                       image_size: tuple[int, int] = (128, 128),
                       rules: RuleSet = DEFAULT_RULES,
                       camera: Camera | None = None,
                       dry_run: bool = False) -> DatasetManifest:
    """Generate a dataset of (program, matrix, image) triples plus manifest.

    Deterministic for a given seed: each sample draws from its own stream
    derived from (seed, global sample index), so output bytes do not
    depend on generation order.  The manifest is written last.
    """
    out = Path(out_dir)
    camera = camera or Camera()
    unknown = set(counts) - {t.seq_id for t in TEMPLATES}
    if unknown:
        raise ValueError(f"unknown template sequence ids in counts: {sorted(unknown)}")
    manifest = DatasetManifest(
        mode=mode,
        seed=seed,
        counts={t.seq_id: int(counts.get(t.seq_id, 0)) for t in TEMPLATES},
        resolution=resolution,
        image_size=image_size,
        rules_version=rules.version,
        camera_eye=camera.eye,
    )
    plan: list[tuple[str, TemplateSequence, int]] = []
    global_index = 0
    for template in TEMPLATES:
        for k in range(manifest.counts[template.seq_id]):
            sample_id = f"{template.seq_id.lower()}-{k:05d}"
            plan.append((sample_id, template, global_index))
            global_index += 1
    splits = _assign_splits_per_sequence(plan)

    if dry_run:
        for sample_id, template, _ in plan:
            print(f"would write {out / 'programs' / (sample_id + '.txt')}")
            print(f"would write {out / 'matrices' / (sample_id + '.json')}")
            print(f"would write {out / 'images' / (sample_id + '.pgm')}")
        print(f"would write {out / 'manifest.json'}")
        return manifest

    if plan:
        (out / "programs").mkdir(parents=True, exist_ok=True)
        (out / "matrices").mkdir(parents=True, exist_ok=True)
        (out / "images").mkdir(parents=True, exist_ok=True)
    else:
        out.mkdir(parents=True, exist_ok=True)

    for sample_id, template, index in plan:
        rng = np.random.default_rng([seed, index])
        program, scene = _instantiate_with_scene(
            template, mode, rng, resolution=resolution, rules=rules
        )
        matrix = vectorize(program)
        image = render(scene, camera, image_size)
        program_path = f"programs/{sample_id}.txt"
        matrix_path = f"matrices/{sample_id}.json"
        image_path = f"images/{sample_id}.pgm"
        (out / program_path).write_text(emit_sim_gallery(program), encoding="utf-8")
        (out / matrix_path).write_text(matrix.to_json(), encoding="utf-8")
        write_pgm(out / image_path, image)
        manifest.records.append(
            ManifestRecord(
                sample_id=sample_id,
                sequence_id=template.seq_id,
                split=splits[sample_id],
                program_path=program_path,
                matrix_path=matrix_path,
                image_path=image_path,
            )
        )
    manifest_text = json.dumps(manifest.to_json_dict(), sort_keys=True, indent=1) + "\n"
    (out / "manifest.json").write_text(manifest_text, encoding="utf-8")
    return manifest


def _assign_splits_per_sequence(plan: Sequence[tuple[str, TemplateSequence, int]]) -> dict[str, str]:
    by_sequence: dict[str, list[str]] = {}
    for sample_id, template, _ in plan:
        by_sequence.setdefault(template.seq_id, []).append(sample_id)
    assignment: dict[str, str] = {}
    for ids in by_sequence.values():
        assignment.update(_assign_splits(ids))
    return assignment


def load_matrix(path: str | Path) -> FeatureMatrix:
    """Read a matrix document (.json) or packed matrix (.bin)."""
    path = Path(path)
    if path.suffix == ".bin":
        return FeatureMatrix.from_bytes(path.read_bytes())
    return FeatureMatrix.from_json(path.read_text(encoding="utf-8"))
