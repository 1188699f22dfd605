"""Quantized fixed-shape matrix representation of CAD programs.

Each operation becomes a 7-vector ``[t, I, x, y, sweep, radius, depth]``
with the type code first and six parameter slots after it.  Continuous
parameters are quantized to 8-bit bins; slots that an operation does not
use hold the sentinel -1.  Programs are padded with end-mark rows to a
fixed 10x7 matrix.  Curve start points are not stored: consecutive curves
chain, the first curve of a sketch starting at the origin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .dsl import (
    DEFAULT_SCALE,
    MAX_PROGRAM_ROWS,
    CadOp,
    CadProgram,
    OpType,
    validate_grammar,
)
from .errors import (
    DegenerateChordError,
    InvalidProgramError,
    MalformedRowError,
    ProgramTooLongError,
    RangeError,
)

UNUSED = -1
LEVELS = 256
NUM_PARAM_SLOTS = 6
MATRIX_SHAPE = (MAX_PROGRAM_ROWS, 1 + NUM_PARAM_SLOTS)

#: Parameter slot order within a row (after the leading type code).
SLOT_NAMES = ("plane", "x", "y", "sweep", "radius", "depth")
SLOT_PLANE, SLOT_X, SLOT_Y, SLOT_SWEEP, SLOT_RADIUS, SLOT_DEPTH = range(6)

#: Parameter slots used by each operation type.
USED_SLOTS: dict[OpType, tuple[int, ...]] = {
    OpType.SKETCH: (SLOT_PLANE,),
    OpType.LINE: (SLOT_X, SLOT_Y),
    OpType.ARC: (SLOT_X, SLOT_Y, SLOT_SWEEP),
    OpType.CIRCLE: (SLOT_X, SLOT_Y, SLOT_RADIUS),
    OpType.EXTRUDE: (SLOT_DEPTH,),
    OpType.SOP: (),
    OpType.EOP: (),
}

MATRIX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class QuantRange:
    """Closed value range divided into 256 equal bins."""

    lo: float
    hi: float
    levels: int = LEVELS

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty range [{self.lo}, {self.hi}]")
        if self.levels != LEVELS:
            raise ValueError(f"levels must be {LEVELS}, got {self.levels}")


#: Range for endpoint/center coordinates and extrusion depth.
COORD_RANGE = QuantRange(-1.0, 1.0)
#: Range for sweep and radius; stored values are in (0, 1].
UNIT_RANGE = QuantRange(0.0, 1.0)

#: Quantization range per parameter slot (the plane slot is discrete).
SLOT_RANGES: dict[int, QuantRange] = {
    SLOT_X: COORD_RANGE,
    SLOT_Y: COORD_RANGE,
    SLOT_SWEEP: UNIT_RANGE,
    SLOT_RADIUS: UNIT_RANGE,
    SLOT_DEPTH: COORD_RANGE,
}


def quantize_value(v: float, qrange: QuantRange) -> int:
    """Map a value in [lo, hi] to its bin in 0..255."""
    if not qrange.lo <= v <= qrange.hi:
        raise RangeError(f"value {v} outside [{qrange.lo}, {qrange.hi}]")
    b = math.floor((v - qrange.lo) / (qrange.hi - qrange.lo) * LEVELS)
    return min(b, LEVELS - 1)


def dequantize_value(b: int, qrange: QuantRange) -> float:
    """Map a bin back to the center of its value interval."""
    if not 0 <= b <= LEVELS - 1:
        raise RangeError(f"bin {b} outside 0..{LEVELS - 1}")
    return qrange.lo + (b + 0.5) / LEVELS * (qrange.hi - qrange.lo)


def snap_value(v: float, qrange: QuantRange) -> float:
    """Round a value to the center of its quantization bin."""
    return dequantize_value(quantize_value(v, qrange), qrange)


@dataclass(frozen=True)
class OpVector:
    """One matrix row: a type code plus six integer parameter slots."""

    t: int
    params: tuple[int, ...]

    def __post_init__(self):
        if self.t not in range(7):
            raise ValueError(f"type code {self.t} outside 0..6")
        if len(self.params) != NUM_PARAM_SLOTS:
            raise ValueError(f"expected {NUM_PARAM_SLOTS} parameter slots")


class FeatureMatrix:
    """Fixed 10x7 integer matrix encoding of a program.

    Wraps an int16 array; values lie in -1..255 and type codes in 0..6.
    Structural per-row slot checks happen in :func:`devectorize`, so
    arbitrary well-shaped predictions can be loaded and scored.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray | Sequence[Sequence[int]]):
        arr = np.asarray(data, dtype=np.int16)
        if arr.shape != MATRIX_SHAPE:
            raise ValueError(f"matrix shape must be {MATRIX_SHAPE}, got {arr.shape}")
        if arr.min() < UNUSED or arr.max() > LEVELS - 1:
            raise ValueError("matrix values must lie in -1..255")
        types = arr[:, 0]
        if types.min() < 0 or types.max() > 6:
            raise ValueError("type codes must lie in 0..6")
        arr.flags.writeable = False
        self.data = arr

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash(self.data.tobytes())

    def __repr__(self):
        return f"FeatureMatrix({self.data.tolist()!r})"

    @property
    def rows(self) -> tuple[OpVector, ...]:
        return tuple(OpVector(int(r[0]), tuple(int(v) for v in r[1:])) for r in self.data)

    @property
    def type_column(self) -> np.ndarray:
        return self.data[:, 0]

    def sequence_length(self) -> int:
        """Row count through the first end mark (all rows if there is none)."""
        eop = np.nonzero(self.data[:, 0] == int(OpType.EOP))[0]
        return int(eop[0]) + 1 if eop.size else self.data.shape[0]

    def to_json_dict(self) -> dict[str, Any]:
        return {"matrix": self.data.tolist()}

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "FeatureMatrix":
        return cls(data["matrix"])

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FeatureMatrix":
        return cls.from_json_dict(json.loads(text))

    def to_bytes(self) -> bytes:
        """Packed form: 70 signed 16-bit little-endian integers, row-major."""
        return self.data.astype("<i2").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "FeatureMatrix":
        expected = MATRIX_SHAPE[0] * MATRIX_SHAPE[1] * 2
        if len(blob) != expected:
            raise ValueError(f"packed matrix must be {expected} bytes, got {len(blob)}")
        return cls(np.frombuffer(blob, dtype="<i2").reshape(MATRIX_SHAPE))


_EOP_ROW = (int(OpType.EOP),) + (UNUSED,) * NUM_PARAM_SLOTS


def _op_row(op: CadOp) -> list[int]:
    row = [int(op.op_type)] + [UNUSED] * NUM_PARAM_SLOTS
    if op.op_type is OpType.SKETCH:
        row[1 + SLOT_PLANE] = op.sketch_plane
    elif op.op_type is OpType.LINE:
        row[1 + SLOT_X] = quantize_value(op.end_x, COORD_RANGE)
        row[1 + SLOT_Y] = quantize_value(op.end_y, COORD_RANGE)
    elif op.op_type is OpType.ARC:
        row[1 + SLOT_X] = quantize_value(op.end_x, COORD_RANGE)
        row[1 + SLOT_Y] = quantize_value(op.end_y, COORD_RANGE)
        row[1 + SLOT_SWEEP] = quantize_value(op.sweep, UNIT_RANGE)
    elif op.op_type is OpType.CIRCLE:
        row[1 + SLOT_X] = quantize_value(op.end_x, COORD_RANGE)
        row[1 + SLOT_Y] = quantize_value(op.end_y, COORD_RANGE)
        row[1 + SLOT_RADIUS] = quantize_value(op.radius, UNIT_RANGE)
    elif op.op_type is OpType.EXTRUDE:
        row[1 + SLOT_DEPTH] = quantize_value(op.depth, COORD_RANGE)
    return row


def vectorize(program: CadProgram) -> FeatureMatrix:
    """Encode a validated program as a padded, quantized feature matrix."""
    body = program.body
    needed = len(body) + 2  # SOP row + body + one EOP row
    if needed > MAX_PROGRAM_ROWS:
        raise ProgramTooLongError(
            f"{needed} rows needed, maximum is {MAX_PROGRAM_ROWS}"
        )
    report = validate_grammar(program)
    if not report.ok:
        raise InvalidProgramError(str(report), report)
    rows = [[int(OpType.SOP)] + [UNUSED] * NUM_PARAM_SLOTS]
    rows.extend(_op_row(op) for op in body)
    while len(rows) < MAX_PROGRAM_ROWS:
        rows.append(list(_EOP_ROW))
    return FeatureMatrix(rows)


def _decode_row(row: np.ndarray, index: int) -> CadOp:
    t = OpType(int(row[0]))
    used = USED_SLOTS[t]
    params = row[1:]
    for slot in range(NUM_PARAM_SLOTS):
        value = int(params[slot])
        if slot in used:
            if value == UNUSED:
                raise MalformedRowError(
                    f"{t.name} uses slot {SLOT_NAMES[slot]} but it is unset", index
                )
            if not 0 <= value <= LEVELS - 1:
                raise MalformedRowError(
                    f"slot {SLOT_NAMES[slot]} value {value} outside 0..255", index
                )
        elif value != UNUSED:
            raise MalformedRowError(
                f"{t.name} does not use slot {SLOT_NAMES[slot]} but it is {value}", index
            )
    if t is OpType.SKETCH:
        plane = int(params[SLOT_PLANE])
        if plane not in (0, 1, 2):
            raise MalformedRowError(f"sketch plane {plane} outside 0..2", index)
        return CadOp.sketch(plane)
    if t is OpType.LINE:
        return CadOp.line(
            dequantize_value(int(params[SLOT_X]), COORD_RANGE),
            dequantize_value(int(params[SLOT_Y]), COORD_RANGE),
        )
    if t is OpType.ARC:
        return CadOp.arc(
            dequantize_value(int(params[SLOT_X]), COORD_RANGE),
            dequantize_value(int(params[SLOT_Y]), COORD_RANGE),
            dequantize_value(int(params[SLOT_SWEEP]), UNIT_RANGE),
        )
    if t is OpType.CIRCLE:
        return CadOp.circle(
            dequantize_value(int(params[SLOT_X]), COORD_RANGE),
            dequantize_value(int(params[SLOT_Y]), COORD_RANGE),
            dequantize_value(int(params[SLOT_RADIUS]), UNIT_RANGE),
        )
    if t is OpType.EXTRUDE:
        return CadOp.extrude(dequantize_value(int(params[SLOT_DEPTH]), COORD_RANGE))
    return CadOp(t)


def devectorize(matrix: FeatureMatrix, scale: float = DEFAULT_SCALE) -> CadProgram:
    """Decode a feature matrix back into a program.

    Parameters come back as bin centers, so ``devectorize(vectorize(p))``
    equals ``p`` with every parameter snapped to its bin center.  Rows
    after the first end mark are ignored; rows violating the slot pattern
    for their type raise :class:`MalformedRowError`.
    """
    data = matrix.data
    if int(data[0, 0]) != int(OpType.SOP):
        raise MalformedRowError("first row must be the start mark", 0)
    ops: list[CadOp] = [CadOp.sop()]
    for i in range(1, data.shape[0]):
        if int(data[i, 0]) == int(OpType.EOP):
            ops.append(CadOp.eop())
            break
        ops.append(_decode_row(data[i], i))
    else:
        ops.append(CadOp.eop())
    return CadProgram(tuple(ops), scale=scale)


Point2 = tuple[float, float]


def arc_center(start: Point2, end: Point2, sweep_deg: float) -> tuple[Point2, float]:
    """Center and radius of the arc from ``start`` to ``end``.

    The arc runs counter-clockwise about a center on the left of the
    directed chord and subtends exactly ``sweep_deg`` degrees (0 < sweep
    <= 180).  Radius follows from the chord length: R = |chord| /
    (2 sin(sweep/2)).
    """
    if sweep_deg < 1e-6 or sweep_deg > 180.0:
        raise RangeError(f"sweep angle {sweep_deg} outside [1e-6, 180]")
    dx = end[0] - start[0]
    dy = end[1] - start[1]
    chord = math.hypot(dx, dy)
    if chord < 1e-12:
        raise DegenerateChordError(f"arc start and end coincide at {start}")
    half = math.radians(sweep_deg) / 2.0
    radius = chord / (2.0 * math.sin(half))
    apothem = radius * math.cos(half)
    mx = (start[0] + end[0]) / 2.0
    my = (start[1] + end[1]) / 2.0
    center = (mx - apothem * dy / chord, my + apothem * dx / chord)
    return center, radius


def chain_curve_ops(curves: Iterable[CadOp]) -> list[tuple[Point2, Point2]]:
    """Start/end points for the chaining curves of one sketch.

    The first curve starts at the origin; each later line or arc starts at
    the previous curve's endpoint.  A circle has no endpoint: it takes no
    entry and resets the chain start to the origin.
    """
    segments: list[tuple[Point2, Point2]] = []
    cursor: Point2 = (0.0, 0.0)
    for op in curves:
        if op.op_type is OpType.CIRCLE:
            cursor = (0.0, 0.0)
        elif op.op_type in (OpType.LINE, OpType.ARC):
            end = (op.end_x, op.end_y)
            segments.append((cursor, end))
            cursor = end
        else:
            raise ValueError(f"{op.op_type.name} is not a curve operation")
    return segments


def chain_points(program: CadProgram) -> list[tuple[Point2, Point2]]:
    """Start/end points for every line/arc in a validated program."""
    report = validate_grammar(program)
    if not report.ok:
        raise InvalidProgramError(str(report), report)
    segments: list[tuple[Point2, Point2]] = []
    current: list[CadOp] = []
    for op in program.body:
        if op.op_type is OpType.SKETCH:
            segments.extend(chain_curve_ops(current))
            current = []
        elif op.op_type in (OpType.LINE, OpType.ARC, OpType.CIRCLE):
            current.append(op)
        elif op.op_type is OpType.EXTRUDE:
            segments.extend(chain_curve_ops(current))
            current = []
    segments.extend(chain_curve_ops(current))
    return segments
