"""Domain model and textual form of sketch-and-extrude CAD programs.

A program is an ordered list of operations bracketed by start/end marks
(SOP/EOP).  The textual form is the simplified Gallery DSL: one call per
line, comma-separated arguments, quoted plane names, ``#`` comments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Iterable

from .errors import (
    ArityError,
    DslSyntaxError,
    InvalidProgramError,
    RangeError,
    UnknownFunctionError,
)

PLANE_NAMES = ("XY", "XZ", "YZ")
BOOLEAN_NAMES = ("join", "cut", "intersect", "add")

DEFAULT_PROFILE_INDEX = 0
DEFAULT_BOOLEAN_OP = 3  # add (new body)
DEFAULT_SCALE = 10.0

#: Hard cap on rows of the padded representation, marks included.
MAX_PROGRAM_ROWS = 10


class OpType(IntEnum):
    SKETCH = 0
    LINE = 1
    ARC = 2
    CIRCLE = 3
    EXTRUDE = 4
    SOP = 5
    EOP = 6


#: Fields of :class:`CadOp` that are meaningful for each operation type.
USED_FIELDS: dict[OpType, tuple[str, ...]] = {
    OpType.SKETCH: ("sketch_plane",),
    OpType.LINE: ("end_x", "end_y"),
    OpType.ARC: ("end_x", "end_y", "sweep"),
    OpType.CIRCLE: ("end_x", "end_y", "radius"),
    OpType.EXTRUDE: ("depth",),
    OpType.SOP: (),
    OpType.EOP: (),
}

_OPTIONAL_FIELDS = ("sketch_plane", "end_x", "end_y", "sweep", "radius", "depth")


@dataclass(frozen=True)
class CadOp:
    """One CAD operation with only its relevant parameters set.

    Unused parameters hold ``None``.  Coordinates are normalized: endpoint
    and center coordinates lie in [-1, 1], sweep in (0, 1] (degrees are
    ``sweep * 180``), radius in (0, 1], depth in [-1, 1] minus zero.
    """

    op_type: OpType
    sketch_plane: int | None = None
    end_x: float | None = None
    end_y: float | None = None
    sweep: float | None = None
    radius: float | None = None
    depth: float | None = None
    profile_index: int = DEFAULT_PROFILE_INDEX
    boolean_op: int = DEFAULT_BOOLEAN_OP

    def __post_init__(self):
        used = USED_FIELDS[self.op_type]
        for name in _OPTIONAL_FIELDS:
            value = getattr(self, name)
            if name in used:
                if value is None:
                    raise ValueError(f"{self.op_type.name} requires {name}")
            elif value is not None:
                raise ValueError(f"{self.op_type.name} does not use {name}")
        if self.sketch_plane is not None and self.sketch_plane not in (0, 1, 2):
            raise ValueError(f"sketch plane must be 0, 1 or 2, got {self.sketch_plane}")
        if self.end_x is not None and not -1.0 <= self.end_x <= 1.0:
            raise ValueError(f"x coordinate {self.end_x} outside [-1, 1]")
        if self.end_y is not None and not -1.0 <= self.end_y <= 1.0:
            raise ValueError(f"y coordinate {self.end_y} outside [-1, 1]")
        if self.sweep is not None and not 0.0 < self.sweep <= 1.0:
            raise ValueError(f"sweep {self.sweep} outside (0, 1]")
        if self.radius is not None and not 0.0 < self.radius <= 1.0:
            raise ValueError(f"radius {self.radius} outside (0, 1]")
        if self.depth is not None and (not -1.0 <= self.depth <= 1.0 or self.depth == 0.0):
            raise ValueError(f"depth {self.depth} outside [-1, 1] \\ {{0}}")
        if self.boolean_op not in (0, 1, 2, 3):
            raise ValueError(f"boolean op must be in 0..3, got {self.boolean_op}")

    @classmethod
    def sketch(cls, plane: int | str) -> "CadOp":
        if isinstance(plane, str):
            plane = PLANE_NAMES.index(plane)
        return cls(OpType.SKETCH, sketch_plane=plane)

    @classmethod
    def line(cls, x: float, y: float) -> "CadOp":
        return cls(OpType.LINE, end_x=x, end_y=y)

    @classmethod
    def arc(cls, x: float, y: float, sweep: float) -> "CadOp":
        return cls(OpType.ARC, end_x=x, end_y=y, sweep=sweep)

    @classmethod
    def circle(cls, x: float, y: float, radius: float) -> "CadOp":
        return cls(OpType.CIRCLE, end_x=x, end_y=y, radius=radius)

    @classmethod
    def extrude(cls, depth: float, boolean_op: int = DEFAULT_BOOLEAN_OP) -> "CadOp":
        return cls(OpType.EXTRUDE, depth=depth, boolean_op=boolean_op)

    @classmethod
    def sop(cls) -> "CadOp":
        return cls(OpType.SOP)

    @classmethod
    def eop(cls) -> "CadOp":
        return cls(OpType.EOP)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"type": self.op_type.name.lower()}
        for name in USED_FIELDS[self.op_type]:
            out[name] = getattr(self, name)
        if self.op_type is OpType.EXTRUDE:
            out["boolean_op"] = self.boolean_op
            out["profile_index"] = self.profile_index
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CadOp":
        op_type = OpType[data["type"].upper()]
        kwargs = {name: data[name] for name in USED_FIELDS[op_type]}
        if op_type is OpType.EXTRUDE:
            kwargs["boolean_op"] = data.get("boolean_op", DEFAULT_BOOLEAN_OP)
            kwargs["profile_index"] = data.get("profile_index", DEFAULT_PROFILE_INDEX)
        return cls(op_type, **kwargs)


@dataclass(frozen=True)
class CadProgram:
    """Ordered operation sequence with explicit SOP/EOP marks."""

    ops: tuple[CadOp, ...]
    scale: float = DEFAULT_SCALE

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @classmethod
    def from_body(cls, body: Iterable[CadOp], scale: float = DEFAULT_SCALE) -> "CadProgram":
        return cls((CadOp.sop(), *body, CadOp.eop()), scale)

    @property
    def body(self) -> tuple[CadOp, ...]:
        """Operations between the SOP mark and the first EOP mark."""
        ops = self.ops
        start = 1 if ops and ops[0].op_type is OpType.SOP else 0
        out = []
        for op in ops[start:]:
            if op.op_type is OpType.EOP:
                break
            out.append(op)
        return tuple(out)

    @property
    def length_with_marks(self) -> int:
        """Row count through the first EOP, SOP included."""
        for i, op in enumerate(self.ops):
            if op.op_type is OpType.EOP:
                return i + 1
        return len(self.ops)

    def to_dict(self) -> dict[str, Any]:
        return {"scale": self.scale, "ops": [op.to_dict() for op in self.body]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CadProgram":
        body = [CadOp.from_dict(d) for d in data.get("ops", [])]
        return cls.from_body(body, scale=data.get("scale", DEFAULT_SCALE))


@dataclass
class ValidationReport:
    """Outcome of grammar validation; ``ok`` iff no violations."""

    violations: list[tuple[int, str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, index: int, rule: str, message: str) -> None:
        self.violations.append((index, rule, message))

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"op {i}: {rule}: {msg}" for i, rule, msg in self.violations)


def validate_grammar(program: CadProgram) -> ValidationReport:
    """Check every structural rule of the operation grammar.

    Total over arbitrary operation sequences: always returns a report,
    never raises.
    """
    report = ValidationReport()
    ops = program.ops
    if not ops:
        report.add(0, "missing-sop", "program has no operations")
        return report
    if ops[0].op_type is not OpType.SOP:
        report.add(0, "missing-sop", "first operation must be the start mark")
    first_eop = None
    for i, op in enumerate(ops):
        if i > 0 and op.op_type is OpType.SOP:
            report.add(i, "sop-in-body", "start mark repeated inside the program")
        if op.op_type is OpType.EOP and first_eop is None:
            first_eop = i
        elif first_eop is not None and op.op_type is not OpType.EOP:
            report.add(i, "op-after-eop", "operation after the end mark")
    if first_eop is None:
        report.add(len(ops) - 1, "missing-eop", "program has no end mark")
    length = (first_eop + 1) if first_eop is not None else len(ops)
    if length > MAX_PROGRAM_ROWS:
        report.add(
            length - 1,
            "program-too-long",
            f"{length} rows through the end mark exceed the maximum of {MAX_PROGRAM_ROWS}",
        )
    if len(ops) > MAX_PROGRAM_ROWS:
        report.add(
            MAX_PROGRAM_ROWS,
            "too-many-rows",
            f"{len(ops)} rows exceed the padded maximum of {MAX_PROGRAM_ROWS}",
        )

    have_sketch = False
    curves_since_sketch = 0
    end = first_eop if first_eop is not None else len(ops)
    for i in range(1 if ops[0].op_type is OpType.SOP else 0, end):
        op = ops[i]
        if op.op_type is OpType.SKETCH:
            have_sketch = True
            curves_since_sketch = 0
        elif op.op_type in (OpType.LINE, OpType.ARC, OpType.CIRCLE):
            if not have_sketch:
                report.add(i, "curve-without-sketch", "curve before any sketch")
            curves_since_sketch += 1
        elif op.op_type is OpType.EXTRUDE:
            if curves_since_sketch == 0:
                report.add(i, "extrude-without-profile", "extrude with no curves since the last sketch")
            have_sketch = False
            curves_since_sketch = 0
    return report


_CALL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)$")


def _parse_argument(text: str, line_no: int) -> str | float:
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ("'", '"'):
        return text[1:-1]
    try:
        return float(text)
    except ValueError:
        raise DslSyntaxError(f"cannot parse argument {text!r}", line_no) from None


def _plane_index(value: str | float, line_no: int) -> int:
    if isinstance(value, str):
        if value not in PLANE_NAMES:
            raise RangeError(f"unknown sketch plane {value!r}", line_no)
        return PLANE_NAMES.index(value)
    if float(value).is_integer() and int(value) in (0, 1, 2):
        return int(value)
    raise RangeError(f"sketch plane must be XY/XZ/YZ or 0/1/2, got {value}", line_no)


def _number(value: str | float, what: str, line_no: int) -> float:
    if isinstance(value, str):
        raise DslSyntaxError(f"{what} must be a number, got {value!r}", line_no)
    return float(value)


def _check_range(v: float, lo: float, hi: float, what: str, line_no: int,
                 open_lo: bool = False, exclude_zero: bool = False) -> float:
    below = v <= lo if open_lo else v < lo
    if below or v > hi:
        raise RangeError(f"{what} {v} outside {'(' if open_lo else '['}{lo}, {hi}]", line_no)
    if exclude_zero and v == 0.0:
        raise RangeError(f"{what} must be nonzero", line_no)
    return v


def parse_program(text: str, scale: float = DEFAULT_SCALE) -> CadProgram:
    """Parse simplified-Gallery source text into a program.

    Start and end marks are implicit in text form and are added here.
    Blank lines and ``#`` comments are skipped; errors carry the 1-based
    source line number.
    """
    body: list[CadOp] = []
    for line_no, raw in enumerate(text.splitlines(), 1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        match = _CALL_RE.match(stripped)
        if match is None:
            raise DslSyntaxError(f"expected a call like name(arg, ...), got {stripped!r}", line_no)
        name, arg_text = match.groups()
        arg_text = arg_text.strip()
        args = [] if not arg_text else [
            _parse_argument(piece.strip(), line_no) for piece in arg_text.split(",")
        ]
        body.append(_parse_call(name, args, line_no))
    return CadProgram.from_body(body, scale=scale)


def _parse_call(name: str, args: list[str | float], line_no: int) -> CadOp:
    arities = {"add_sketch": 1, "add_line": 2, "add_arc": 3, "add_circle": 3, "add_extrude": 2}
    if name not in arities:
        raise UnknownFunctionError(f"unknown function {name!r}", line_no)
    if len(args) != arities[name]:
        raise ArityError(f"{name} takes {arities[name]} arguments, got {len(args)}", line_no)
    if name == "add_sketch":
        return CadOp.sketch(_plane_index(args[0], line_no))
    if name == "add_line":
        x = _check_range(_number(args[0], "x", line_no), -1, 1, "x", line_no)
        y = _check_range(_number(args[1], "y", line_no), -1, 1, "y", line_no)
        return CadOp.line(x, y)
    if name == "add_arc":
        x = _check_range(_number(args[0], "x", line_no), -1, 1, "x", line_no)
        y = _check_range(_number(args[1], "y", line_no), -1, 1, "y", line_no)
        sweep = _check_range(_number(args[2], "sweep", line_no), 0, 1, "sweep", line_no, open_lo=True)
        return CadOp.arc(x, y, sweep)
    if name == "add_circle":
        x = _check_range(_number(args[0], "x", line_no), -1, 1, "x", line_no)
        y = _check_range(_number(args[1], "y", line_no), -1, 1, "y", line_no)
        radius = _check_range(_number(args[2], "radius", line_no), 0, 1, "radius", line_no, open_lo=True)
        return CadOp.circle(x, y, radius)
    # add_extrude(profile, depth): the profile index is accepted and ignored.
    profile = _number(args[0], "profile index", line_no)
    if not profile.is_integer() or profile < 0:
        raise RangeError(f"profile index must be a nonnegative integer, got {profile}", line_no)
    depth = _check_range(_number(args[1], "depth", line_no), -1, 1, "depth", line_no, exclude_zero=True)
    return CadOp.extrude(depth)


def _require_valid(program: CadProgram) -> None:
    report = validate_grammar(program)
    if not report.ok:
        raise InvalidProgramError(str(report), report)


def emit_sim_gallery(program: CadProgram) -> str:
    """Serialize a validated program as simplified-Gallery text.

    One call per body operation, six fractional digits.  Parsing the
    output recovers the program exactly whenever its parameters are
    representable in six decimals.
    """
    _require_valid(program)
    lines = []
    for op in program.body:
        if op.op_type is OpType.SKETCH:
            lines.append(f'add_sketch("{PLANE_NAMES[op.sketch_plane]}")')
        elif op.op_type is OpType.LINE:
            lines.append(f"add_line({op.end_x:.6f}, {op.end_y:.6f})")
        elif op.op_type is OpType.ARC:
            lines.append(f"add_arc({op.end_x:.6f}, {op.end_y:.6f}, {op.sweep:.6f})")
        elif op.op_type is OpType.CIRCLE:
            lines.append(f"add_circle({op.end_x:.6f}, {op.end_y:.6f}, {op.radius:.6f})")
        elif op.op_type is OpType.EXTRUDE:
            lines.append(f"add_extrude({op.profile_index}, {op.depth:.6f})")
    return "\n".join(lines) + ("\n" if lines else "")


def emit_gallery_script(program: CadProgram) -> str:
    """Serialize a validated program as full Gallery-DSL-style script text.

    The script names sketch handles and profile variables, spells out
    chained curve start points and arc centers, and uses world units
    (normalized values multiplied by the program scale).  The text is
    never executed by this toolkit.
    """
    from .vector import arc_center, chain_points  # deferred: vector imports dsl

    _require_valid(program)
    s = program.scale
    segments = iter(chain_points(program))
    lines = [
        "# Gallery DSL script",
        f"# world units, scale = {s:g}",
    ]
    sketch_n = 0
    curve_n = 0
    extrude_n = 0
    for op in program.body:
        if op.op_type is OpType.SKETCH:
            sketch_n += 1
            lines.append(f'sketch{sketch_n} = add_sketch("{PLANE_NAMES[op.sketch_plane]}")')
        elif op.op_type is OpType.LINE:
            curve_n += 1
            (sx, sy), (ex, ey) = next(segments)
            lines.append(
                f"curve{curve_n} = add_line({sx * s:.6f}, {sy * s:.6f}, {ex * s:.6f}, {ey * s:.6f})"
            )
        elif op.op_type is OpType.ARC:
            curve_n += 1
            (sx, sy), (ex, ey) = next(segments)
            (cx, cy), _ = arc_center((sx, sy), (ex, ey), op.sweep * 180.0)
            lines.append(
                f"curve{curve_n} = add_arc({sx * s:.6f}, {sy * s:.6f}, "
                f"{cx * s:.6f}, {cy * s:.6f}, {op.sweep * 180.0:.6f})"
            )
        elif op.op_type is OpType.CIRCLE:
            curve_n += 1
            lines.append(
                f"curve{curve_n} = add_circle({op.end_x * s:.6f}, {op.end_y * s:.6f}, "
                f"{op.radius * s:.6f})"
            )
        elif op.op_type is OpType.EXTRUDE:
            extrude_n += 1
            lines.append(f"profile{extrude_n} = sketch{sketch_n}.profiles[{op.profile_index}]")
            lines.append(
                f"extrude{extrude_n} = add_extrude(profile{extrude_n}, "
                f"{op.depth * s:.6f}, \"{BOOLEAN_NAMES[op.boolean_op]}\")"
            )
    lines.append("# end of script")
    return "\n".join(lines) + "\n"
