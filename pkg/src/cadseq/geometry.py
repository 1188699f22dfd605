"""Solid interpretation of CAD programs.

Sketches place closed profiles on one of the three canonical planes;
extrusions sweep them along the plane normal into voxelized bodies on a
fixed cubic lattice, combined by boolean modes.  Triangle meshes are kept
per extrusion for rendering only; boolean effects are exact in voxel
space alone.  Geometry outside the lattice bounds is clipped.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .dsl import CadOp, CadProgram, OpType, validate_grammar
from .errors import (
    CadseqError,
    EmptyResultError,
    InvalidProgramError,
    LatticeMismatchError,
    OpenProfileError,
    ParseFailureError,
    SelfIntersectingError,
)
from .vector import arc_center, chain_curve_ops

#: Loop closure gap accepted as exactly closed (normalized units).
CLOSE_EPS = 1e-6
#: Near-closures up to two quantization steps are snapped shut, since
#: quantization legitimately perturbs endpoints.
SNAP_GAP = 2.0 * (2.0 / 256.0)
#: Chords per full arc when tessellating for tests and meshes.
ARC_CHORDS = 64
#: Segments around a circle profile.
CIRCLE_SEGMENTS = 64
#: Lattice margin beyond the program scale, in world units.
BOUNDS_MARGIN = 2.0

BOOLEAN_JOIN, BOOLEAN_CUT, BOOLEAN_INTERSECT, BOOLEAN_ADD = range(4)


@dataclass(frozen=True)
class SketchPlane:
    """Canonical sketch plane mapping 2D (u, v) to world coordinates."""

    id: int

    _BASES = (
        # (u axis, v axis, normal); normal = u x v up to the fixed sign.
        ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),   # XY
        ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, -1.0, 0.0)),  # XZ
        ((0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (1.0, 0.0, 0.0)),   # YZ
    )

    def __post_init__(self):
        if self.id not in (0, 1, 2):
            raise ValueError(f"plane id must be 0, 1 or 2, got {self.id}")

    @property
    def u_axis(self) -> np.ndarray:
        return np.array(self._BASES[self.id][0])

    @property
    def v_axis(self) -> np.ndarray:
        return np.array(self._BASES[self.id][1])

    @property
    def normal(self) -> np.ndarray:
        return np.array(self._BASES[self.id][2])

    def to_world(self, u, v, n):
        """World point for plane coordinates (u, v) offset n along the normal."""
        return (
            np.multiply.outer(u, self.u_axis)
            + np.multiply.outer(v, self.v_axis)
            + np.multiply.outer(n, self.normal)
        )


@dataclass(frozen=True)
class LineSegment:
    start: tuple[float, float]
    end: tuple[float, float]

    def points(self, _chords: int = 0) -> list[tuple[float, float]]:
        return [self.start, self.end]


@dataclass(frozen=True)
class ArcSegment:
    start: tuple[float, float]
    end: tuple[float, float]
    sweep_deg: float
    center: tuple[float, float]
    radius: float

    def points(self, chords: int = ARC_CHORDS) -> list[tuple[float, float]]:
        """Polyline from start to end, counter-clockwise about the center."""
        cx, cy = self.center
        a0 = math.atan2(self.start[1] - cy, self.start[0] - cx)
        total = math.radians(self.sweep_deg)
        pts = [self.start]
        for k in range(1, chords):
            a = a0 + total * k / chords
            pts.append((cx + self.radius * math.cos(a), cy + self.radius * math.sin(a)))
        pts.append(self.end)
        return pts


@dataclass(frozen=True)
class Profile:
    """A candidate extrusion region: a circle or a curve loop."""

    kind: str  # "circle" | "loop"
    segments: tuple[LineSegment | ArcSegment, ...] = ()
    center: tuple[float, float] | None = None
    radius: float | None = None
    closed: bool = True
    closure_gap: float = 0.0

    def polygon(self, chords: int = ARC_CHORDS) -> np.ndarray:
        """Boundary polyline vertices (loop kind) without the closing repeat."""
        if self.kind == "circle":
            cx, cy = self.center
            angles = 2.0 * math.pi * np.arange(CIRCLE_SEGMENTS) / CIRCLE_SEGMENTS
            return np.column_stack(
                (cx + self.radius * np.cos(angles), cy + self.radius * np.sin(angles))
            )
        pts: list[tuple[float, float]] = []
        for seg in self.segments:
            pts.extend(seg.points(chords)[:-1])  # endpoint repeats as next start
        return np.array(pts, dtype=float)


def _proper_crossings(points: np.ndarray) -> bool:
    """True when any two non-adjacent closed-polyline edges strictly cross."""
    n = len(points)
    if n < 4:
        return False
    a = points
    b = np.roll(points, -1, axis=0)
    d = b - a
    crossed = False
    for i in range(n - 2):
        js = np.arange(i + 2, n if i > 0 else n - 1)
        if js.size == 0:
            continue
        ax, ay = a[i]
        dx, dy = d[i]
        r1 = (a[js, 0] - ax) * dy - (a[js, 1] - ay) * dx
        r2 = (b[js, 0] - ax) * dy - (b[js, 1] - ay) * dx
        r3 = (ax - a[js, 0]) * d[js, 1] - (ay - a[js, 1]) * d[js, 0]
        r4 = (ax + dx - a[js, 0]) * d[js, 1] - (ay + dy - a[js, 1]) * d[js, 0]
        if np.any((r1 * r2 < 0) & (r3 * r4 < 0)):
            crossed = True
            break
    return crossed


def build_profiles(curves: Sequence[CadOp]) -> list[Profile]:
    """Profiles formed by the curves of one sketch, in order of appearance.

    A lone circle yields a circle profile.  A run of chained lines/arcs
    yields a loop profile when the chain returns to its start within
    ``CLOSE_EPS``; gaps up to ``SNAP_GAP`` are snapped shut; larger gaps
    come back flagged not closed.  Loops whose segments cross raise
    :class:`SelfIntersectingError`.
    """
    profiles: list[Profile] = []
    run: list[CadOp] = []

    def flush_run():
        if run:
            profiles.append(_chain_profile(run))
            run.clear()

    for op in curves:
        if op.op_type is OpType.CIRCLE:
            flush_run()
            profiles.append(
                Profile(kind="circle", center=(op.end_x, op.end_y), radius=op.radius)
            )
        elif op.op_type in (OpType.LINE, OpType.ARC):
            run.append(op)
        else:
            raise ValueError(f"{op.op_type.name} is not a curve operation")
    flush_run()
    return profiles


def _chain_profile(run: list[CadOp]) -> Profile:
    chained = chain_curve_ops(run)
    start = chained[0][0]
    last_end = chained[-1][1]
    gap = math.hypot(last_end[0] - start[0], last_end[1] - start[1])
    closed = gap <= SNAP_GAP
    if CLOSE_EPS < gap <= SNAP_GAP:
        chained[-1] = (chained[-1][0], start)
    all_lines = all(op.op_type is OpType.LINE for op in run)
    if all_lines and len(run) < 3:
        closed = False
    segments: list[LineSegment | ArcSegment] = []
    for op, (seg_start, seg_end) in zip(run, chained):
        if op.op_type is OpType.LINE:
            segments.append(LineSegment(seg_start, seg_end))
        else:
            center, radius = arc_center(seg_start, seg_end, op.sweep * 180.0)
            segments.append(
                ArcSegment(seg_start, seg_end, op.sweep * 180.0, center, radius)
            )
    profile = Profile(
        kind="loop", segments=tuple(segments), closed=closed, closure_gap=gap
    )
    if closed and _proper_crossings(profile.polygon()):
        raise SelfIntersectingError("profile boundary segments cross")
    return profile


def _points_in_polygon(us: np.ndarray, vs: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd test of many points against one polygon (half-open edges)."""
    inside = np.zeros(us.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if y1 == y2:
            continue
        straddles = (y1 > vs) != (y2 > vs)
        crossing = us < (x2 - x1) * (vs - y1) / (y2 - y1) + x1
        inside ^= straddles & crossing
    return inside


def points_in_profile(us: np.ndarray, vs: np.ndarray, profile: Profile) -> np.ndarray:
    """Vectorized membership test in a closed profile's own coordinates."""
    if not profile.closed:
        raise OpenProfileError(f"profile is not closed (gap {profile.closure_gap:g})")
    us = np.asarray(us, dtype=float)
    vs = np.asarray(vs, dtype=float)
    if profile.kind == "circle":
        cx, cy = profile.center
        return (us - cx) ** 2 + (vs - cy) ** 2 <= profile.radius**2
    return _points_in_polygon(us, vs, profile.polygon())


def point_in_profile(p: tuple[float, float], profile: Profile) -> bool:
    """Scalar membership test: even-odd rule, arcs tessellated to chords."""
    return bool(points_in_profile(np.array([p[0]]), np.array([p[1]]), profile)[0])


def _scaled_profile(profile: Profile, s: float) -> Profile:
    """The same profile with all coordinates multiplied by ``s``."""
    if profile.kind == "circle":
        return Profile(
            kind="circle",
            center=(profile.center[0] * s, profile.center[1] * s),
            radius=profile.radius * s,
            closed=profile.closed,
            closure_gap=profile.closure_gap * s,
        )
    segments: list[LineSegment | ArcSegment] = []
    for seg in profile.segments:
        start = (seg.start[0] * s, seg.start[1] * s)
        end = (seg.end[0] * s, seg.end[1] * s)
        if isinstance(seg, LineSegment):
            segments.append(LineSegment(start, end))
        else:
            segments.append(
                ArcSegment(
                    start,
                    end,
                    seg.sweep_deg,
                    (seg.center[0] * s, seg.center[1] * s),
                    seg.radius * s,
                )
            )
    return Profile(
        kind="loop",
        segments=tuple(segments),
        closed=profile.closed,
        closure_gap=profile.closure_gap * s,
    )


_CENTERS_CACHE: dict[tuple[int, float, float], np.ndarray] = {}


def lattice_centers(resolution: int, lo: float, hi: float) -> np.ndarray:
    """Cell center coordinates along one axis of the cubic lattice."""
    key = (resolution, lo, hi)
    centers = _CENTERS_CACHE.get(key)
    if centers is None:
        pitch = (hi - lo) / resolution
        centers = lo + (np.arange(resolution) + 0.5) * pitch
        centers.flags.writeable = False
        _CENTERS_CACHE[key] = centers
    return centers


@dataclass(frozen=True)
class VoxelGrid:
    """Occupancy over a cubic lattice shared by all bodies of a scene."""

    resolution: int
    lo: float
    hi: float
    occupancy: np.ndarray

    def __post_init__(self):
        expected = (self.resolution,) * 3
        if self.occupancy.shape != expected:
            raise ValueError(f"occupancy shape {self.occupancy.shape} != {expected}")
        if self.occupancy.dtype != np.bool_:
            object.__setattr__(self, "occupancy", self.occupancy.astype(bool))
        self.occupancy.flags.writeable = False

    @classmethod
    def empty(cls, resolution: int, lo: float, hi: float) -> "VoxelGrid":
        return cls(resolution, lo, hi, np.zeros((resolution,) * 3, dtype=bool))

    @property
    def cell_size(self) -> float:
        return (self.hi - self.lo) / self.resolution

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())

    @property
    def volume(self) -> float:
        return self.count * self.cell_size**3

    def same_lattice(self, other: "VoxelGrid") -> bool:
        return (
            self.resolution == other.resolution
            and self.lo == other.lo
            and self.hi == other.hi
        )

    def with_occupancy(self, occupancy: np.ndarray) -> "VoxelGrid":
        return VoxelGrid(self.resolution, self.lo, self.hi, occupancy)


@dataclass(frozen=True)
class Body:
    grid: VoxelGrid
    mesh: np.ndarray  # (n, 3, 3) world-space triangles


@dataclass(frozen=True)
class SolidScene:
    """Bodies produced by interpreting a program, on one shared lattice."""

    bodies: tuple[Body, ...]
    scale: float
    resolution: int
    lo: float
    hi: float

    @classmethod
    def empty(cls, scale: float, resolution: int) -> "SolidScene":
        bound = scale + BOUNDS_MARGIN
        return cls((), scale, resolution, -bound, bound)

    @property
    def is_empty(self) -> bool:
        return not self.bodies

    def union_occupancy(self) -> np.ndarray:
        occ = np.zeros((self.resolution,) * 3, dtype=bool)
        for body in self.bodies:
            occ |= body.grid.occupancy
        return occ

    def union_grid(self) -> VoxelGrid:
        return VoxelGrid(self.resolution, self.lo, self.hi, self.union_occupancy())

    def all_triangles(self) -> np.ndarray:
        meshes = [body.mesh for body in self.bodies if len(body.mesh)]
        if not meshes:
            return np.zeros((0, 3, 3))
        return np.concatenate(meshes, axis=0)

    @property
    def total_volume(self) -> float:
        return self.union_grid().volume


# Per plane id: lattice axes holding (u, v, normal) and the normal's sign.
_PLANE_AXES = {
    0: (0, 1, 2, +1.0),  # XY: u = x, v = y, n = +z
    1: (0, 2, 1, -1.0),  # XZ: u = x, v = z, n = -y
    2: (1, 2, 0, +1.0),  # YZ: u = y, v = z, n = +x
}


def _rasterize(profile_world: Profile, plane: SketchPlane, n0: float, n1: float,
               resolution: int, lo: float, hi: float) -> np.ndarray:
    """Occupancy of the swept world-space profile on the scene lattice.

    Exploits that sketch planes are axis aligned: the 2D membership test
    runs once per (u, v) cell column and broadcasts along the normal axis.
    """
    centers = lattice_centers(resolution, lo, hi)
    u_ax, v_ax, n_ax, n_sign = _PLANE_AXES[plane.id]
    uu, vv = np.meshgrid(centers, centers, indexing="ij")
    inside2d = points_in_profile(uu.ravel(), vv.ravel(), profile_world)
    inside2d = inside2d.reshape(resolution, resolution)
    n_coords = n_sign * centers
    n_mask = (n_coords >= n0) & (n_coords <= n1)

    # u_ax < v_ax for every plane, so (u, v) already matches array order.
    shape = [1, 1, 1]
    shape[n_ax] = resolution
    mask = n_mask.reshape(shape)
    inside_shape = [1, 1, 1]
    inside_shape[u_ax] = resolution
    inside_shape[v_ax] = resolution
    return inside2d.reshape(inside_shape) & mask


def _triangulate(polygon: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear-clipping triangulation of a simple polygon (indices into it)."""
    n = len(polygon)
    if n < 3:
        return []
    indices = list(range(n))
    area2 = 0.0
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        area2 += x1 * y2 - x2 * y1
    ccw = area2 >= 0.0
    triangles: list[tuple[int, int, int]] = []
    guard = 0
    while len(indices) > 3 and guard < 2 * n * n:
        guard += 1
        m = len(indices)
        clipped = False
        for k in range(m):
            i0, i1, i2 = indices[k - 1], indices[k], indices[(k + 1) % m]
            ax, ay = polygon[i0]
            bx, by = polygon[i1]
            cx, cy = polygon[i2]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if (cross <= 0) if ccw else (cross >= 0):
                continue  # reflex corner
            others = [j for j in indices if j not in (i0, i1, i2)]
            if others and _any_point_in_triangle(polygon[others], (ax, ay), (bx, by), (cx, cy)):
                continue
            triangles.append((i0, i1, i2))
            indices.pop(k)
            clipped = True
            break
        if not clipped:  # numerically stuck: fall back to a fan
            first = indices[0]
            for k in range(1, len(indices) - 1):
                triangles.append((first, indices[k], indices[k + 1]))
            return triangles
    if len(indices) == 3:
        triangles.append(tuple(indices))
    return triangles


def _any_point_in_triangle(points: np.ndarray, a, b, c) -> bool:
    d1 = (points[:, 0] - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (points[:, 1] - b[1])
    d2 = (points[:, 0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (points[:, 1] - c[1])
    d3 = (points[:, 0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (points[:, 1] - a[1])
    neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return bool(np.any(~(neg & pos)))


def _extrusion_mesh(profile_world: Profile, plane: SketchPlane, n0: float, n1: float) -> np.ndarray:
    """Side walls plus two caps for the swept profile, in world space."""
    poly = profile_world.polygon()
    # Drop consecutive duplicates (snapped closures can repeat a vertex).
    keep = [0]
    for i in range(1, len(poly)):
        if not np.allclose(poly[i], poly[keep[-1]], atol=1e-12):
            keep.append(i)
    if len(keep) > 1 and np.allclose(poly[keep[-1]], poly[keep[0]], atol=1e-12):
        keep.pop()
    poly = poly[keep]
    if len(poly) < 3:
        return np.zeros((0, 3, 3))
    bottom = plane.to_world(poly[:, 0], poly[:, 1], np.full(len(poly), n0))
    top = plane.to_world(poly[:, 0], poly[:, 1], np.full(len(poly), n1))
    tris: list[np.ndarray] = []
    m = len(poly)
    for i in range(m):
        j = (i + 1) % m
        tris.append(np.stack((bottom[i], bottom[j], top[j])))
        tris.append(np.stack((bottom[i], top[j], top[i])))
    for i0, i1, i2 in _triangulate(poly):
        tris.append(np.stack((bottom[i0], bottom[i2], bottom[i1])))
        tris.append(np.stack((top[i0], top[i1], top[i2])))
    return np.stack(tris)


def extrude(profile: Profile, plane: SketchPlane, depth: float, boolean_op: int,
            scale: float, scene: SolidScene) -> SolidScene:
    """Sweep a closed profile along the plane normal and merge into the scene.

    World coordinates are normalized values times ``scale``; the sweep
    spans signed ``depth * scale`` along the normal.  Boolean modes: join
    unions into the last body, cut subtracts from every body, intersect
    keeps the overlap with the union of bodies, add starts a new body.
    """
    if not profile.closed:
        raise OpenProfileError(f"profile is not closed (gap {profile.closure_gap:g})")
    if depth == 0.0:
        raise ValueError("extrusion depth must be nonzero")
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    if boolean_op not in (0, 1, 2, 3):
        raise ValueError(f"boolean op must be in 0..3, got {boolean_op}")

    world = _scaled_profile(profile, scale)
    n0, n1 = sorted((0.0, depth * scale))
    occ = _rasterize(world, plane, n0, n1, scene.resolution, scene.lo, scene.hi)
    if not occ.any():
        raise EmptyResultError("extrusion occupies no voxels")
    mesh = _extrusion_mesh(world, plane, n0, n1)
    template = VoxelGrid(scene.resolution, scene.lo, scene.hi, occ)

    bodies = list(scene.bodies)
    if boolean_op == BOOLEAN_ADD or (boolean_op == BOOLEAN_JOIN and not bodies):
        bodies.append(Body(template, mesh))
    elif boolean_op == BOOLEAN_JOIN:
        last = bodies[-1]
        merged = last.grid.with_occupancy(last.grid.occupancy | occ)
        bodies[-1] = Body(merged, np.concatenate((last.mesh, mesh), axis=0))
    elif boolean_op == BOOLEAN_CUT:
        cut: list[Body] = []
        for body in bodies:
            remaining = body.grid.occupancy & ~occ
            if remaining.any():
                cut.append(Body(body.grid.with_occupancy(remaining), body.mesh))
        bodies = cut
    else:  # intersect with the union of existing bodies
        union = scene.union_occupancy()
        kept = occ & union
        bodies = [Body(template.with_occupancy(kept), mesh)] if kept.any() else []

    if not bodies:
        raise EmptyResultError("boolean operation left zero occupancy")
    return SolidScene(tuple(bodies), scene.scale, scene.resolution, scene.lo, scene.hi)


def evaluate_program(program: CadProgram, resolution: int = 64) -> SolidScene:
    """Execute a program into a scene with at least one non-empty body.

    Sketches set the current plane and reset curve accumulation; extrudes
    build profiles from the accumulated curves and consume them.  Any
    failure to produce a solid raises :class:`ParseFailureError`, the
    event counted by the parsing-rate metric.
    """
    report = validate_grammar(program)
    if not report.ok:
        raise ParseFailureError(
            f"invalid program: {report}", InvalidProgramError(str(report), report)
        )
    scene = SolidScene.empty(program.scale, resolution)
    plane: SketchPlane | None = None
    curves: list[CadOp] = []
    try:
        for op in program.body:
            if op.op_type is OpType.SKETCH:
                plane = SketchPlane(op.sketch_plane)
                curves = []
            elif op.op_type in (OpType.LINE, OpType.ARC, OpType.CIRCLE):
                curves.append(op)
            elif op.op_type is OpType.EXTRUDE:
                profiles = build_profiles(curves)
                if op.profile_index >= len(profiles):
                    raise OpenProfileError(
                        f"extrude wants profile {op.profile_index} of {len(profiles)}"
                    )
                scene = extrude(
                    profiles[op.profile_index], plane, op.depth,
                    op.boolean_op, program.scale, scene,
                )
                curves = []
    except CadseqError as exc:
        raise ParseFailureError(f"program does not parse: {exc}", exc) from exc
    if scene.is_empty:
        raise ParseFailureError("program produced no solid body")
    return scene


def write_stl(stream: IO[str], scene_or_mesh: SolidScene | np.ndarray,
              name: str = "cadseq") -> None:
    """ASCII STL export of a scene's render meshes (inspection only)."""
    triangles = (
        scene_or_mesh.all_triangles()
        if isinstance(scene_or_mesh, SolidScene)
        else np.asarray(scene_or_mesh)
    )
    stream.write(f"solid {name}\n")
    for tri in triangles:
        n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        length = np.linalg.norm(n)
        if length > 0:
            n = n / length
        stream.write(f"  facet normal {n[0]:.6e} {n[1]:.6e} {n[2]:.6e}\n")
        stream.write("    outer loop\n")
        for v in tri:
            stream.write(f"      vertex {v[0]:.6e} {v[1]:.6e} {v[2]:.6e}\n")
        stream.write("    endloop\n")
        stream.write("  endfacet\n")
    stream.write(f"endsolid {name}\n")


_VOXEL_MAGIC = b"CQVX"
_VOXEL_VERSION = 1


def write_voxel_grid(stream: IO[bytes], grid: VoxelGrid) -> None:
    """Run-length-encoded binary voxel export.

    Layout: magic ``CQVX``, u8 version, u32 resolution, f64 lo, f64 hi,
    u64 run count, then u32 run lengths over the row-major flattened
    occupancy, alternating empty/filled and starting with empty.
    """
    flat = grid.occupancy.ravel()
    runs: list[int] = []
    current = False
    count = 0
    for bit in flat:
        if bool(bit) == current:
            count += 1
        else:
            runs.append(count)
            current = not current
            count = 1
    runs.append(count)
    stream.write(_VOXEL_MAGIC)
    stream.write(struct.pack("<BIddQ", _VOXEL_VERSION, grid.resolution, grid.lo, grid.hi, len(runs)))
    stream.write(struct.pack(f"<{len(runs)}I", *runs))


def read_voxel_grid(stream: IO[bytes]) -> VoxelGrid:
    magic = stream.read(4)
    if magic != _VOXEL_MAGIC:
        raise ValueError(f"bad voxel file magic {magic!r}")
    version, resolution, lo, hi, n_runs = struct.unpack("<BIddQ", stream.read(29))
    if version != _VOXEL_VERSION:
        raise ValueError(f"unsupported voxel format version {version}")
    runs = struct.unpack(f"<{n_runs}I", stream.read(4 * n_runs))
    flat = np.zeros(resolution**3, dtype=bool)
    pos = 0
    filled = False
    for run in runs:
        if filled:
            flat[pos:pos + run] = True
        pos += run
        filled = not filled
    if pos != resolution**3:
        raise ValueError("voxel run lengths do not cover the grid")
    return VoxelGrid(resolution, lo, hi, flat.reshape((resolution,) * 3))


def voxel_iou(a: VoxelGrid, b: VoxelGrid) -> float:
    """Intersection over union of two grids on the same lattice."""
    if not a.same_lattice(b):
        raise LatticeMismatchError(
            f"grids differ: {a.resolution}@[{a.lo},{a.hi}] vs {b.resolution}@[{b.lo},{b.hi}]"
        )
    union = int((a.occupancy | b.occupancy).sum())
    if union == 0:
        return 1.0
    inter = int((a.occupancy & b.occupancy).sum())
    return inter / union
