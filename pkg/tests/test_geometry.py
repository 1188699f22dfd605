from __future__ import annotations

import io
import math

import numpy as np
import pytest

from cadseq.dsl import CadOp, CadProgram, parse_program
from cadseq.errors import (
    EmptyResultError,
    LatticeMismatchError,
    OpenProfileError,
    ParseFailureError,
    SelfIntersectingError,
)
from cadseq.geometry import (
    SNAP_GAP,
    Profile,
    SketchPlane,
    SolidScene,
    VoxelGrid,
    build_profiles,
    evaluate_program,
    extrude,
    lattice_centers,
    point_in_profile,
    read_voxel_grid,
    voxel_iou,
    write_stl,
    write_voxel_grid,
)

CYL_VOLUME = math.pi * 5.0**2 * 10.0


def square_loop(side: float) -> list[CadOp]:
    return [
        CadOp.line(side, 0.0),
        CadOp.line(side, side),
        CadOp.line(0.0, side),
        CadOp.line(0.0, 0.0),
    ]


class TestProfiles:
    def test_lone_circle(self):
        profiles = build_profiles([CadOp.circle(0.0, 0.0, 0.5)])
        assert len(profiles) == 1
        assert profiles[0].kind == "circle"
        assert profiles[0].closed

    def test_triangle_loop_closes(self):
        curves = [CadOp.line(0.8, 0.0), CadOp.line(0.0, 0.8), CadOp.line(0.0, 0.0)]
        (profile,) = build_profiles(curves)
        assert profile.kind == "loop"
        assert profile.closed
        assert profile.closure_gap == 0.0

    def test_open_chain_flagged(self):
        curves = [CadOp.line(1.0, 0.0), CadOp.line(1.0, 1.0)]
        (profile,) = build_profiles(curves)
        assert not profile.closed
        plane = SketchPlane(0)
        scene = SolidScene.empty(10.0, 16)
        with pytest.raises(OpenProfileError):
            extrude(profile, plane, 1.0, 3, 10.0, scene)

    def test_near_closure_snaps_shut(self):
        gap = SNAP_GAP * 0.5
        curves = [CadOp.line(0.8, 0.0), CadOp.line(0.0, 0.8), CadOp.line(gap, 0.0)]
        (profile,) = build_profiles(curves)
        assert profile.closed
        assert profile.segments[-1].end == (0.0, 0.0)
        assert math.isclose(profile.closure_gap, gap)

    def test_wide_gap_stays_open(self):
        curves = [CadOp.line(0.8, 0.0), CadOp.line(0.0, 0.8), CadOp.line(SNAP_GAP * 2, 0.0)]
        (profile,) = build_profiles(curves)
        assert not profile.closed

    def test_two_line_loop_is_degenerate(self):
        curves = [CadOp.line(0.5, 0.5), CadOp.line(0.0, 0.0)]
        (profile,) = build_profiles(curves)
        assert not profile.closed

    def test_self_intersection_raises(self):
        bowtie = [
            CadOp.line(0.8, 0.8),
            CadOp.line(0.8, 0.0),
            CadOp.line(0.0, 0.8),
            CadOp.line(0.0, 0.0),
        ]
        with pytest.raises(SelfIntersectingError):
            build_profiles(bowtie)

    def test_circle_splits_chain_runs(self):
        curves = [CadOp.line(0.5, 0.0), CadOp.circle(0.0, 0.0, 0.2), CadOp.line(0.1, 0.1)]
        profiles = build_profiles(curves)
        assert [p.kind for p in profiles] == ["loop", "circle", "loop"]
        assert not profiles[0].closed and not profiles[2].closed


def _winding_number(p, poly) -> int:
    # independent orientation-sum oracle, nothing shared with the kernel
    total = 0.0
    for i in range(len(poly)):
        a = poly[i] - np.asarray(p)
        b = poly[(i + 1) % len(poly)] - np.asarray(p)
        total += math.atan2(a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1])
    return round(total / (2 * math.pi))


class TestPointInProfile:
    def test_unit_circle(self):
        profile = Profile(kind="circle", center=(0.0, 0.0), radius=1.0)
        assert point_in_profile((0.0, 0.0), profile)
        assert not point_in_profile((2.0, 0.0), profile)

    def test_triangle_centroid_matches_winding_oracle(self):
        curves = [CadOp.line(0.8, 0.0), CadOp.line(0.0, 0.8), CadOp.line(0.0, 0.0)]
        (profile,) = build_profiles(curves)
        poly = profile.polygon()
        centroid = poly.mean(axis=0)
        assert point_in_profile(tuple(centroid), profile)
        assert _winding_number(centroid, poly) != 0
        rng = np.random.default_rng(5)
        for _ in range(200):
            p = rng.uniform(-1, 1, 2)
            if min(np.abs(poly - p).sum(axis=1)) < 1e-3:
                continue  # stay away from the boundary
            assert point_in_profile(tuple(p), profile) == (_winding_number(p, poly) != 0)

    def test_open_profile_rejected(self):
        (profile,) = build_profiles([CadOp.line(1.0, 0.0), CadOp.line(1.0, 1.0)])
        with pytest.raises(OpenProfileError):
            point_in_profile((0.5, 0.5), profile)


class TestEvaluate:
    def test_cylinder_volume_within_3_percent(self, cylinder_program):
        scene = evaluate_program(cylinder_program, 64)
        assert len(scene.bodies) == 1
        assert abs(scene.total_volume - CYL_VOLUME) / CYL_VOLUME < 0.03

    def test_marks_only_fails_to_parse(self):
        with pytest.raises(ParseFailureError):
            evaluate_program(CadProgram.from_body([]))

    def test_pure_sketch_fails_to_parse(self):
        program = parse_program('add_sketch("XY")\nadd_line(0.5, 0)\nadd_line(0.5, 0.5)\nadd_line(0, 0)')
        with pytest.raises(ParseFailureError):
            evaluate_program(program, 16)

    def test_triprism_volume(self, triprism_program):
        # right triangle with legs 8 world units, height 10
        scene = evaluate_program(triprism_program, 64)
        expected = 0.5 * 8.0 * 8.0 * 10.0
        assert abs(scene.total_volume - expected) / expected < 0.03

    def test_open_profile_wrapped_as_parse_failure(self):
        program = parse_program('add_sketch("XY")\nadd_line(0.5, 0)\nadd_line(0.5, 0.5)\nadd_extrude(0, 1)')
        with pytest.raises(ParseFailureError) as excinfo:
            evaluate_program(program, 16)
        assert isinstance(excinfo.value.cause, OpenProfileError)

    def test_determinism(self, triprism_program):
        a = evaluate_program(triprism_program, 32).union_occupancy()
        b = evaluate_program(triprism_program, 32).union_occupancy()
        assert np.array_equal(a, b)

    def test_negative_depth_mirrors_through_plane(self, cylinder_program):
        up = evaluate_program(cylinder_program, 32).union_occupancy()
        down_text = 'add_sketch("XY")\nadd_circle(0.0, 0.0, 0.5)\nadd_extrude(0, -1.0)\n'
        down = evaluate_program(parse_program(down_text), 32).union_occupancy()
        assert up.sum() == down.sum() > 0
        assert np.array_equal(down, np.flip(up, axis=2))

    def test_each_plane_orients_geometry(self):
        # the same flat box lands on a different lattice axis per plane
        for plane, axis in (("XY", 2), ("XZ", 1), ("YZ", 0)):
            text = f'add_sketch("{plane}")\n' + (
                "add_line(0.8, 0.0)\nadd_line(0.8, 0.8)\nadd_line(0.0, 0.8)\nadd_line(0.0, 0.0)\n"
                "add_extrude(0, 0.1)\n"
            )
            occ = evaluate_program(parse_program(text), 32).union_occupancy()
            spans = [np.ptp(np.nonzero(occ)[ax]) for ax in range(3)]
            assert spans[axis] == min(spans), (plane, spans)

    def test_translation_coherence_one_voxel_shift(self):
        # R=48 over [-12, 12] gives a 0.5 world-unit pitch = 0.05 normalized
        base = 'add_sketch("XY")\nadd_circle(0.0, 0.0, 0.5)\nadd_extrude(0, 1.0)\n'
        moved = 'add_sketch("XY")\nadd_circle(0.05, 0.0, 0.5)\nadd_extrude(0, 1.0)\n'
        occ_base = evaluate_program(parse_program(base), 48).union_occupancy()
        occ_moved = evaluate_program(parse_program(moved), 48).union_occupancy()
        assert np.array_equal(occ_moved, np.roll(occ_base, 1, axis=0))

    def test_volume_convergence(self, cylinder_program):
        errors = [
            abs(evaluate_program(cylinder_program, r).total_volume - CYL_VOLUME) / CYL_VOLUME
            for r in (32, 64, 128)
        ]
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 0.01


class TestBooleans:
    def test_cut_matches_set_difference_oracle(self):
        plane = SketchPlane(0)
        a = build_profiles(square_loop(0.6))[0]
        scene0 = SolidScene.empty(10.0, 16)
        scene_a = extrude(a, plane, 0.5, 3, 10.0, scene0)
        occ_a = scene_a.union_occupancy()

        # the cutter alone, on the same lattice
        b = _offset_square_profile()
        scene_b = extrude(b, plane, 0.8, 3, 10.0, scene0)
        occ_b = scene_b.union_occupancy()

        cut_scene = extrude(b, plane, 0.8, 1, 10.0, scene_a)
        occ_cut = cut_scene.union_occupancy()

        # brute-force per-cell oracle
        expected = np.zeros_like(occ_a)
        for i in range(16):
            for j in range(16):
                for k in range(16):
                    expected[i, j, k] = occ_a[i, j, k] and not occ_b[i, j, k]
        assert np.array_equal(occ_cut, expected)

    def test_join_matches_union_oracle(self):
        plane = SketchPlane(0)
        a = build_profiles(square_loop(0.6))[0]
        b = _offset_square_profile()
        scene0 = SolidScene.empty(10.0, 16)
        occ_a = extrude(a, plane, 0.5, 3, 10.0, scene0).union_occupancy()
        occ_b = extrude(b, plane, 0.8, 3, 10.0, scene0).union_occupancy()
        joined = extrude(b, plane, 0.8, 0, 10.0, extrude(a, plane, 0.5, 3, 10.0, scene0))
        assert len(joined.bodies) == 1
        assert np.array_equal(joined.union_occupancy(), occ_a | occ_b)

    def test_intersect_matches_intersection_oracle(self):
        plane = SketchPlane(0)
        a = build_profiles(square_loop(0.6))[0]
        b = _offset_square_profile()
        scene0 = SolidScene.empty(10.0, 16)
        occ_a = extrude(a, plane, 0.5, 3, 10.0, scene0).union_occupancy()
        occ_b = extrude(b, plane, 0.8, 3, 10.0, scene0).union_occupancy()
        both = extrude(b, plane, 0.8, 2, 10.0, extrude(a, plane, 0.5, 3, 10.0, scene0))
        assert np.array_equal(both.union_occupancy(), occ_a & occ_b)

    def test_add_makes_independent_body(self):
        plane = SketchPlane(0)
        a = build_profiles(square_loop(0.6))[0]
        b = _offset_square_profile()
        scene0 = SolidScene.empty(10.0, 16)
        scene = extrude(b, plane, 0.8, 3, 10.0, extrude(a, plane, 0.5, 3, 10.0, scene0))
        assert len(scene.bodies) == 2

    def test_cut_to_nothing_raises(self):
        plane = SketchPlane(0)
        small = build_profiles(square_loop(0.3))[0]
        big = build_profiles(square_loop(0.6))[0]
        scene0 = SolidScene.empty(10.0, 16)
        scene = extrude(small, plane, 0.3, 3, 10.0, scene0)
        with pytest.raises(EmptyResultError):
            extrude(big, plane, 0.5, 1, 10.0, scene)

    def test_tiny_profile_hits_no_voxels(self):
        plane = SketchPlane(0)
        tiny = Profile(kind="circle", center=(0.0, 0.0), radius=0.001)
        with pytest.raises(EmptyResultError):
            extrude(tiny, plane, 1.0, 3, 10.0, SolidScene.empty(10.0, 16))


def _offset_square_profile() -> Profile:
    # a loop away from the origin, built directly (chains would start at 0,0)
    from cadseq.geometry import LineSegment

    pts = [(0.3, 0.3), (0.9, 0.3), (0.9, 0.9), (0.3, 0.9)]
    segments = tuple(LineSegment(pts[i], pts[(i + 1) % 4]) for i in range(4))
    return Profile(kind="loop", segments=segments, closed=True)


class TestVoxelIou:
    def test_self_is_one(self, cylinder_program):
        grid = evaluate_program(cylinder_program, 32).union_grid()
        assert voxel_iou(grid, grid) == 1.0

    def test_disjoint_is_zero(self):
        a = VoxelGrid.empty(8, -1.0, 1.0)
        occ = np.zeros((8, 8, 8), dtype=bool)
        occ[0] = True
        b = a.with_occupancy(occ)
        occ2 = np.zeros((8, 8, 8), dtype=bool)
        occ2[4] = True
        c = a.with_occupancy(occ2)
        assert voxel_iou(b, c) == 0.0

    def test_both_empty_is_one(self):
        a = VoxelGrid.empty(8, -1.0, 1.0)
        assert voxel_iou(a, a) == 1.0

    def test_lattice_mismatch(self):
        a = VoxelGrid.empty(8, -1.0, 1.0)
        b = VoxelGrid.empty(16, -1.0, 1.0)
        with pytest.raises(LatticeMismatchError):
            voxel_iou(a, b)

    def test_half_shifted_cube_is_one_third(self):
        # cube of side 4 against itself shifted by half its width: IoU 1/3
        plane = SketchPlane(0)
        scene0 = SolidScene.empty(10.0, 64)

        def cube(center_x: float):
            from cadseq.geometry import LineSegment

            half = 0.2
            pts = [
                (center_x - half, -half), (center_x + half, -half),
                (center_x + half, half), (center_x - half, half),
            ]
            segs = tuple(LineSegment(pts[i], pts[(i + 1) % 4]) for i in range(4))
            profile = Profile(kind="loop", segments=segs, closed=True)
            return extrude(profile, plane, 0.4, 3, 10.0, scene0).union_grid()

        iou = voxel_iou(cube(0.0), cube(0.2))
        assert abs(iou - 1.0 / 3.0) < 0.05


class TestExports:
    def test_stl_structure(self, cylinder_program):
        scene = evaluate_program(cylinder_program, 16)
        buf = io.StringIO()
        write_stl(buf, scene, name="cyl")
        text = buf.getvalue()
        assert text.startswith("solid cyl")
        assert text.rstrip().endswith("endsolid cyl")
        assert text.count("facet normal") == text.count("endfacet") > 0

    def test_voxel_rle_round_trip(self, triprism_program):
        grid = evaluate_program(triprism_program, 32).union_grid()
        buf = io.BytesIO()
        write_voxel_grid(buf, grid)
        buf.seek(0)
        loaded = read_voxel_grid(buf)
        assert loaded.same_lattice(grid)
        assert np.array_equal(loaded.occupancy, grid.occupancy)

    def test_lattice_centers_cached_and_correct(self):
        centers = lattice_centers(4, -2.0, 2.0)
        assert np.allclose(centers, [-1.5, -0.5, 0.5, 1.5])
        assert lattice_centers(4, -2.0, 2.0) is centers
