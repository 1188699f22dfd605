from __future__ import annotations

import math

import numpy as np
import pytest

from cadseq.dsl import CadProgram
from cadseq.errors import DimensionMismatchError, EmptyInputError, RangeError
from cadseq.metrics import (
    MetricsReport,
    PredictionPair,
    acp,
    aot,
    ap1,
    ap2,
    asot,
    auc_ap1,
    baseline_ap1_no_sketch,
    baseline_ap1_with_sketch,
    cosine_sim,
    edsot,
    levenshtein,
    msot,
    multiset_vector,
    parsing_rate,
    positionwise_type_accuracy,
    report,
    tanimoto,
)
from cadseq.synth import all_templates, draw_template_program
from cadseq.vector import vectorize

from conftest import make_matrix, perturb_matrix

# whole sequences including start/end marks, as stored in the matrices
CYLINDER_TYPES = [5, 0, 3, 4, 6]
PRISM_TYPES = [5, 0, 1, 1, 1, 4, 6]

CYLINDER_ROWS = [
    [5, -1, -1, -1, -1, -1, -1],
    [0, 0, -1, -1, -1, -1, -1],
    [3, -1, 128, 128, -1, 128, -1],
    [4, -1, -1, -1, -1, -1, 255],
]
PRISM_ROWS = [
    [5, -1, -1, -1, -1, -1, -1],
    [0, 0, -1, -1, -1, -1, -1],
    [1, -1, 230, 128, -1, -1, -1],
    [1, -1, 128, 230, -1, -1, -1],
    [1, -1, 128, 128, -1, -1, -1],
    [4, -1, -1, -1, -1, -1, 255],
]


def pair_of(gt_rows, pred_rows) -> PredictionPair:
    return PredictionPair(make_matrix(gt_rows), make_matrix(pred_rows))


def random_pairs(count: int, seed: int) -> list[PredictionPair]:
    """Pattern-valid prediction sets derived from template draws."""
    templates = all_templates()
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        template = templates[i % len(templates)]
        program = draw_template_program(template, "random", np.random.default_rng([seed, i]))
        gt = vectorize(program)
        pairs.append(PredictionPair(gt, perturb_matrix(gt, rng)))
    return pairs


class TestAcp:
    def test_perfect(self):
        pairs = [pair_of(CYLINDER_ROWS, CYLINDER_ROWS)] * 3
        for n in range(1, 7):
            assert acp(pairs, n, 3) == 1.0

    def test_radius_off_by_four(self):
        pred = [list(r) for r in CYLINDER_ROWS]
        pred[2][5] += 4
        pairs = [pair_of(CYLINDER_ROWS, pred)]
        assert acp(pairs, 6, 3) == 0.0
        assert acp(pairs, 6, 4) == 1.0

    def test_plane_needs_exact_match_below_max_tolerance(self):
        pred = [list(r) for r in CYLINDER_ROWS]
        pred[1][1] = 1  # wrong sketch plane
        pairs = [pair_of(CYLINDER_ROWS, pred)]
        assert acp(pairs, 6, 3) == 0.0
        assert acp(pairs, 6, 254) == 0.0
        assert acp(pairs, 6, 255) == 1.0  # max tolerance subsumes every slot

    def test_type_mismatch_fails(self):
        pairs = [pair_of(CYLINDER_ROWS, PRISM_ROWS)]
        assert acp(pairs, 6, 255) == 0.0

    def test_at_max_tolerance_equals_asot(self):
        pairs = random_pairs(120, seed=31)
        for n in range(1, 7):
            assert acp(pairs, n, 255) == asot(pairs, n)

    def test_not_below_asot(self):
        pairs = random_pairs(80, seed=5)
        for n in range(1, 7):
            assert acp(pairs, n, 3) <= asot(pairs, n)

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            acp([], 6, 3)

    def test_bad_eta(self):
        with pytest.raises(RangeError):
            acp([pair_of(CYLINDER_ROWS, CYLINDER_ROWS)], 6, 256)


class TestAsot:
    def test_identical(self):
        assert asot([pair_of(PRISM_ROWS, PRISM_ROWS)], 6) == 1.0

    def test_single_substitution_fails_sequence(self):
        # one arc predicted as a line in an otherwise matching sequence
        gt = make_matrix(_typed_rows([5, 0, 2, 2, 2, 4, 6]))
        pred = make_matrix(_typed_rows([5, 0, 1, 2, 2, 4, 6]))
        assert asot([PredictionPair(gt, pred)], 6) == 0.0

    def test_fifty_fifty(self):
        good = pair_of(PRISM_ROWS, PRISM_ROWS)
        bad = PredictionPair(
            make_matrix(_typed_rows([5, 0, 2, 2, 2, 4, 6])),
            make_matrix(_typed_rows([5, 0, 1, 2, 2, 4, 6])),
        )
        assert asot([good, bad], 6) == 0.5


def _typed_rows(types: list[int]) -> list[list[int]]:
    rows = []
    for t in types:
        row = [t, -1, -1, -1, -1, -1, -1]
        if t == 0:
            row[1] = 0
        elif t == 1:
            row[2], row[3] = 100, 100
        elif t == 2:
            row[2], row[3], row[4] = 100, 100, 100
        elif t == 3:
            row[2], row[3], row[5] = 100, 100, 100
        elif t == 4:
            row[6] = 100
        rows.append(row)
    return rows


def brute_levenshtein(a, b, i=None, j=None) -> int:
    if i is None:
        i, j = len(a), len(b)
    if i == 0:
        return j
    if j == 0:
        return i
    cost = 0 if a[i - 1] == b[j - 1] else 1
    return min(
        brute_levenshtein(a, b, i - 1, j) + 1,
        brute_levenshtein(a, b, i, j - 1) + 1,
        brute_levenshtein(a, b, i - 1, j - 1) + cost,
    )


class TestEdsot:
    def test_identical_is_zero(self):
        assert edsot([pair_of(PRISM_ROWS, PRISM_ROWS)], 6) == 0.0

    def test_cylinder_vs_quad(self):
        # substitution plus two insertions
        gt = make_matrix(_typed_rows(CYLINDER_TYPES))
        pred = make_matrix(_typed_rows([5, 0, 1, 1, 1, 4, 6]))
        assert edsot([PredictionPair(gt, pred)], 10) == 3.0

    def test_single_substitution(self):
        gt = make_matrix(_typed_rows([5, 0, 2, 2, 2, 4, 6]))
        pred = make_matrix(_typed_rows([5, 0, 1, 2, 2, 4, 6]))
        assert edsot([PredictionPair(gt, pred)], 10) == 1.0

    def test_dp_matches_recursive_brute_force(self):
        rng = np.random.default_rng(13)
        for _ in range(1500):
            a = rng.integers(0, 7, size=rng.integers(0, 7)).tolist()
            b = rng.integers(0, 7, size=rng.integers(0, 7)).tolist()
            assert levenshtein(a, b) == brute_levenshtein(a, b)

    def test_zero_iff_asot_one(self):
        pairs = random_pairs(60, seed=17)
        for n in range(1, 7):
            for pair in pairs:
                e = edsot([pair], n)
                s = asot([pair], n)
                assert (e == 0.0) == (s == 1.0)


class TestAot:
    def test_identical(self):
        assert aot([pair_of(PRISM_ROWS, PRISM_ROWS)], 6) == 1.0

    def test_four_of_five_sequence_level(self):
        # one wrong operation type out of five, no marks
        gt = [[0, 2, 2, 2, 4]]
        pred = [[0, 1, 2, 2, 4]]
        assert positionwise_type_accuracy(gt, pred) == 4 / 5

    def test_shorter_prediction_drops_credit(self):
        gt = make_matrix(_typed_rows([5, 0, 1, 1, 1, 4, 6]))
        pred_rows = _typed_rows([5, 0, 1, 1, 1, 4, 6])[:5]  # truncated after 5 rows
        pred = make_matrix(pred_rows)
        # compared positions all match but the truth has 7 rows at n=10
        assert aot([PredictionPair(gt, pred)], 10) == (7 - 2) / 7

    def test_asot_one_implies_aot_one(self):
        pairs = random_pairs(60, seed=19)
        for n in range(1, 7):
            if asot(pairs, n) == 1.0:
                assert aot(pairs, n) == 1.0


class TestAp1:
    def test_perfect_at_zero_tolerance(self):
        pairs = [pair_of(PRISM_ROWS, PRISM_ROWS)]
        for eta in (0, 3, 255):
            assert ap1(pairs, 6, eta) == 1.0

    def test_wrong_type_zeroes_the_position(self):
        gt = make_matrix(_typed_rows([5, 0, 3, 4, 6]))
        pred_rows = _typed_rows([5, 0, 1, 4, 6])
        pred = make_matrix(pred_rows)
        value = ap1([PredictionPair(gt, pred)], 10, 255)
        # 5 truth rows; one position fully discredited
        assert value == (5 - 1) * 6 / (5 * 6)

    def test_circle_row_slot_accounting(self):
        gt = [
            [5, -1, -1, -1, -1, -1, -1],
            [3, -1, 128, 128, -1, 100, -1],
        ]
        pred = [
            [5, -1, -1, -1, -1, -1, -1],
            [3, -1, 128, 128, -1, 103, -1],
        ]
        pairs = [pair_of(gt, pred)]
        assert ap1(pairs, 2, 3) == 1.0  # 12 of 12 slots, radius within tolerance
        assert ap1(pairs, 2, 2) == 11 / 12

    def test_plane_slot_never_tolerant(self):
        gt = [[5, -1, -1, -1, -1, -1, -1], [0, 0, -1, -1, -1, -1, -1]]
        pred = [[5, -1, -1, -1, -1, -1, -1], [0, 1, -1, -1, -1, -1, -1]]
        pairs = [pair_of(gt, pred)]
        assert ap1(pairs, 2, 255) == 11 / 12

    def test_out_of_pattern_prediction_scores_zero_slots(self):
        gt = [[5, -1, -1, -1, -1, -1, -1], [4, -1, -1, -1, -1, -1, 100]]
        pred = [[5, -1, -1, -1, -1, -1, -1], [4, -1, 50, -1, -1, -1, 100]]
        pairs = [pair_of(gt, pred)]
        assert ap1(pairs, 2, 3) == 11 / 12  # the stray x value loses its slot

    def test_nondecreasing_in_eta(self):
        pairs = random_pairs(50, seed=23)
        values = [ap1(pairs, 6, eta) for eta in range(0, 256, 17)]
        assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))


class TestMsot:
    def test_prism_multiset_vector(self):
        assert multiset_vector(PRISM_TYPES).tolist() == [1, 3, 0, 0, 1, 1, 1]

    def test_self_similarity(self):
        v = multiset_vector(PRISM_TYPES)
        assert tanimoto(v, v) == 1.0
        assert cosine_sim(v, v) == 1.0

    def test_prism_vs_cylinder_hand_values(self):
        a = multiset_vector(PRISM_TYPES)
        b = multiset_vector(CYLINDER_TYPES)
        assert abs(tanimoto(a, b) - 4 / 14) < 1e-9
        assert abs(cosine_sim(a, b) - 4 / math.sqrt(65)) < 1e-9

    def test_zero_vector_conventions(self):
        zero = np.zeros(7, dtype=int)
        one = multiset_vector([5, 6])
        assert tanimoto(zero, zero) == 1.0 and cosine_sim(zero, zero) == 1.0
        assert tanimoto(zero, one) == 0.0 and cosine_sim(zero, one) == 0.0

    def test_pair_mean(self):
        pairs = [
            pair_of(PRISM_ROWS, PRISM_ROWS),
            PredictionPair(make_matrix(PRISM_ROWS), make_matrix(CYLINDER_ROWS)),
        ]
        tc, cs = msot(pairs, 10)
        assert abs(tc - (1.0 + 4 / 14) / 2) < 1e-12
        assert abs(cs - (1.0 + 4 / math.sqrt(65)) / 2) < 1e-12

    def test_tanimoto_never_exceeds_cosine_exhaustive(self):
        # every pair of count vectors with entries up to 3, in blocks
        grids = np.indices((4,) * 7).reshape(7, -1).T.astype(float)
        norms2 = (grids**2).sum(axis=1)
        for start in range(0, len(grids), 1024):
            a = grids[start:start + 1024]
            na2 = norms2[start:start + 1024][:, None]
            dots = a @ grids.T
            nb2 = norms2[None, :]
            tc_den = na2 + nb2 - dots
            prod = na2 * nb2
            both_zero = (na2 == 0) & (nb2 == 0)
            tc = np.where(both_zero, 1.0, np.divide(dots, tc_den, out=np.zeros_like(dots), where=tc_den > 0))
            cs = np.where(both_zero, 1.0, np.divide(dots, np.sqrt(prod, out=np.ones_like(prod), where=prod > 0), out=np.zeros_like(dots), where=prod > 0))
            assert (tc <= cs + 1e-12).all()


class TestAp2:
    def test_permuted_curves_score_perfectly(self):
        gt = make_matrix(PRISM_ROWS)
        pred_rows = [list(r) for r in PRISM_ROWS]
        pred_rows[2], pred_rows[4] = pred_rows[4], pred_rows[2]  # swap two lines
        pred = make_matrix(pred_rows)
        assert ap2([PredictionPair(gt, pred)], 10, 0) == 1.0
        assert ap1([PredictionPair(gt, pred)], 10, 0) < 1.0  # order hurts here

    def test_missing_type_contributes_zero(self):
        gt = make_matrix(_typed_rows([5, 0, 1, 4, 6]))
        pred = make_matrix(_typed_rows([5, 0, 3, 4, 6]))  # no line predicted
        value = ap2([PredictionPair(gt, pred)], 10, 255)
        assert value == (5 - 1) * 6 / (5 * 6)

    def test_greedy_matches_swapped_exact_instances(self):
        gt_rows = [
            [5, -1, -1, -1, -1, -1, -1],
            [0, 2, -1, -1, -1, -1, -1],
            [1, -1, 10, 20, -1, -1, -1],
            [1, -1, 200, 210, -1, -1, -1],
            [4, -1, -1, -1, -1, -1, 99],
        ]
        pred_rows = [list(r) for r in gt_rows]
        pred_rows[2], pred_rows[3] = pred_rows[3], pred_rows[2]
        assert ap2([pair_of(gt_rows, pred_rows)], 10, 0) == 1.0


class TestBaselines:
    def test_no_sketch_endpoints(self):
        assert baseline_ap1_no_sketch(0) == 1 / 256
        assert baseline_ap1_no_sketch(255) == 1.0

    def test_with_sketch_endpoints(self):
        assert abs(baseline_ap1_with_sketch(255) - (11 / 273 + 80 / 91)) < 1e-9
        expected_zero = 11 / 273 + (1 / 256) * (80 / 91)
        assert abs(baseline_ap1_with_sketch(0) - expected_zero) < 1e-9

    def test_monotone_nondecreasing(self):
        for fn in (baseline_ap1_no_sketch, baseline_ap1_with_sketch):
            values = [fn(eta) for eta in range(256)]
            assert all(a <= b for a, b in zip(values, values[1:]))

    def test_range_checked(self):
        with pytest.raises(RangeError):
            baseline_ap1_no_sketch(-1)
        with pytest.raises(RangeError):
            baseline_ap1_with_sketch(256)

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(2024)
        trials = 100_000
        gt = rng.integers(0, 256, trials)
        guess = rng.integers(0, 256, trials)
        for eta in (0, 3, 16, 64, 255):
            simulated = float((np.abs(gt - guess) <= eta).mean())
            assert abs(simulated - baseline_ap1_no_sketch(eta)) < 0.01


class TestAuc:
    def test_constant_curves(self):
        assert auc_ap1([1.0] * 256) == 1.0
        assert auc_ap1([0.0] * 256) == 0.0

    def test_linear_ramp(self):
        assert abs(auc_ap1(np.linspace(0, 1, 256).tolist()) - 0.5) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            auc_ap1([1.0] * 255)


class TestParsingRate:
    def test_marks_only_programs_never_parse(self):
        programs = [CadProgram.from_body([]) for _ in range(4)]
        assert parsing_rate(programs, 16) == 0.0

    def test_seven_of_ten(self, cylinder_program):
        programs = [cylinder_program] * 7 + [CadProgram.from_body([])] * 3
        assert parsing_rate(programs, 16) == 0.7

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            parsing_rate([], 16)


class TestReport:
    def test_perfect_prediction_fixed_point(self):
        pairs = [pair_of(PRISM_ROWS, PRISM_ROWS), pair_of(CYLINDER_ROWS, CYLINDER_ROWS)]
        result = report(pairs, resolution=32, image_size=(64, 64))
        for n in range(1, 7):
            row = result.per_n[n]
            assert row["acp"] == row["asot"] == row["aot"] == 1.0
            assert row["ap1"] == row["ap2"] == 1.0
            assert row["msot_tc"] == row["msot_cs"] == 1.0
            assert row["edsot"] == 0.0 and row["edsot_neg"] == 0.0
        g = result.geometry
        assert g["parsing_rate"] == 1.0
        assert g["iou_mean"] == 1.0 and g["iou_std"] == 0.0
        assert g["mse_mean"] == 0.0 and g["mse_std"] == 0.0

    def test_acp_at_max_tolerance_equals_asot_column(self):
        pairs = random_pairs(60, seed=41)
        result = report(pairs, include_geometry=False)
        for n in range(1, 7):
            assert result.acp_vs_eta[n][255] == result.per_n[n]["asot"]

    def test_sweeps_agree_with_direct_metrics(self):
        pairs = random_pairs(40, seed=43)
        result = report(pairs, eta=3, include_geometry=False)
        for n in (2, 4, 6):
            assert result.acp_vs_eta[n][3] == acp(pairs, n, 3)
            assert abs(result.ap1_vs_eta[n][3] - ap1(pairs, n, 3)) < 1e-12
            assert result.acp_vs_eta[n][255] == acp(pairs, n, 255)
            assert abs(result.ap1_vs_eta[n][255] - ap1(pairs, n, 255)) < 1e-12

    def test_sweeps_nondecreasing(self):
        pairs = random_pairs(40, seed=47)
        result = report(pairs, include_geometry=False)
        for n in range(1, 7):
            acp_curve = result.acp_vs_eta[n]
            ap1_curve = result.ap1_vs_eta[n]
            assert all(a <= b + 1e-15 for a, b in zip(acp_curve, acp_curve[1:]))
            assert all(a <= b + 1e-15 for a, b in zip(ap1_curve, ap1_curve[1:]))

    def test_json_round_trip_and_text(self):
        pairs = random_pairs(10, seed=53)
        result = report(pairs, include_geometry=False)
        rebuilt = MetricsReport.from_json_dict(result.to_json_dict())
        assert rebuilt.per_n == result.per_n
        text = result.to_text()
        assert "ACP" in text and "MSOT-CS" in text and "-EDSOT" in text

    def test_unparsed_predictions_counted(self):
        good = pair_of(CYLINDER_ROWS, CYLINDER_ROWS)
        bad_pred = make_matrix([[5, -1, -1, -1, -1, -1, -1]])  # marks only: no solid
        bad = PredictionPair(make_matrix(CYLINDER_ROWS), bad_pred)
        result = report([good, bad], resolution=16, image_size=(32, 32))
        assert result.geometry["parsing_rate"] == 0.5
        assert result.geometry["num_parsed"] == 1.0

    def test_per_op_curves_present(self):
        pairs = random_pairs(30, seed=59)
        result = report(pairs, include_geometry=False)
        assert set(result.ap1_vs_eta_by_op) == {"line", "arc", "circle", "extrude"}
        assert set(result.ap1_vs_eta_by_op["circle"]) == {"x", "y", "radius"}
        assert set(result.auc["ap1_by_op"]["extrude"]) == {"depth"}
        for curves in result.ap1_vs_eta_by_op.values():
            for curve in curves.values():
                assert len(curve) == 256
                assert all(0.0 <= v <= 1.0 for v in curve)

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            report([])
