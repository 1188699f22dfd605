"""Multi-level evaluation of predicted CAD programs.

Sequence metrics compare 10x7 feature matrices over prefixes: the rows of
each sequence through its first end mark, truncated to the first ``n``
rows.  Start and end marks take part in the comparison.  Three hierarchies
(whole sequence, position-wise types, set-based types) each carry an
operation-type layer and a parameter layer gated on type correctness.

Tolerance semantics: a parameter counts as correct when the prediction is
in range and within ``eta`` bins of the truth.  The sketch-plane slot is
discrete and never receives tolerance; in the whole-program accuracy
sweep the maximal tolerance (255) subsumes every in-range slot including
the plane, which is what makes that accuracy equal the type-sequence
accuracy at the top of the sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .dsl import CadProgram
from .errors import (
    CadseqError,
    DimensionMismatchError,
    EmptyInputError,
    RangeError,
)
from .geometry import SolidScene, evaluate_program, voxel_iou
from .rendering import Camera, image_mse, render
from .vector import LEVELS, FeatureMatrix, devectorize

ETA_MAX = LEVELS - 1
DEFAULT_ETA = 3
DEFAULT_PREFIX_MAX = 6

#: Parameter slots inspected per operation type for the per-op sweeps.
OP_PARAM_SLOTS: dict[str, tuple[tuple[str, int], ...]] = {
    "line": (("x", 1), ("y", 2)),
    "arc": (("x", 1), ("y", 2), ("sweep", 3)),
    "circle": (("x", 1), ("y", 2), ("radius", 4)),
    "extrude": (("depth", 5),),
}
_OP_CODES = {"line": 1, "arc": 2, "circle": 3, "extrude": 4}


@dataclass(frozen=True)
class PredictionPair:
    """A ground-truth matrix and the matrix predicted for the same sample."""

    gt: FeatureMatrix
    pred: FeatureMatrix


@dataclass(frozen=True)
class Tolerance:
    """Permissible bin deviation for parameter comparisons."""

    eta: int = DEFAULT_ETA

    def __post_init__(self):
        if not 0 <= self.eta <= ETA_MAX:
            raise RangeError(f"tolerance {self.eta} outside 0..{ETA_MAX}")


def _require_pairs(pairs: Sequence[PredictionPair]) -> None:
    if not pairs:
        raise EmptyInputError("no prediction pairs to evaluate")


def _prefix(matrix: FeatureMatrix, n: int) -> np.ndarray:
    return matrix.data[: min(n, matrix.sequence_length())]


def _params_ok(g: np.ndarray, p: np.ndarray, eta: int, plane_tolerant: bool) -> np.ndarray:
    """Per-slot correctness for aligned rows; shape (rows, 6) of bool."""
    unused = g == -1
    agree_unused = unused & (p == -1)
    in_range = (p >= 0) & (p <= ETA_MAX)
    within = np.abs(g - p) <= eta
    ok_used = ~unused & in_range & within
    if not plane_tolerant:
        ok_used[:, 0] = ~unused[:, 0] & in_range[:, 0] & (g[:, 0] == p[:, 0])
    return agree_unused | ok_used


def acp(pairs: Sequence[PredictionPair], n: int, eta: int = DEFAULT_ETA) -> float:
    """Fraction of pairs whose first-n rows match the truth exactly enough.

    Types must be identical; used parameters must be in range and within
    ``eta``; unused slots must agree; the plane slot must be exact except
    at the maximal tolerance.
    """
    _require_pairs(pairs)
    Tolerance(eta)
    plane_tolerant = eta >= ETA_MAX
    hits = 0
    for pair in pairs:
        g = _prefix(pair.gt, n)
        p = _prefix(pair.pred, n)
        if g.shape != p.shape or not np.array_equal(g[:, 0], p[:, 0]):
            continue
        if _params_ok(g[:, 1:], p[:, 1:], eta, plane_tolerant).all():
            hits += 1
    return hits / len(pairs)


def asot(pairs: Sequence[PredictionPair], n: int) -> float:
    """Fraction of pairs whose prefix type columns are identical."""
    _require_pairs(pairs)
    hits = 0
    for pair in pairs:
        g = _prefix(pair.gt, n)[:, 0]
        p = _prefix(pair.pred, n)[:, 0]
        if g.shape == p.shape and np.array_equal(g, p):
            hits += 1
    return hits / len(pairs)


def levenshtein(a: Sequence[int], b: Sequence[int]) -> int:
    """Minimum insertions, deletions and substitutions turning a into b."""
    m, n = len(a), len(b)
    prev = list(range(n + 1))
    cur = [0] * (n + 1)
    for i in range(1, m + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, n + 1):
            cost = 0 if ai == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev, cur = cur, prev
    return prev[n]


def edsot(pairs: Sequence[PredictionPair], n: int) -> float:
    """Mean edit distance between prefix type columns."""
    _require_pairs(pairs)
    total = 0
    for pair in pairs:
        total += levenshtein(
            _prefix(pair.gt, n)[:, 0].tolist(), _prefix(pair.pred, n)[:, 0].tolist()
        )
    return total / len(pairs)


def positionwise_type_accuracy(gt_seqs: Sequence[Sequence[int]],
                               pred_seqs: Sequence[Sequence[int]]) -> float:
    """Matching type codes over compared positions, per total truth length.

    Positions are compared up to the shorter sequence of each pair; the
    denominator counts every truth position.
    """
    if not gt_seqs:
        raise EmptyInputError("no sequences to evaluate")
    num = 0
    den = 0
    for g, p in zip(gt_seqs, pred_seqs):
        l = min(len(g), len(p))
        num += sum(1 for j in range(l) if g[j] == p[j])
        den += len(g)
    return num / den


def aot(pairs: Sequence[PredictionPair], n: int) -> float:
    """Position-wise operation-type accuracy over prefixes."""
    _require_pairs(pairs)
    return positionwise_type_accuracy(
        [_prefix(pair.gt, n)[:, 0].tolist() for pair in pairs],
        [_prefix(pair.pred, n)[:, 0].tolist() for pair in pairs],
    )


def ap1(pairs: Sequence[PredictionPair], n: int, eta: int = DEFAULT_ETA) -> float:
    """Parameter accuracy gated on position-wise type correctness.

    Counts slots at compared positions where the type matches, the
    prediction is in range, and the deviation is within ``eta`` (plane
    slot exact; mutually unused slots count as correct).  The denominator
    is six slots for every truth prefix row.
    """
    _require_pairs(pairs)
    Tolerance(eta)
    num = 0
    den = 0
    for pair in pairs:
        g = _prefix(pair.gt, n)
        p = _prefix(pair.pred, n)
        l = min(len(g), len(p))
        c1 = g[:l, 0] == p[:l, 0]
        ok = _params_ok(g[:l, 1:], p[:l, 1:], eta, plane_tolerant=False) & c1[:, None]
        num += int(ok.sum())
        den += 6 * len(g)
    return num / den


def multiset_vector(types: Iterable[int]) -> np.ndarray:
    """Count vector over the seven operation-type codes."""
    return np.bincount(list(types), minlength=7)


def tanimoto(a: np.ndarray, b: np.ndarray) -> float:
    """Tanimoto coefficient of two count vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = float(a @ b)
    na2 = float(a @ a)
    nb2 = float(b @ b)
    if na2 == 0.0 and nb2 == 0.0:
        return 1.0
    if na2 == 0.0 or nb2 == 0.0:
        return 0.0
    return dot / (na2 + nb2 - dot)


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two count vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na2 = float(a @ a)
    nb2 = float(b @ b)
    if na2 == 0.0 and nb2 == 0.0:
        return 1.0
    if na2 == 0.0 or nb2 == 0.0:
        return 0.0
    # sqrt of the product keeps self-similarity exactly 1.0
    return float(a @ b) / math.sqrt(na2 * nb2)


def msot(pairs: Sequence[PredictionPair], n: int) -> tuple[float, float]:
    """Mean Tanimoto and cosine similarity of prefix type multisets."""
    _require_pairs(pairs)
    tc_total = 0.0
    cs_total = 0.0
    for pair in pairs:
        a = multiset_vector(_prefix(pair.gt, n)[:, 0].tolist())
        b = multiset_vector(_prefix(pair.pred, n)[:, 0].tolist())
        tc_total += tanimoto(a, b)
        cs_total += cosine_sim(a, b)
    return tc_total / len(pairs), cs_total / len(pairs)


def ap2(pairs: Sequence[PredictionPair], n: int, eta: int = DEFAULT_ETA) -> float:
    """Parameter accuracy with set-wise instance matching.

    Within each type code, truth and predicted rows are matched greedily
    by minimal total absolute parameter distance (ties to earliest
    indices); unmatched truth rows contribute nothing.  Slot rules are
    those of the position-wise parameter accuracy.
    """
    _require_pairs(pairs)
    Tolerance(eta)
    num = 0
    den = 0
    for pair in pairs:
        g = _prefix(pair.gt, n)
        p = _prefix(pair.pred, n)
        den += 6 * len(g)
        for code in np.unique(g[:, 0]):
            g_idx = np.nonzero(g[:, 0] == code)[0]
            p_idx = np.nonzero(p[:, 0] == code)[0]
            if p_idx.size == 0:
                continue
            candidates = sorted(
                (
                    (int(np.abs(g[gi, 1:] - p[pi, 1:]).sum()), go, po)
                    for go, gi in enumerate(g_idx)
                    for po, pi in enumerate(p_idx)
                ),
            )
            used_g: set[int] = set()
            used_p: set[int] = set()
            for _, go, po in candidates:
                if go in used_g or po in used_p:
                    continue
                used_g.add(go)
                used_p.add(po)
                gi, pi = g_idx[go], p_idx[po]
                ok = _params_ok(
                    g[gi: gi + 1, 1:], p[pi: pi + 1, 1:], eta, plane_tolerant=False
                )
                num += int(ok.sum())
    return num / den


def baseline_ap1_no_sketch(eta: float) -> float:
    """Closed-form accuracy of uniform random guessing, plane slot aside."""
    if not 0 <= eta <= ETA_MAX:
        raise RangeError(f"tolerance {eta} outside 0..{ETA_MAX}")
    return (-eta * eta + 511.0 * eta + 256.0) / 65536.0


def baseline_ap1_with_sketch(eta: float) -> float:
    """Random-guess accuracy including the three-valued plane slot.

    The plane slot makes up 11/91 of all parameters in this corpus and a
    uniform guess over three planes is right a third of the time.
    """
    if not 0 <= eta <= ETA_MAX:
        raise RangeError(f"tolerance {eta} outside 0..{ETA_MAX}")
    return (1.0 / 3.0) * (11.0 / 91.0) + baseline_ap1_no_sketch(eta) * (80.0 / 91.0)


def auc_ap1(curve: Sequence[float]) -> float:
    """Normalized trapezoidal area under a 256-point tolerance curve."""
    if len(curve) != LEVELS:
        raise DimensionMismatchError(f"curve must have {LEVELS} points, got {len(curve)}")
    return float(np.trapezoid(np.asarray(curve, dtype=float))) / (LEVELS - 1)


def parsing_rate(programs: Sequence[CadProgram], resolution: int = 64) -> float:
    """Fraction of programs that evaluate to at least one non-empty body."""
    if not programs:
        raise EmptyInputError("no programs to evaluate")
    parsed = 0
    for program in programs:
        try:
            evaluate_program(program, resolution)
            parsed += 1
        except CadseqError:
            pass
    return parsed / len(programs)


def _acp_threshold(g: np.ndarray, p: np.ndarray) -> int | None:
    """Smallest tolerance at which the pair counts as an exact program.

    ``None`` when no tolerance helps: type columns differ, unused slots
    disagree, or a used prediction is out of range.
    """
    if g.shape != p.shape or not np.array_equal(g[:, 0], p[:, 0]):
        return None
    gp, pp = g[:, 1:], p[:, 1:]
    unused = gp == -1
    if not np.array_equal(unused, pp == -1):
        return None
    if unused.all():
        return 0
    in_range = (pp >= 0) & (pp <= ETA_MAX)
    if not in_range[~unused].all():
        return None
    diffs = np.abs(gp - pp)
    threshold = int(diffs[~unused].max(initial=0))
    plane_used = ~unused[:, 0]
    if plane_used.any() and (gp[plane_used, 0] != pp[plane_used, 0]).any():
        threshold = ETA_MAX  # the plane passes only once tolerance is maximal
    return threshold


def _ap1_thresholds(g: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, int]:
    """Histogram of per-slot minimal tolerances plus the denominator share.

    Slot events that never pass (type mismatch, out of range, unused
    disagreement, plane mismatch) are simply absent from the histogram.
    """
    hist = np.zeros(LEVELS, dtype=np.int64)
    l = min(len(g), len(p))
    den = 6 * len(g)
    if l == 0:
        return hist, den
    c1 = g[:l, 0] == p[:l, 0]
    gp, pp = g[:l, 1:], p[:l, 1:]
    unused = gp == -1
    agree_unused = unused & (pp == -1) & c1[:, None]
    hist[0] += int(agree_unused.sum())
    in_range = (pp >= 0) & (pp <= ETA_MAX)
    used_ok = ~unused & in_range & c1[:, None]
    used_ok[:, 0] &= gp[:, 0] == pp[:, 0]  # plane slot is exact at every tolerance
    diffs = np.abs(gp - pp)[used_ok]
    if diffs.size:
        hist += np.bincount(diffs, minlength=LEVELS)[:LEVELS]
    return hist, den


@dataclass
class MetricsReport:
    """Every score of the evaluation protocol for one prediction set."""

    eta: int
    n_max: int
    num_pairs: int
    per_n: dict[int, dict[str, float]]
    acp_vs_eta: dict[int, list[float]]
    ap1_vs_eta: dict[int, list[float]]
    ap1_vs_eta_by_op: dict[str, dict[str, list[float]]]
    auc: dict[str, Any]
    geometry: dict[str, float] | None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "format_version": 1,
            "eta": self.eta,
            "n_max": self.n_max,
            "num_pairs": self.num_pairs,
            "per_n": {str(n): row for n, row in self.per_n.items()},
            "acp_vs_eta": {str(n): c for n, c in self.acp_vs_eta.items()},
            "ap1_vs_eta": {str(n): c for n, c in self.ap1_vs_eta.items()},
            "ap1_vs_eta_by_op": self.ap1_vs_eta_by_op,
            "auc": self.auc,
            "geometry": self.geometry,
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "MetricsReport":
        return cls(
            eta=data["eta"],
            n_max=data["n_max"],
            num_pairs=data["num_pairs"],
            per_n={int(n): row for n, row in data["per_n"].items()},
            acp_vs_eta={int(n): c for n, c in data["acp_vs_eta"].items()},
            ap1_vs_eta={int(n): c for n, c in data["ap1_vs_eta"].items()},
            ap1_vs_eta_by_op=data["ap1_vs_eta_by_op"],
            auc=data["auc"],
            geometry=data.get("geometry"),
        )

    def to_text(self) -> str:
        names = [
            ("ACP", "acp"), ("ASOT", "asot"), ("EDSOT", "edsot"),
            ("-EDSOT", "edsot_neg"), ("AOT", "aot"), ("AP1", "ap1"),
            ("AP2", "ap2"), ("MSOT-TC", "msot_tc"), ("MSOT-CS", "msot_cs"),
        ]
        ns = sorted(self.per_n)
        lines = [
            f"CAD sequence metrics over {self.num_pairs} pairs (tolerance eta={self.eta})",
            "",
            "metric   " + "".join(f"{f'n={n}':>9}" for n in ns),
        ]
        for label, key in names:
            row = "".join(f"{self.per_n[n][key]:>9.4f}" for n in ns)
            lines.append(f"{label:<9}{row}")
        lines.append("")
        lines.append(f"AP1 AUC over tolerance sweep (n={self.n_max}): "
                     f"{self.auc['ap1_overall']:.4f}")
        for op, params in self.auc["ap1_by_op"].items():
            body = ", ".join(f"{p} {v:.4f}" for p, v in params.items())
            lines.append(f"  {op}: {body}")
        if self.geometry is not None:
            g = self.geometry
            lines.append("")
            lines.append(
                f"geometry: parsing rate {g['parsing_rate']:.4f}, "
                f"IoU {g['iou_mean']:.4f} +/- {g['iou_std']:.4f}, "
                f"MSE {g['mse_mean']:.6f} +/- {g['mse_std']:.6f} "
                f"({g['num_parsed']:.0f} of {g['num_pairs']:.0f} predictions parsed)"
            )
        return "\n".join(lines) + "\n"


def _geometry_metrics(pairs: Sequence[PredictionPair], resolution: int,
                      image_size: tuple[int, int], camera: Camera) -> dict[str, float]:
    ious: list[float] = []
    mses: list[float] = []
    parsed = 0
    gt_failures = 0
    for pair in pairs:
        pred_scene: SolidScene | None = None
        try:
            pred_scene = evaluate_program(devectorize(pair.pred), resolution)
            parsed += 1
        except CadseqError:
            pass
        try:
            gt_scene = evaluate_program(devectorize(pair.gt), resolution)
        except CadseqError:
            gt_failures += 1
            continue
        if pred_scene is None:
            continue
        ious.append(voxel_iou(gt_scene.union_grid(), pred_scene.union_grid()))
        mses.append(
            image_mse(
                render(gt_scene, camera, image_size),
                render(pred_scene, camera, image_size),
            )
        )
    return {
        "parsing_rate": parsed / len(pairs),
        "num_pairs": float(len(pairs)),
        "num_parsed": float(parsed),
        "gt_failures": float(gt_failures),
        "iou_mean": float(np.mean(ious)) if ious else 0.0,
        "iou_std": float(np.std(ious)) if ious else 0.0,
        "mse_mean": float(np.mean(mses)) if mses else 0.0,
        "mse_std": float(np.std(mses)) if mses else 0.0,
    }


def report(pairs: Sequence[PredictionPair], *, eta: int = DEFAULT_ETA,
           n_max: int = DEFAULT_PREFIX_MAX, resolution: int = 64,
           image_size: tuple[int, int] = (128, 128),
           camera: Camera | None = None,
           include_geometry: bool = True) -> MetricsReport:
    """Compute every metric of the evaluation protocol.

    Sequence metrics are tabulated for each prefix length at the default
    tolerance, with full 0..255 tolerance sweeps for the program and
    parameter accuracies (the latter also per parameter per operation
    type), and normalized areas under the parameter-accuracy curves.
    Edit distance is additionally reported negated for plotting.  When
    geometry is included, predictions that parse are compared by voxel
    IoU and rendered-image MSE against their ground truth.
    """
    _require_pairs(pairs)
    Tolerance(eta)
    per_n: dict[int, dict[str, float]] = {}
    acp_vs_eta: dict[int, list[float]] = {}
    ap1_vs_eta: dict[int, list[float]] = {}
    for n in range(1, n_max + 1):
        tc, cs = msot(pairs, n)
        ed = edsot(pairs, n)
        per_n[n] = {
            "acp": acp(pairs, n, eta),
            "asot": asot(pairs, n),
            "edsot": ed,
            "edsot_neg": -ed,
            "aot": aot(pairs, n),
            "ap1": ap1(pairs, n, eta),
            "ap2": ap2(pairs, n, eta),
            "msot_tc": tc,
            "msot_cs": cs,
        }
        # Exact tolerance sweeps via per-pair minimal-threshold histograms.
        acp_hist = np.zeros(LEVELS, dtype=np.int64)
        ap1_hist = np.zeros(LEVELS, dtype=np.int64)
        ap1_den = 0
        for pair in pairs:
            g = _prefix(pair.gt, n)
            p = _prefix(pair.pred, n)
            threshold = _acp_threshold(g, p)
            if threshold is not None:
                acp_hist[threshold] += 1
            hist, den = _ap1_thresholds(g, p)
            ap1_hist += hist
            ap1_den += den
        acp_vs_eta[n] = (np.cumsum(acp_hist) / len(pairs)).tolist()
        ap1_vs_eta[n] = (np.cumsum(ap1_hist) / ap1_den).tolist()

    by_op: dict[str, dict[str, list[float]]] = {}
    auc_by_op: dict[str, dict[str, float]] = {}
    for op_name, slots in OP_PARAM_SLOTS.items():
        code = _OP_CODES[op_name]
        by_op[op_name] = {}
        auc_by_op[op_name] = {}
        for param_name, column in slots:
            hist = np.zeros(LEVELS, dtype=np.int64)
            den = 0
            for pair in pairs:
                g = _prefix(pair.gt, n_max)
                p = _prefix(pair.pred, n_max)
                rows = np.nonzero(g[:, 0] == code)[0]
                den += rows.size
                l = min(len(g), len(p))
                for j in rows:
                    if j >= l or p[j, 0] != code:
                        continue
                    gv = int(g[j, column])
                    pv = int(p[j, column])
                    if 0 <= pv <= ETA_MAX and gv != -1:
                        hist[abs(gv - pv)] += 1
                    elif gv == -1 and pv == -1:
                        hist[0] += 1
            curve = (np.cumsum(hist) / den).tolist() if den else [0.0] * LEVELS
            by_op[op_name][param_name] = curve
            auc_by_op[op_name][param_name] = auc_ap1(curve)

    auc = {
        "ap1_overall": auc_ap1(ap1_vs_eta[n_max]),
        "ap1_by_op": auc_by_op,
    }
    geometry = None
    if include_geometry:
        geometry = _geometry_metrics(pairs, resolution, image_size, camera or Camera())
    return MetricsReport(
        eta=eta,
        n_max=n_max,
        num_pairs=len(pairs),
        per_n=per_n,
        acp_vs_eta=acp_vs_eta,
        ap1_vs_eta=ap1_vs_eta,
        ap1_vs_eta_by_op=by_op,
        auc=auc,
        geometry=geometry,
    )
