from __future__ import annotations

import numpy as np
import pytest

from cadseq.dsl import CadOp, CadProgram, parse_program
from cadseq.vector import FeatureMatrix

CYLINDER_TEXT = 'add_sketch("XY")\nadd_circle(0.000000, 0.000000, 0.500000)\nadd_extrude(0, 1.000000)\n'

TRIPRISM_TEXT = (
    'add_sketch("XY")\n'
    "add_line(0.800000, 0.000000)\n"
    "add_line(0.000000, 0.800000)\n"
    "add_line(0.000000, 0.000000)\n"
    "add_extrude(0, 1.000000)\n"
)


@pytest.fixture
def cylinder_program() -> CadProgram:
    return parse_program(CYLINDER_TEXT)


@pytest.fixture
def triprism_program() -> CadProgram:
    return parse_program(TRIPRISM_TEXT)


def make_matrix(rows: list[list[int]]) -> FeatureMatrix:
    """Pad explicit rows with end marks into a full feature matrix."""
    eop = [6, -1, -1, -1, -1, -1, -1]
    padded = [list(r) for r in rows]
    while len(padded) < 10:
        padded.append(list(eop))
    return FeatureMatrix(np.array(padded, dtype=np.int16))


def perturb_matrix(matrix: FeatureMatrix, rng: np.random.Generator) -> FeatureMatrix:
    """A pattern-valid random prediction derived from a ground-truth matrix.

    Rows keep the used/unused slot layout of their (possibly re-typed)
    operation, so the result looks like the output of a well-behaved
    predictor: wrong, but structurally sound.
    """
    data = matrix.data.copy()
    length = matrix.sequence_length()
    if rng.random() < 0.1 and length > 2:
        # truncate: an early end mark followed by end-mark padding
        cut = int(rng.integers(1, length - 1))
        data[cut:] = np.array([6, -1, -1, -1, -1, -1, -1], dtype=np.int16)
        return FeatureMatrix(data)
    for i in range(1, length):
        t = int(data[i, 0])
        if t == 6:
            break
        if t in (1, 2, 3) and rng.random() < 0.25:
            new_t = int(rng.choice([c for c in (1, 2, 3) if c != t]))
            row = np.full(7, -1, dtype=np.int16)
            row[0] = new_t
            row[2] = rng.integers(0, 256)  # x
            row[3] = rng.integers(0, 256)  # y
            if new_t == 2:
                row[4] = rng.integers(0, 256)  # sweep
            if new_t == 3:
                row[5] = rng.integers(0, 256)  # radius
            data[i] = row
            continue
        for k in range(1, 7):
            if data[i, k] == -1 or rng.random() < 0.4:
                continue
            if k == 1:  # plane slot stays in its discrete domain
                data[i, k] = rng.integers(0, 3)
            else:
                jitter = int(rng.integers(-12, 13))
                data[i, k] = int(np.clip(int(data[i, k]) + jitter, 0, 255))
    return FeatureMatrix(data)
