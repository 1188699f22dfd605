"""Sketch-and-extrude CAD program toolkit.

Represents parametric CAD construction sequences as small programs,
evaluates them into voxelized solids and rendered images, synthesizes
paired (image, feature-matrix) datasets, and scores predicted programs
with a multi-level metric framework.
"""

__version__ = "0.1.0"

from .dsl import (  # noqa: F401
    CadOp,
    CadProgram,
    OpType,
    ValidationReport,
    emit_gallery_script,
    emit_sim_gallery,
    parse_program,
    validate_grammar,
)
from .errors import CadseqError  # noqa: F401
from .geometry import (  # noqa: F401
    Profile,
    SketchPlane,
    SolidScene,
    VoxelGrid,
    build_profiles,
    evaluate_program,
    extrude,
    point_in_profile,
    voxel_iou,
)
from .metrics import (  # noqa: F401
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
    edsot,
    msot,
    parsing_rate,
    report,
)
from .rendering import Camera, Image, image_mse, read_pgm, render, write_pgm  # noqa: F401
from .synth import (  # noqa: F401
    DatasetManifest,
    RuleSet,
    TemplateSequence,
    all_templates,
    instantiate_template,
    synthesize_dataset,
)
from .vector import (  # noqa: F401
    FeatureMatrix,
    OpVector,
    QuantRange,
    arc_center,
    chain_points,
    dequantize_value,
    devectorize,
    quantize_value,
    vectorize,
)
