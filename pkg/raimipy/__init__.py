import importlib.metadata

__version__ = importlib.metadata.version("raimipy")

from .consts import DEFAULT_CACHE_DIR, DEFAULT_GRID, DEFAULT_Z
from .types import (
    IN_N,
    Angle,
    BallVec,
    CylinderSpec,
    OmegaVec,
    Outcome,
    PowerSpec,
    RhoX,
    SphereSpec,
)
from .geometry import on_surface, phi, phi_inverse, rotate
from .cover_lang import CoverSpec, indicator, parse, to_text, validate_cover
from .measures import (
    MeasureEstimate,
    RngStream,
    disintegration_check,
    estimate_measure,
    estimate_rotated_intersection,
    sample_fiber,
    sample_surface,
)
from .circle_partition import (
    Custom,
    DigitBlocks,
    Intervals,
    PartitionHandle,
    classify,
    classify_surface,
    make_partition,
    partition_masses,
)
from .harness import (
    SearchConfig,
    build_slice_table,
    index_function,
    rotation_search,
    run_pipeline,
)
from .config import load_config
