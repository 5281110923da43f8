"""Synthesis and analysis of subarray-level aperiodic planar arrays."""

from .geometry import (
    ArrayConfig,
    ArrayGeometry,
    RepairFailed,
    StructureKind,
    build_geometry,
    check_constraints,
    flatten_positions,
    random_geometry,
    repair,
    scale_division,
)
from .pattern import (
    BROADSIDE,
    DirectionGrid,
    EmptySidelobeRegion,
    PatternGrid,
    Steering,
    af_direct,
    af_factored,
    frequency_sweep,
    psll,
    sample_pattern,
    scan_sweep,
)
from .redundancy import RedundancyReport, count_baselines, redundancy_of

__version__ = "0.1.0"
