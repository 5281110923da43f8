"""Baseline redundancy of planar element layouts."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .geometry import ArrayGeometry, flatten_positions

DEFAULT_RESOLUTION = 0.05


class TooFewElements(ValueError):
    pass


@dataclass(frozen=True)
class RedundancyReport:
    elements: int
    s_id: int
    s_re: int
    ratio: float
    resolution: float

    def to_dict(self) -> dict:
        return {
            "elements": self.elements,
            "s_id": self.s_id,
            "s_re": self.s_re,
            "ratio": round(self.ratio, 12),
            "resolution_wavelengths": self.resolution,
        }

    def write_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def count_baselines(positions: np.ndarray, resolution: float = DEFAULT_RESOLUTION) -> RedundancyReport:
    """Count distinct ordered-pair baselines after snapping to a ``resolution`` lattice.

    ``S_id = P(P-1)`` ordered pairs; ``S_re`` is the number of distinct
    quantized difference vectors over those pairs.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    p = len(pos)
    if p < 2:
        raise TooFewElements("at least two elements are needed to form a baseline")
    if not resolution > 0:
        raise ValueError("resolution must be > 0")
    # quantize each component of the difference, not the positions
    diff = pos[:, None, :] - pos[None, :, :]
    keys = np.rint(diff / resolution).astype(np.int64)
    off = ~np.eye(p, dtype=bool)
    kx, ky = keys[..., 0][off], keys[..., 1][off]
    span = int(max(np.abs(kx).max(), np.abs(ky).max())) if len(kx) else 0
    base = 2 * span + 1
    flat = (kx + span) * base + (ky + span)
    s_re = int(np.unique(flat).size)
    s_id = p * (p - 1)
    return RedundancyReport(p, s_id, s_re, s_id / s_re, float(resolution))


def redundancy_of(geometry: ArrayGeometry, resolution: float = DEFAULT_RESOLUTION) -> RedundancyReport:
    return count_baselines(flatten_positions(geometry), resolution)
