"""Subarray-level aperiodic planar array geometry.

Lengths are in wavelengths at the design frequency. The aperture occupies the
square ``[0, L_a] x [0, L_a]``; it is tiled by ``N x N`` square cells of side
``L = M*d + ds``, and each cell holds one ``M x M`` subarray inset ``ds/2``
from every side of its cell when not dislocated.

Ordering of flattened elements is frozen: subarrays row-major (row indexes y,
column indexes x), then elements row-major within a subarray.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import constants
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

MIN_SPACING = 0.5
# slack for closed-bound comparisons
_TOL = 1e-12
REPAIR_ATTEMPTS = 100


class GeometryError(ValueError):
    """Raised for malformed configs or design vectors."""


class RepairFailed(RuntimeError):
    """The attempt budget was exhausted without reaching a feasible layout."""


class StructureKind(str, enum.Enum):
    UNIFORM = "Uniform"
    DSUE = "DSUE"
    USRE = "USRE"
    DSRE = "DSRE"

    @property
    def dislocated(self) -> bool:
        return self in (StructureKind.DSUE, StructureKind.DSRE)

    @property
    def random_elements(self) -> bool:
        return self in (StructureKind.USRE, StructureKind.DSRE)

    @classmethod
    def parse(cls, value: Union[str, "StructureKind"]) -> "StructureKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if kind.value.lower() == str(value).lower():
                return kind
        raise GeometryError(f"unknown structure kind {value!r}")


@dataclass(frozen=True)
class ArrayConfig:
    """Static description of one array family member.

    Args:
        elements_per_subarray_side: M, elements along one side of a subarray.
        subarrays_per_side: N, subarrays along one side of the array.
        element_spacing: d, reference lattice pitch inside a subarray.
        dislocation_budget: ds, total dislocation span per subarray and axis.
        frequency: design frequency in Hz.
        structure_kind: which degrees of freedom are free.
    """

    elements_per_subarray_side: int
    subarrays_per_side: int
    element_spacing: float
    dislocation_budget: float
    frequency: float = 10e9
    structure_kind: StructureKind = StructureKind.DSRE

    def __post_init__(self) -> None:
        object.__setattr__(self, "structure_kind", StructureKind.parse(self.structure_kind))
        if int(self.elements_per_subarray_side) != self.elements_per_subarray_side or self.elements_per_subarray_side < 1:
            raise GeometryError("elements_per_subarray_side must be an integer >= 1")
        if int(self.subarrays_per_side) != self.subarrays_per_side or self.subarrays_per_side < 1:
            raise GeometryError("subarrays_per_side must be an integer >= 1")
        if not math.isfinite(self.element_spacing) or self.element_spacing < MIN_SPACING - _TOL:
            raise GeometryError(f"element_spacing must be >= {MIN_SPACING} wavelengths")
        if not math.isfinite(self.dislocation_budget) or self.dislocation_budget < 0:
            raise GeometryError("dislocation_budget must be >= 0")
        if not math.isfinite(self.frequency) or self.frequency <= 0:
            raise GeometryError("frequency must be > 0")

    @property
    def M(self) -> int:
        return int(self.elements_per_subarray_side)

    @property
    def N(self) -> int:
        return int(self.subarrays_per_side)

    @property
    def wavelength_m(self) -> float:
        return constants.c / self.frequency

    @property
    def subarray_size(self) -> float:
        return self.M * self.element_spacing

    @property
    def cell_size(self) -> float:
        return self.M * self.element_spacing + self.dislocation_budget

    @property
    def aperture(self) -> float:
        return self.N * (self.M * self.element_spacing + self.dislocation_budget)

    @property
    def element_count(self) -> int:
        return (self.M * self.N) ** 2

    @property
    def dislocation_bound(self) -> float:
        return self.dislocation_budget / 2.0

    @property
    def offset_bound(self) -> float:
        """Per-axis element offset limit; keeps each element in its own d x d cell."""
        return self.element_spacing / 2.0

    @property
    def max_subarray_span(self) -> float:
        """Upper limit on the distance between two elements of one subarray.

        The nominal limit is ``2 * sqrt(L_a)``. It is never allowed to be
        tighter than the diagonal of the unperturbed reference lattice, so the
        zero-offset layout always stays feasible.
        """
        nominal = 2.0 * math.sqrt(self.aperture)
        lattice_diagonal = math.sqrt(2.0) * (self.M - 1) * self.element_spacing
        return max(nominal, lattice_diagonal)

    @property
    def design_length(self) -> int:
        n = 0
        if self.structure_kind.dislocated:
            n += 2 * self.N**2
        if self.structure_kind.random_elements:
            n += 2 * self.M**2
        return n

    def with_kind(self, kind: Union[str, StructureKind]) -> "ArrayConfig":
        return ArrayConfig(
            self.M, self.N, self.element_spacing, self.dislocation_budget,
            self.frequency, StructureKind.parse(kind),
        )

    def design_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-coordinate lower and upper bounds of the design vector."""
        parts = []
        if self.structure_kind.dislocated:
            parts.append(np.full(2 * self.N**2, self.dislocation_bound))
        if self.structure_kind.random_elements:
            parts.append(np.full(2 * self.M**2, self.offset_bound))
        hi = np.concatenate(parts) if parts else np.zeros(0)
        return -hi, hi


def scale_division(aperture: float, division: Tuple[int, int], k_ratio: float) -> Tuple[float, float]:
    """Element pitch and dislocation budget for a division of a fixed aperture.

    Returns ``(d, ds)`` with ``ds / d == k_ratio`` and ``N * (M*d + ds) == aperture``.
    """
    M, N = division
    if aperture <= 0 or not math.isfinite(aperture):
        raise GeometryError("aperture must be > 0")
    if k_ratio < 0 or not math.isfinite(k_ratio):
        raise GeometryError("k_ratio must be >= 0")
    if M < 1 or N < 1:
        raise GeometryError("division counts must be >= 1")
    d = aperture / (N * (M + k_ratio))
    return d, k_ratio * d


def _lattice(count: int, pitch: float) -> np.ndarray:
    idx = np.arange(count, dtype=float)
    row, col = np.divmod(np.arange(count * count), count)
    return np.column_stack([idx[col] * pitch, idx[row] * pitch])


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """A concrete realization of an :class:`ArrayConfig`.

    ``grid_centers`` and ``dislocations`` have shape ``(N*N, 2)``;
    ``element_reference`` and ``element_offsets`` have shape ``(M*M, 2)`` and are
    relative to the subarray center. Every subarray shares the same offsets.
    """

    config: ArrayConfig
    grid_centers: np.ndarray
    dislocations: np.ndarray
    element_reference: np.ndarray
    element_offsets: np.ndarray

    def __post_init__(self) -> None:
        for name in ("grid_centers", "dislocations", "element_reference", "element_offsets"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def subarray_positions(self) -> np.ndarray:
        return self.grid_centers + self.dislocations

    @property
    def element_positions(self) -> np.ndarray:
        """Element positions relative to their subarray center."""
        return self.element_reference + self.element_offsets

    def flatten(self) -> np.ndarray:
        return flatten_positions(self)

    def encode(self) -> np.ndarray:
        return encode_design(self)

    def replace(self, dislocations=None, element_offsets=None) -> "ArrayGeometry":
        return ArrayGeometry(
            self.config,
            self.grid_centers,
            self.dislocations if dislocations is None else dislocations,
            self.element_reference,
            self.element_offsets if element_offsets is None else element_offsets,
        )


def build_geometry(config: ArrayConfig, design: Optional[np.ndarray] = None) -> ArrayGeometry:
    """Decode a design vector into a geometry.

    The vector holds ``2*N^2`` dislocation coordinates (dislocated kinds)
    followed by ``2*M^2`` element-offset coordinates (random-element kinds),
    each as interleaved ``(x, y)`` pairs. ``None`` means the all-zero design.
    """
    M, N = config.M, config.N
    kind = config.structure_kind
    if design is None:
        design = np.zeros(config.design_length)
    design = np.asarray(design, dtype=float).ravel()
    if design.size != config.design_length:
        raise GeometryError(
            f"design vector has length {design.size}, {kind.value} with M={M}, N={N} needs {config.design_length}"
        )
    if not np.all(np.isfinite(design)):
        raise GeometryError("design vector contains non-finite coordinates")

    cell = config.cell_size
    grid_centers = _lattice(N, cell) + cell / 2.0
    element_reference = _lattice(M, config.element_spacing) - (M - 1) * config.element_spacing / 2.0

    pos = 0
    dislocations = np.zeros((N * N, 2))
    offsets = np.zeros((M * M, 2))
    if kind.dislocated:
        dislocations = design[: 2 * N * N].reshape(N * N, 2)
        pos = 2 * N * N
    if kind.random_elements:
        offsets = design[pos : pos + 2 * M * M].reshape(M * M, 2)
    return ArrayGeometry(config, grid_centers, dislocations, element_reference, offsets)


def encode_design(geometry: ArrayGeometry) -> np.ndarray:
    kind = geometry.config.structure_kind
    parts = []
    if kind.dislocated:
        parts.append(geometry.dislocations.ravel())
    if kind.random_elements:
        parts.append(geometry.element_offsets.ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def flatten_positions(geometry: ArrayGeometry) -> np.ndarray:
    """Absolute element positions, shape ``((M*N)^2, 2)``, subarray-major."""
    sub = geometry.subarray_positions
    elem = geometry.element_positions
    return (sub[:, None, :] + elem[None, :, :]).reshape(-1, 2)


def element_labels(geometry: ArrayGeometry) -> np.ndarray:
    """``(subarray_row, subarray_col)`` for each flattened element."""
    M, N = geometry.config.M, geometry.config.N
    sub = np.repeat(np.arange(N * N), M * M)
    return np.column_stack(np.divmod(sub, N))


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    elements: Tuple[int, ...] = ()


@dataclass(frozen=True)
class ConstraintReport:
    feasible: bool
    min_spacing: float
    max_subarray_span: float
    violations: List[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.feasible


def _spacing_pairs(positions: np.ndarray) -> np.ndarray:
    if len(positions) < 2:
        return np.zeros((0, 2), dtype=int)
    tree = cKDTree(positions)
    return tree.query_pairs(MIN_SPACING - _TOL, output_type="ndarray")


def _min_spacing(positions: np.ndarray) -> float:
    if len(positions) < 2:
        return math.inf
    dist, _ = cKDTree(positions).query(positions, k=2)
    return float(dist[:, 1].min())


def _span_pairs(elements: np.ndarray, limit: float) -> np.ndarray:
    if len(elements) < 2:
        return np.zeros((0, 2), dtype=int)
    dist = pdist(elements)
    i, j = np.triu_indices(len(elements), k=1)
    bad = dist > limit + _TOL
    return np.column_stack([i[bad], j[bad]])


def check_constraints(geometry: ArrayGeometry) -> ConstraintReport:
    """Evaluate every placement constraint; infeasibility is reported, not raised."""
    cfg = geometry.config
    positions = flatten_positions(geometry)
    mm = cfg.M * cfg.M
    violations: List[Violation] = []

    for a, b in _spacing_pairs(positions):
        violations.append(
            Violation(
                "min_spacing",
                f"elements {a} and {b} closer than {MIN_SPACING} wavelengths",
                (int(a), int(b)),
            )
        )

    elements = geometry.element_positions
    span = float(pdist(elements).max()) if mm > 1 else 0.0
    for a, b in _span_pairs(elements, cfg.max_subarray_span):
        violations.append(
            Violation(
                "max_span",
                f"subarray elements {a} and {b} farther apart than {cfg.max_subarray_span:.6g}",
                (int(a), int(b)),
            )
        )

    bound = cfg.dislocation_bound
    for idx in np.flatnonzero(np.any(np.abs(geometry.dislocations) > bound + _TOL, axis=1)):
        violations.append(Violation("dislocation", f"subarray {idx} dislocated beyond +/-{bound:.6g}", (int(idx),)))

    obound = cfg.offset_bound
    for idx in np.flatnonzero(np.any(np.abs(geometry.element_offsets) > obound + _TOL, axis=1)):
        violations.append(Violation("offset", f"element offset {idx} beyond +/-{obound:.6g}", (int(idx),)))

    outside = np.any((positions < -_TOL) | (positions > cfg.aperture + _TOL), axis=1)
    for idx in np.flatnonzero(outside):
        violations.append(Violation("aperture", f"element {idx} outside the {cfg.aperture:.6g} aperture", (int(idx),)))

    return ConstraintReport(not violations, _min_spacing(positions), span, violations)


def _offending_offsets(geometry: ArrayGeometry) -> set:
    """Within-subarray element indices implicated in spacing or span violations."""
    mm = geometry.config.M ** 2
    bad = set()
    for a, b in _spacing_pairs(flatten_positions(geometry)):
        bad.add(int(max(a % mm, b % mm)))
    for a, b in _span_pairs(geometry.element_positions, geometry.config.max_subarray_span):
        bad.add(int(max(a, b)))
    return bad


def _is_feasible(geometry: ArrayGeometry) -> bool:
    return not _offending_offsets(geometry)


def repair(geometry: ArrayGeometry, rng: np.random.Generator) -> ArrayGeometry:
    """Return a feasible geometry, leaving already-feasible coordinates alone.

    Dislocations and offsets are clamped into their bounds. Offsets involved in
    spacing violations are redrawn uniformly within their cell, up to
    ``REPAIR_ATTEMPTS`` rounds; after that they fall back to zero.
    """
    cfg = geometry.config
    kind = cfg.structure_kind
    disl = np.clip(geometry.dislocations, -cfg.dislocation_bound, cfg.dislocation_bound)
    offs = np.clip(geometry.element_offsets, -cfg.offset_bound, cfg.offset_bound)
    if not kind.dislocated:
        disl = np.zeros_like(disl)
    if not kind.random_elements:
        offs = np.zeros_like(offs)
    offs = np.array(offs)
    current = geometry.replace(dislocations=disl, element_offsets=offs)

    bad = _offending_offsets(current)
    if not bad:
        if check_constraints(current).feasible:
            return current
        raise RepairFailed("geometry violates constraints that repair cannot address")

    if kind.random_elements:
        for _ in range(REPAIR_ATTEMPTS):
            idx = sorted(bad)
            offs[idx] = rng.uniform(-cfg.offset_bound, cfg.offset_bound, size=(len(idx), 2))
            current = geometry.replace(dislocations=disl, element_offsets=offs)
            bad = _offending_offsets(current)
            if not bad:
                return current
        offs[sorted(bad)] = 0.0
        current = geometry.replace(dislocations=disl, element_offsets=offs)
        if _is_feasible(current):
            return current

    current = geometry.replace(dislocations=disl, element_offsets=np.zeros_like(offs))
    if check_constraints(current).feasible:
        return current
    raise RepairFailed(
        f"no feasible layout for M={cfg.M}, N={cfg.N}, d={cfg.element_spacing}, ds={cfg.dislocation_budget}"
    )


def random_design(config: ArrayConfig, rng: np.random.Generator) -> np.ndarray:
    lo, hi = config.design_bounds()
    return rng.uniform(lo, hi)


def random_geometry(config: ArrayConfig, rng: np.random.Generator) -> ArrayGeometry:
    """Uniform draw within the design bounds followed by :func:`repair`."""
    return repair(build_geometry(config, random_design(config, rng)), rng)


GEOMETRY_HEADER = ["index", "subarray_row", "subarray_col", "x_wavelengths", "y_wavelengths"]


def write_geometry_csv(geometry: ArrayGeometry, path: Union[str, Path]) -> None:
    positions = flatten_positions(geometry)
    labels = element_labels(geometry)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GEOMETRY_HEADER)
        for i, ((row, col), (x, y)) in enumerate(zip(labels, positions)):
            writer.writerow([i, int(row), int(col), f"{x:.12g}", f"{y:.12g}"])


def read_geometry_csv(path: Union[str, Path]) -> np.ndarray:
    """Load flattened positions from a geometry CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != GEOMETRY_HEADER:
            raise GeometryError(f"{path}: unexpected header {reader.fieldnames}")
        rows = [(float(r["x_wavelengths"]), float(r["y_wavelengths"])) for r in reader]
    return np.array(rows, dtype=float).reshape(-1, 2)
