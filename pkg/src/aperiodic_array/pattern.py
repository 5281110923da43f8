"""Array factor evaluation and peak sidelobe extraction in u-v space.

All elements are isotropic with unit excitation. Positions are in design
wavelengths, so the wavenumber is ``2*pi*f/f_design``. Steering to
``(u0, v0)`` is a shift of the pattern in u-v space.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import ArrayGeometry, flatten_positions

# lattice grids are evaluated in blocks of rows to bound memory
_ROW_BLOCK = 256


class EmptySidelobeRegion(ValueError):
    """The main-lobe mask covers every sample of the grid."""


@dataclass(frozen=True)
class Steering:
    """Main-beam direction; angles in radians."""

    theta0: float = 0.0
    phi0: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.theta0 <= math.pi / 2 + 1e-15):
            raise ValueError("theta0 must lie in [0, pi/2]")

    @classmethod
    def from_degrees(cls, theta0: float, phi0: float = 0.0) -> "Steering":
        return cls(math.radians(theta0), math.radians(phi0))

    @property
    def u0(self) -> float:
        return math.sin(self.theta0) * math.cos(self.phi0)

    @property
    def v0(self) -> float:
        return math.sin(self.theta0) * math.sin(self.phi0)

    @property
    def theta_deg(self) -> float:
        return math.degrees(self.theta0)

    @property
    def phi_deg(self) -> float:
        return math.degrees(self.phi0)


BROADSIDE = Steering()


@dataclass(frozen=True)
class DirectionGrid:
    """Sample directions inside the closed unit disk.

    Lattice grids keep their 1-D ``axis`` (multiples of ``resolution``) so the
    pattern can be computed as a separable matrix product; ``inside`` is the
    flattened unit-disk mask over the square ``axis x axis`` lattice, with u
    varying fastest.
    """

    resolution: float
    u: np.ndarray
    v: np.ndarray
    axis: Optional[np.ndarray] = None
    inside: Optional[np.ndarray] = None

    @classmethod
    def lattice(cls, resolution: float) -> "DirectionGrid":
        if not resolution > 0:
            raise ValueError("grid resolution must be > 0")
        n = int(math.floor(1.0 / resolution + 1e-9))
        axis = np.arange(-n, n + 1) * resolution
        uu, vv = np.meshgrid(axis, axis)
        inside = (uu**2 + vv**2 <= 1.0 + 1e-12).ravel()
        return cls(resolution, uu.ravel()[inside], vv.ravel()[inside], axis, inside)

    @classmethod
    def from_points(cls, points: Sequence[Tuple[float, float]], resolution: float = 1.0) -> "DirectionGrid":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("grid must contain at least one direction")
        if np.any(pts[:, 0] ** 2 + pts[:, 1] ** 2 > 1.0 + 1e-12):
            raise ValueError("grid directions must lie inside the unit disk")
        return cls(resolution, pts[:, 0].copy(), pts[:, 1].copy())

    @classmethod
    def for_aperture(cls, aperture: float, samples_per_beamwidth: float = 8.0) -> "DirectionGrid":
        """Lattice with pitch ``1 / (samples_per_beamwidth * aperture)``."""
        return cls.lattice(1.0 / (samples_per_beamwidth * aperture))

    def __len__(self) -> int:
        return len(self.u)


# between the first null (1/L_a) and the first axis sidelobe (~1.43/L_a)
MASK_FACTOR = 1.25


def default_mask_radius(aperture: float) -> float:
    """Main-lobe exclusion radius ``MASK_FACTOR / L_a`` in u-v units (apertures in wavelengths)."""
    return MASK_FACTOR / aperture


def _phase(coords: np.ndarray, deltas: np.ndarray, k: float) -> np.ndarray:
    return np.exp(1j * k * np.multiply.outer(deltas, coords))


def array_factor(
    positions: np.ndarray,
    u: Union[float, np.ndarray],
    v: Union[float, np.ndarray],
    steering: Steering = BROADSIDE,
    scale: float = 1.0,
) -> np.ndarray:
    """Direct element-by-element sum at arbitrary directions.

    ``scale`` is the frequency ratio ``f / f_design``.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    k = 2.0 * math.pi * scale
    du = (u - steering.u0).ravel()
    dv = (v - steering.v0).ravel()
    out = np.empty(du.shape, dtype=complex)
    for start in range(0, len(du), 4096):
        sl = slice(start, start + 4096)
        arg = np.multiply.outer(du[sl], positions[:, 0]) + np.multiply.outer(dv[sl], positions[:, 1])
        out[sl] = np.exp(1j * k * arg).sum(axis=1)
    return out.reshape(u.shape) if u.shape else out[0]


def af_direct(
    geometry: ArrayGeometry,
    steering: Steering,
    u: Union[float, np.ndarray],
    v: Union[float, np.ndarray],
    scale: float = 1.0,
) -> np.ndarray:
    return array_factor(flatten_positions(geometry), u, v, steering, scale)


def af_factored(
    geometry: ArrayGeometry,
    steering: Steering,
    u: Union[float, np.ndarray],
    v: Union[float, np.ndarray],
    scale: float = 1.0,
) -> np.ndarray:
    """Subarray position factor times the shared subarray factor."""
    ps = array_factor(geometry.subarray_positions, u, v, steering, scale)
    s = array_factor(geometry.element_positions, u, v, steering, scale)
    return ps * s


def _lattice_magnitudes(factors: Sequence[np.ndarray], grid: DirectionGrid, steering: Steering, k: float) -> np.ndarray:
    """|prod of factors| on the square lattice as ``Ey @ Ex.T`` blocks (rows v, columns u)."""
    n = len(grid.axis)
    inside = grid.inside.reshape(n, n)
    exs = [_phase(p[:, 0], grid.axis - steering.u0, k) for p in factors]
    eys = [_phase(p[:, 1], grid.axis - steering.v0, k) for p in factors]
    out = []
    for start in range(0, n, _ROW_BLOCK):
        rows = slice(start, min(start + _ROW_BLOCK, n))
        block = np.ones((rows.stop - rows.start, n), dtype=complex)
        for ex, ey in zip(exs, eys):
            block *= ey[rows] @ ex.T
        out.append(np.abs(block)[inside[rows]])
    return np.concatenate(out)


@dataclass(frozen=True)
class PatternGrid:
    """Sampled |AF| with the data needed to locate and refine the sidelobe peak."""

    grid: DirectionGrid
    steering: Steering
    magnitudes: np.ndarray
    main_peak: float
    mask_radius: float
    positions: np.ndarray
    scale: float = 1.0

    @property
    def u(self) -> np.ndarray:
        return self.grid.u

    @property
    def v(self) -> np.ndarray:
        return self.grid.v

    @property
    def sidelobe_mask(self) -> np.ndarray:
        return _outside_mask(self.u, self.v, self.steering, self.mask_radius)

    def db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(self.magnitudes / self.main_peak)


def _outside_mask(u, v, steering: Steering, radius: float) -> np.ndarray:
    return (u - steering.u0) ** 2 + (v - steering.v0) ** 2 > radius**2


def sample_positions(
    positions: np.ndarray,
    steering: Steering,
    grid: DirectionGrid,
    mask_radius: float,
    scale: float = 1.0,
    factors: Optional[Sequence[np.ndarray]] = None,
) -> PatternGrid:
    """Sample |AF| of explicit element positions over ``grid``.

    ``factors`` optionally gives position sets whose array factors multiply to
    the full one (subarray positions and element positions); this is exact for
    layouts where every subarray is identical and much cheaper.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(grid) == 0:
        raise ValueError("grid must be non-empty")
    k = 2.0 * math.pi * scale
    parts = list(factors) if factors is not None else [positions]
    if grid.axis is not None:
        mags = _lattice_magnitudes(parts, grid, steering, k)
    else:
        mags = np.ones(len(grid))
        for p in parts:
            mags = mags * array_factor(p, grid.u, grid.v, steering, scale)
        mags = np.abs(mags)

    main = float(abs(array_factor(positions, steering.u0, steering.v0, steering, scale)))
    on_grid = np.any((grid.u == steering.u0) & (grid.v == steering.v0))
    if not on_grid:
        grid = DirectionGrid(
            grid.resolution,
            np.append(grid.u, steering.u0),
            np.append(grid.v, steering.v0),
        )
        mags = np.append(mags, main)
    return PatternGrid(grid, steering, mags, main, float(mask_radius), positions, scale)


def sample_pattern(
    geometry: ArrayGeometry,
    steering: Steering = BROADSIDE,
    grid: Optional[DirectionGrid] = None,
    mask_radius: Optional[float] = None,
    scale: float = 1.0,
) -> PatternGrid:
    """Sample the factored array factor of ``geometry``.

    Defaults follow the electrical aperture ``L_a * scale``: lattice pitch
    ``1 / (8 L_a)`` and mask radius ``MASK_FACTOR / L_a``.
    """
    aperture = geometry.config.aperture * scale
    if grid is None:
        grid = DirectionGrid.for_aperture(aperture)
    if mask_radius is None:
        mask_radius = default_mask_radius(aperture)
    return sample_positions(
        flatten_positions(geometry),
        steering,
        grid,
        mask_radius,
        scale,
        factors=(geometry.subarray_positions, geometry.element_positions),
    )


@dataclass(frozen=True)
class PsllResult:
    psll_db: float
    peak_u: float
    peak_v: float
    ratio: float

    @property
    def location(self) -> Tuple[float, float]:
        return self.peak_u, self.peak_v


def psll(pattern: PatternGrid, refine: bool = True) -> PsllResult:
    """Peak sidelobe level of ``pattern`` relative to its main peak.

    With ``refine`` the lattice argmax is polished on a 3x3 sub-lattice of
    pitch ``resolution / 4``; refinement points must stay in the visible
    region and outside the mask.
    """
    if not pattern.mask_radius > 0:
        raise ValueError("mask_radius must be > 0")
    sel = pattern.sidelobe_mask
    if not np.any(sel):
        raise EmptySidelobeRegion("main-lobe mask covers every grid sample")
    idx = np.flatnonzero(sel)
    best = idx[np.argmax(pattern.magnitudes[idx])]
    peak = float(pattern.magnitudes[best])
    pu, pv = float(pattern.u[best]), float(pattern.v[best])

    if refine:
        step = pattern.grid.resolution / 4.0
        off = np.array([-step, 0.0, step])
        ru, rv = np.meshgrid(pu + off, pv + off)
        ru, rv = ru.ravel(), rv.ravel()
        ok = (ru**2 + rv**2 <= 1.0) & _outside_mask(ru, rv, pattern.steering, pattern.mask_radius)
        if np.any(ok):
            vals = np.abs(array_factor(pattern.positions, ru[ok], rv[ok], pattern.steering, pattern.scale))
            j = int(np.argmax(vals))
            if vals[j] > peak:
                peak = float(vals[j])
                pu, pv = float(ru[ok][j]), float(rv[ok][j])

    ratio = peak / pattern.main_peak
    db = 20.0 * math.log10(ratio) if ratio > 0 else -math.inf
    return PsllResult(db, pu, pv, ratio)


def scan_sweep(
    geometry: ArrayGeometry,
    steerings: Iterable[Steering],
    grid: Optional[DirectionGrid] = None,
    mask_radius: Optional[float] = None,
) -> List[Tuple[Steering, PsllResult]]:
    return [(s, psll(sample_pattern(geometry, s, grid, mask_radius))) for s in steerings]


def frequency_sweep(
    geometry: ArrayGeometry,
    frequencies: Iterable[float],
    steering: Steering = BROADSIDE,
    grid: Optional[DirectionGrid] = None,
) -> List[Tuple[float, PsllResult]]:
    """PSLL at each frequency with the physical layout held fixed.

    With ``grid=None`` the lattice pitch and mask track the electrical aperture
    at each frequency.
    """
    out = []
    f0 = geometry.config.frequency
    for f in frequencies:
        if not f > 0:
            raise ValueError("frequencies must be > 0")
        out.append((float(f), psll(sample_pattern(geometry, steering, grid, scale=f / f0))))
    return out


def write_pattern_csv(pattern: PatternGrid, path: Union[str, Path]) -> None:
    db = pattern.db()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["u", "v", "af_linear", "af_db"])
        for u, v, m, d in zip(pattern.u, pattern.v, pattern.magnitudes, db):
            writer.writerow([f"{u:.12g}", f"{v:.12g}", f"{m:.12g}", f"{d:.12g}"])


def psll_report(pattern: PatternGrid, result: PsllResult) -> dict:
    return {
        "psll_db": round(result.psll_db, 12),
        "peak_u": round(result.peak_u, 12),
        "peak_v": round(result.peak_v, 12),
        "mask_radius": round(pattern.mask_radius, 12),
        "grid_du": round(pattern.grid.resolution, 12),
        "steering_theta_deg": round(pattern.steering.theta_deg, 12),
        "steering_phi_deg": round(pattern.steering.phi_deg, 12),
    }


def write_psll_json(pattern: PatternGrid, result: PsllResult, path: Union[str, Path], **extra) -> None:
    report = psll_report(pattern, result)
    report.update(extra)
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
