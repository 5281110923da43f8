"""Pieces shared by the bat and swarm optimizers."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from ..geometry import ArrayConfig, ArrayGeometry, build_geometry
from ..pattern import BROADSIDE, DirectionGrid, Steering, psll, sample_pattern

Objective = Callable[[ArrayGeometry], float]

# optimization grid is coarser than the reporting grid
FIT_SAMPLES_PER_BEAMWIDTH = 4.0


def fitness(
    design: np.ndarray,
    config: ArrayConfig,
    steering: Steering = BROADSIDE,
    grid: Optional[DirectionGrid] = None,
    mask_radius: Optional[float] = None,
) -> float:
    """Linear peak-sidelobe ratio of a (feasible) design; lower is better."""
    geometry = build_geometry(config, design)
    return geometry_fitness(geometry, steering, grid, mask_radius)


def geometry_fitness(
    geometry: ArrayGeometry,
    steering: Steering = BROADSIDE,
    grid: Optional[DirectionGrid] = None,
    mask_radius: Optional[float] = None,
) -> float:
    return psll(sample_pattern(geometry, steering, grid, mask_radius)).ratio


def fitness_grid(config: ArrayConfig) -> DirectionGrid:
    return DirectionGrid.for_aperture(config.aperture, FIT_SAMPLES_PER_BEAMWIDTH)


def make_objective(
    config: ArrayConfig,
    steering: Steering = BROADSIDE,
    grid: Optional[DirectionGrid] = None,
    mask_radius: Optional[float] = None,
) -> Objective:
    grid = fitness_grid(config) if grid is None else grid

    def objective(geometry: ArrayGeometry) -> float:
        return geometry_fitness(geometry, steering, grid, mask_radius)

    return objective


def to_db(ratio: float) -> float:
    return 20.0 * math.log10(ratio) if ratio > 0 else -math.inf


@dataclass
class RunTrace:
    """Per-iteration best-so-far record of one optimizer run."""

    best_fitness: List[float] = field(default_factory=list)
    evaluations: List[int] = field(default_factory=list)
    elapsed: List[float] = field(default_factory=list)

    @property
    def best_psll_db(self) -> List[float]:
        return [to_db(f) for f in self.best_fitness]

    def record(self, best: float, evaluations: int, elapsed: float) -> None:
        self.best_fitness.append(float(best))
        self.evaluations.append(int(evaluations))
        self.elapsed.append(float(elapsed))

    def __len__(self) -> int:
        return len(self.best_fitness)

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iteration", "best_fitness_linear", "best_psll_db", "evaluations", "elapsed_seconds"])
            for i, (f, db, n, t) in enumerate(zip(self.best_fitness, self.best_psll_db, self.evaluations, self.elapsed), 1):
                writer.writerow([i, f"{f:.12g}", f"{db:.12g}", n, f"{t:.6f}"])


class Evaluator:
    """Evaluates batches of geometries, optionally on a thread pool.

    Results are returned in input order, so the worker count never changes
    what an optimizer sees.
    """

    def __init__(self, objective: Objective, threads: int = 1) -> None:
        self.objective = objective
        self.threads = max(1, int(threads))
        self.count = 0
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        self._start = time.perf_counter()

    def __call__(self, geometries: Sequence[ArrayGeometry]) -> np.ndarray:
        self.count += len(geometries)
        if self._pool is None:
            return np.array([self.objective(g) for g in geometries], dtype=float)
        return np.array(list(self._pool.map(self.objective, geometries)), dtype=float)

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self._start

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()

    def __enter__(self) -> "Evaluator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def agent_streams(seed: Union[int, np.random.SeedSequence], count: int) -> List[np.random.Generator]:
    """One independent generator per agent, split from the master seed."""
    if isinstance(seed, np.random.SeedSequence):
        # fresh copy: spawning advances the original's child counter
        ss = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    else:
        ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(count)]
