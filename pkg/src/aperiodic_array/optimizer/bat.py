"""Improved bat algorithm with Doppler-compensated frequencies.

Each bat carries its own random stream. Within an iteration all candidates are
generated first, evaluated as one batch, then accepted in bat order, which
keeps runs identical for any evaluation thread count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..geometry import ArrayConfig, ArrayGeometry, build_geometry, random_design, repair
from ..pattern import BROADSIDE, DirectionGrid, Steering
from .common import Evaluator, Objective, RunTrace, agent_streams, make_objective

log = logging.getLogger(__name__)

Projector = Callable[[np.ndarray, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class IbaParams:
    max_iterations: int = 50
    population: int = 300
    pulse_rate_factor: float = 0.9
    frequency_range: Tuple[float, float] = (0.0, 1.0)
    loudness_range: Tuple[float, float] = (1.0, 2.0)
    initial_pulse_rate_range: Tuple[float, float] = (0.0, 1.0)
    attenuation: float = 0.9
    velocity_bound: Tuple[float, float] = (0.0, 0.5)
    inertia_range: Tuple[float, float] = (0.5, 0.9)
    # pins a constant inertia weight instead of the linear 0.9 -> 0.5 schedule
    inertia: Optional[float] = None
    compensation_range: Tuple[float, float] = (0.1, 0.9)
    sound_speed: float = 340.0
    epsilon: float = 1e-9
    # random-walk step per unit loudness; None means element_spacing / 10
    step_scale: Optional[float] = None
    best_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("frequency_range", "loudness_range", "initial_pulse_rate_range",
                     "velocity_bound", "inertia_range", "compensation_range"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            if not lo < hi:
                raise ValueError(f"{name} must satisfy low < high, got {(lo, hi)}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0 < self.attenuation < 1:
            raise ValueError("attenuation must lie in (0, 1)")
        if not self.pulse_rate_factor > 0:
            raise ValueError("pulse_rate_factor must be > 0")
        if self.loudness_range[0] <= 0:
            raise ValueError("loudness must be positive")
        if not 0 < self.best_fraction <= 1:
            raise ValueError("best_fraction must lie in (0, 1]")
        if self.step_scale is not None and self.step_scale < 0:
            raise ValueError("step_scale must be >= 0")

    @property
    def max_speed(self) -> float:
        return max(abs(self.velocity_bound[0]), abs(self.velocity_bound[1]))

    def inertia_at(self, t: int) -> float:
        """Inertia weight at iteration ``t`` (1-based)."""
        if self.inertia is not None:
            return self.inertia
        lo, hi = self.inertia_range
        if self.max_iterations == 1:
            return hi
        return hi - (hi - lo) * (t - 1) / (self.max_iterations - 1)


@dataclass(frozen=True)
class Bat:
    position: np.ndarray
    velocity: np.ndarray
    frequency: float
    effective_frequency: np.ndarray
    loudness: float
    pulse_rate: float
    initial_pulse_rate: float
    compensation: float
    fitness: float = math.inf


def _identity(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return x


def make_projector(config: ArrayConfig) -> Projector:
    """Map an arbitrary design vector to a feasible one via geometry repair."""

    def project(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return repair(build_geometry(config, x), rng).encode()

    return project


def bat_update(
    bat: Bat,
    g_star: np.ndarray,
    v_gbest: float,
    params: IbaParams,
    rng: np.random.Generator,
    omega: float,
    project: Projector = _identity,
) -> Bat:
    """Global move of one bat toward a candidate position.

    The compensation ratio ``(g - x) / (|g - x| + eps)`` is taken per
    coordinate; the Doppler factor uses velocity magnitudes.
    """
    x, v = bat.position, bat.velocity
    f_min, f_max = params.frequency_range
    f = f_min + (f_max - f_min) * rng.random()
    delta = g_star - x
    doppler = (params.sound_speed + np.linalg.norm(v)) / (params.sound_speed + v_gbest)
    f_eff = doppler * f * (1.0 + bat.compensation * delta / (np.abs(delta) + params.epsilon))
    v_new = omega * v + (x - g_star) * f_eff
    v_new = np.clip(v_new, -params.max_speed, params.max_speed)
    x_new = project(x + v_new, rng)
    return replace(bat, position=x_new, velocity=v_new, frequency=f, effective_frequency=f_eff)


def local_search(
    best_set: Sequence[np.ndarray],
    avg_loudness: float,
    step_scale: float,
    rng: np.random.Generator,
    project: Projector = _identity,
) -> np.ndarray:
    """Gaussian random walk around a uniformly chosen member of ``best_set``."""
    if len(best_set) == 0:
        raise ValueError("best_set must be non-empty")
    x_old = np.asarray(best_set[rng.integers(len(best_set))])
    x_new = x_old + rng.standard_normal(x_old.shape) * avg_loudness * step_scale
    return project(x_new, rng)


def accept_and_schedule(bat: Bat, candidate: Bat, params: IbaParams, t: int, rng: np.random.Generator) -> Bat:
    """Adopt an improving candidate with probability ``A_i``; then quieten and pulse faster."""
    if rng.random() < bat.loudness and candidate.fitness < bat.fitness:
        return replace(
            candidate,
            loudness=params.attenuation * bat.loudness,
            pulse_rate=bat.initial_pulse_rate * (1.0 - math.exp(-params.pulse_rate_factor * t)),
        )
    return bat


def initialize_population(
    params: IbaParams,
    config: ArrayConfig,
    streams: Sequence[np.random.Generator],
    evaluate: Callable[[Sequence[ArrayGeometry]], np.ndarray],
) -> List[Bat]:
    bats = []
    geometries = []
    dim = config.design_length
    vmax = params.max_speed
    for rng in streams[: params.population]:
        geometry = repair(build_geometry(config, random_design(config, rng)), rng)
        geometries.append(geometry)
        bats.append(
            Bat(
                position=geometry.encode(),
                velocity=rng.uniform(-vmax, vmax, dim),
                frequency=0.0,
                effective_frequency=np.zeros(dim),
                loudness=float(rng.uniform(*params.loudness_range)),
                pulse_rate=0.0,
                initial_pulse_rate=float(rng.uniform(*params.initial_pulse_rate_range)),
                compensation=float(rng.uniform(*params.compensation_range)),
            )
        )
    scores = evaluate(geometries)
    return [replace(b, fitness=float(s)) for b, s in zip(bats, scores)]


def iba_optimize(
    config: ArrayConfig,
    params: IbaParams = IbaParams(),
    steering: Steering = BROADSIDE,
    grid: Optional[DirectionGrid] = None,
    seed: Union[int, np.random.SeedSequence, None] = None,
    threads: int = 1,
    objective: Optional[Objective] = None,
) -> Tuple[ArrayGeometry, RunTrace]:
    """Minimize the peak sidelobe ratio of ``config`` over its design vector.

    Returns the best geometry found and the per-iteration trace. ``objective``
    replaces the sidelobe fitness (used in tests).
    """
    seed = params.seed if seed is None else seed
    objective = objective or make_objective(config, steering, grid)
    project = make_projector(config)
    streams = agent_streams(seed, params.population)
    step = config.element_spacing / 10.0 if params.step_scale is None else params.step_scale
    n_best = max(1, int(math.ceil(params.best_fraction * params.population)))
    trace = RunTrace()

    with Evaluator(objective, threads) as evaluate:
        bats = initialize_population(params, config, streams, evaluate)
        for t in range(1, params.max_iterations + 1):
            fit = np.array([b.fitness for b in bats])
            order = np.argsort(fit, kind="stable")
            holder = bats[order[0]]
            g_star = holder.position
            v_g = float(np.linalg.norm(holder.velocity))
            best_set = [bats[i].position for i in order[:n_best]]
            avg_a = float(np.mean([b.loudness for b in bats]))
            omega = params.inertia_at(t)

            candidates = []
            for bat, rng in zip(bats, streams):
                cand = bat_update(bat, g_star, v_g, params, rng, omega, project)
                if rng.random() > bat.pulse_rate:
                    cand = replace(cand, position=local_search(best_set, avg_a, step, rng, project))
                candidates.append(cand)

            scores = evaluate([build_geometry(config, c.position) for c in candidates])
            bats = [
                accept_and_schedule(bat, replace(cand, fitness=float(s)), params, t, rng)
                for bat, cand, s, rng in zip(bats, candidates, scores, streams)
            ]
            best = min(bats, key=lambda b: b.fitness)
            trace.record(best.fitness, evaluate.count, evaluate.elapsed)
            log.debug("iba iteration %d best %.6g", t, best.fitness)

    best = min(bats, key=lambda b: b.fitness)
    return build_geometry(config, best.position), trace
