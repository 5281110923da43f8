"""Global-best particle swarm baseline over the same design space."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..geometry import ArrayConfig, ArrayGeometry, build_geometry, random_design, repair
from ..pattern import BROADSIDE, DirectionGrid, Steering
from .common import Evaluator, Objective, RunTrace, agent_streams, make_objective

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PsoParams:
    population: int = 200
    max_iterations: int = 100
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    max_velocity: float = 0.12
    stall_generations: int = 10
    stall_tolerance: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.max_velocity <= 0:
            raise ValueError("max_velocity must be > 0")
        if self.stall_generations < 1:
            raise ValueError("stall_generations must be >= 1")


def stalled(history: Sequence[float], generations: int, tolerance: float) -> bool:
    """True when the mean relative change of the best value over the last
    ``generations`` steps is below ``tolerance``."""
    if len(history) < generations + 1:
        return False
    h = np.asarray(history[-(generations + 1):], dtype=float)
    denom = np.maximum(np.abs(h[:-1]), np.finfo(float).tiny)
    return float(np.mean(np.abs(np.diff(h)) / denom)) < tolerance


def pso_optimize(
    config: ArrayConfig,
    params: PsoParams = PsoParams(),
    steering: Steering = BROADSIDE,
    grid: Optional[DirectionGrid] = None,
    seed: Union[int, np.random.SeedSequence, None] = None,
    threads: int = 1,
    objective: Optional[Objective] = None,
) -> Tuple[ArrayGeometry, RunTrace]:
    seed = params.seed if seed is None else seed
    objective = objective or make_objective(config, steering, grid)
    streams = agent_streams(seed, params.population)
    dim = config.design_length
    vmax = params.max_velocity
    trace = RunTrace()

    with Evaluator(objective, threads) as evaluate:
        geoms = [repair(build_geometry(config, random_design(config, rng)), rng) for rng in streams]
        x = np.array([g.encode() for g in geoms]).reshape(params.population, dim)
        v = np.array([rng.uniform(-vmax, vmax, dim) for rng in streams]).reshape(params.population, dim)
        f = evaluate(geoms)
        pbest, pbest_f = x.copy(), f.copy()
        g = int(np.argmin(pbest_f))
        history = [float(pbest_f[g])]

        for t in range(1, params.max_iterations + 1):
            gbest = pbest[g].copy()
            new_geoms = []
            for i, rng in enumerate(streams):
                r1, r2 = rng.random(dim), rng.random(dim)
                v[i] = (params.inertia * v[i]
                        + params.cognitive * r1 * (pbest[i] - x[i])
                        + params.social * r2 * (gbest - x[i]))
                v[i] = np.clip(v[i], -vmax, vmax)
                geom = repair(build_geometry(config, x[i] + v[i]), rng)
                x[i] = geom.encode()
                new_geoms.append(geom)
            f = evaluate(new_geoms)
            better = f < pbest_f
            pbest[better] = x[better]
            pbest_f[better] = f[better]
            g = int(np.argmin(pbest_f))
            history.append(float(pbest_f[g]))
            trace.record(pbest_f[g], evaluate.count, evaluate.elapsed)
            log.debug("pso iteration %d best %.6g", t, pbest_f[g])
            if stalled(history, params.stall_generations, params.stall_tolerance):
                break

    return build_geometry(config, pbest[g]), trace
