from .bat import (
    Bat,
    IbaParams,
    accept_and_schedule,
    bat_update,
    iba_optimize,
    initialize_population,
    local_search,
    make_projector,
)
from .common import RunTrace, fitness, fitness_grid, geometry_fitness, make_objective, to_db
from .pso import PsoParams, pso_optimize, stalled

__all__ = [
    "Bat",
    "IbaParams",
    "PsoParams",
    "RunTrace",
    "accept_and_schedule",
    "bat_update",
    "fitness",
    "fitness_grid",
    "geometry_fitness",
    "iba_optimize",
    "initialize_population",
    "local_search",
    "make_objective",
    "make_projector",
    "pso_optimize",
    "stalled",
    "to_db",
]
