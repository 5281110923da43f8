"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
The stochastic criteria run the optimizer at desk scale and take minutes.
"""

import json
import math
import time
from statistics import median

import numpy as np
import pytest

from aperiodic_array.geometry import ArrayConfig, build_geometry, flatten_positions, random_geometry
from aperiodic_array.harness.config import parse_config, with_overrides
from aperiodic_array.harness.recipes import run
from aperiodic_array.optimizer import IbaParams, PsoParams, iba_optimize, pso_optimize
from aperiodic_array.pattern import (
    BROADSIDE,
    DirectionGrid,
    Steering,
    af_direct,
    af_factored,
    array_factor,
    default_mask_radius,
    frequency_sweep,
    psll,
    sample_pattern,
    sample_positions,
)
from aperiodic_array.redundancy import redundancy_of

DESK = IbaParams(population=100, max_iterations=50)


def random_directions(rng, n):
    r = np.sqrt(rng.random(n))
    a = rng.uniform(0, 2 * np.pi, n)
    return r * np.cos(a), r * np.sin(a)


def optimized_psll(config, seed):
    geometry, _ = iba_optimize(config, DESK, seed=seed)
    return geometry, psll(sample_pattern(geometry)).psll_db


def test_criterion_01_factorization(criterion):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        M, N = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        cfg = ArrayConfig(M, N, float(rng.uniform(0.5, 1.2)), float(rng.uniform(0, 1.0)), structure_kind="DSRE")
        g = random_geometry(cfg, rng)
        s = Steering(float(rng.uniform(0, math.pi / 2)), float(rng.uniform(0, 2 * math.pi)))
        u, v = random_directions(rng, 100)
        peak = abs(af_direct(g, s, s.u0, s.v0))
        err = np.max(np.abs(af_factored(g, s, u, v) - af_direct(g, s, u, v))) / peak
        worst = max(worst, float(err))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 60
    criterion(1, ok, f"max relative error {worst:.2e} (< 1e-10), {elapsed:.1f} s (< 60 s)")
    assert ok


def test_criterion_02_uniform_line_oracle(criterion):
    n, d = 8, 0.5
    positions = np.column_stack([np.arange(n) * d, np.zeros(n)])
    u = np.linspace(-1, 1, 200001)
    grid = DirectionGrid.from_points(np.column_stack([u, np.zeros_like(u)]), resolution=u[1] - u[0])
    radius = default_mask_radius(n * d)
    got = psll(sample_positions(positions, BROADSIDE, grid, radius)).psll_db

    # closed-form kernel |sin(n x) / (n sin x)|, x = pi d u
    x = np.pi * d * u[np.abs(u) > radius]
    oracle = 20 * np.log10(np.max(np.abs(np.sin(n * x) / (n * np.sin(x)))))
    ok = abs(got - oracle) < 0.1 and abs(got + 12.8) <= 0.1
    criterion(2, ok, f"PSLL {got:.3f} dB, closed form {oracle:.3f} dB, target -12.8 +/- 0.1")
    assert ok


def test_criterion_03_grating_lobe(criterion):
    cfg = ArrayConfig(28, 1, 1.1, 0.0, structure_kind="Uniform")
    got = psll(sample_pattern(build_geometry(cfg))).psll_db
    ok = got >= -0.2
    criterion(3, ok, f"uniform 28x28 d=1.1: PSLL {got:.3f} dB (>= -0.2)")
    assert ok


def test_criterion_04_redundancy_closed_forms(criterion):
    counts = {}
    for P in (3, 12, 18):
        cfg = ArrayConfig(P, 1, 1.0, 0.0, structure_kind="Uniform")
        counts[P] = redundancy_of(build_geometry(cfg)).s_re
    closed = all(counts[P] == (2 * P - 1) ** 2 - 1 for P in counts)
    r12 = redundancy_of(build_geometry(ArrayConfig(12, 1, 1.0, 0.0, structure_kind="Uniform"))).ratio
    table = 20592 / 18616
    ok = closed and abs(r12 - 39.0) < 1e-9 and round(table, 2) == 1.11
    criterion(4, ok, f"S_re {counts}, R(12x12) = {r12:.12g}, 20592/18616 = {table:.4f}")
    assert ok


@pytest.mark.slow
def test_criterion_05_optimization_quality(criterion):
    cfg = ArrayConfig(3, 4, 1.0, 0.87, 10e9, "DSRE")
    start = time.perf_counter()
    values = [optimized_psll(cfg, seed)[1] for seed in range(5)]
    elapsed = time.perf_counter() - start
    med = median(values)
    ok = med <= -10.6 and elapsed <= 15 * 60
    criterion(5, ok, f"12x12 DSRE median-of-5 PSLL {med:.2f} dB (<= -10.6), runs {[round(v, 2) for v in values]}, "
                     f"{elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_06_structure_ordering(criterion):
    medians = {}
    for kind in ("DSRE", "USRE", "DSUE"):
        cfg = ArrayConfig(4, 3, 1.0, 0.87, 10e9, kind)
        medians[kind] = median(optimized_psll(cfg, seed)[1] for seed in range(5))
    ok = medians["DSRE"] < medians["USRE"] and medians["DSRE"] < medians["DSUE"]
    criterion(6, ok, "medians " + ", ".join(f"{k} {v:.2f} dB" for k, v in medians.items()))
    assert ok


def test_criterion_07_convergence_properties(criterion):
    cfg = ArrayConfig(2, 2, 1.0, 0.6, structure_kind="DSRE")
    params = IbaParams(population=10, max_iterations=8)
    _, trace = iba_optimize(cfg, params, seed=1)
    monotone = all(b <= a for a, b in zip(trace.best_fitness, trace.best_fitness[1:]))
    full = len(trace) == params.max_iterations
    pso = PsoParams(population=8, max_iterations=100)
    _, ptrace = pso_optimize(cfg, pso, seed=0, objective=lambda g: 1.0)
    stops = len(ptrace) <= 10
    ok = monotone and full and stops
    criterion(7, ok, f"IBA monotone={monotone} length={len(trace)}/{params.max_iterations}; "
                     f"PSO constant-fitness stop after {len(ptrace)} generations (<= 10)")
    assert ok


@pytest.mark.slow
def test_criterion_08_steering(criterion):
    rng = np.random.default_rng(8)
    worst = 0.0
    for kind in ("DSUE", "USRE", "DSRE"):
        for _ in range(3):
            g = random_geometry(ArrayConfig(4, 7, 1.0, 0.87, structure_kind=kind), rng)
            count = g.config.element_count
            u, v = random_directions(rng, 200)
            for theta in (15.0, 30.0, 60.0):
                s = Steering.from_degrees(theta, float(rng.uniform(0, 360)))
                steered = af_direct(g, s, u, v) / count
                shifted = af_direct(g, BROADSIDE, u - s.u0, v - s.v0) / count
                # independent form: broadside phases times the conjugate steering phase
                pos = flatten_positions(g)
                k = 2 * np.pi
                phased = (np.exp(1j * k * (np.outer(u, pos[:, 0]) + np.outer(v, pos[:, 1])))
                          * np.exp(-1j * k * (pos[:, 0] * s.u0 + pos[:, 1] * s.v0))).sum(axis=1) / count
                worst = max(worst, float(np.max(np.abs(steered - shifted))), float(np.max(np.abs(steered - phased))))

    cfg = ArrayConfig(4, 7, 1.0, 0.87, 10e9, "DSRE")
    geometry, p0 = optimized_psll(cfg, 0)
    p15 = psll(sample_pattern(geometry, Steering.from_degrees(15))).psll_db
    ok = worst <= 1e-12 and abs(p15 - p0) <= 0.5
    criterion(8, ok, f"shift identity max error {worst:.1e} (<= 1e-12); 7x7 DSRE PSLL 0 deg {p0:.2f} dB, "
                     f"15 deg {p15:.2f} dB, |diff| {abs(p15 - p0):.2f} (<= 0.5)")
    assert ok


@pytest.mark.slow
def test_criterion_09_frequency(criterion):
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(5):
        g = random_geometry(ArrayConfig(7, 4, 1.0, 0.93, structure_kind="DSRE"), rng)
        pos = flatten_positions(g)
        u, v = random_directions(rng, 200)
        a = array_factor(pos, u, v, scale=2.0) / len(pos)
        b = array_factor(2.0 * pos, u, v, scale=1.0) / len(pos)
        worst = max(worst, float(np.max(np.abs(a - b))))

    cfg = ArrayConfig(7, 4, 1.0, 0.93, 10e9, "DSRE")
    geometry, _ = iba_optimize(cfg, DESK, seed=0)
    band = [r.psll_db for _, r in frequency_sweep(geometry, [8e9, 10e9, 12e9, 14e9, 16e9])]
    spread = max(band) - min(band)
    ok = worst <= 1e-12 and spread < 2.0
    criterion(9, ok, f"2f identity max error {worst:.1e} (<= 1e-12); 4x4 DSRE 8-16 GHz PSLL "
                     f"{[round(b, 2) for b in band]}, spread {spread:.2f} dB (< 2)")
    assert ok


def _tree(root):
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            text = p.read_text()
            if p.name == "trace.csv":
                # elapsed_seconds is the last column
                text = "\n".join(line.rsplit(",", 1)[0] for line in text.splitlines())
            out[str(p.relative_to(root))] = text
    return out


def test_criterion_10_determinism(criterion, tmp_path):
    base = {
        "array": {"elements_per_subarray_side": 2, "subarrays_per_side": 2, "element_spacing": 1.0,
                  "dislocation_budget": 0.6, "structure": "DSRE"},
        "optimizer": {"iba": {"population": 8, "max_iterations": 4}},
        "repetitions": 2,
        "seed": 17,
    }
    recipes = {
        "optimize": {},
        "structure_comparison": {},
        "dislocation_sweep": {"dislocations": [0.2, 0.6]},
        "scan_sweep": {"steerings_deg": [[0, 0], [15, 0], [30, 45]]},
        "frequency_sweep": {"frequencies_hz": [8e9, 16e9]},
        "redundancy": {},
    }
    mismatched = []
    for recipe, extra in recipes.items():
        spec = parse_config({**base, "recipe": recipe, **extra})
        trees = []
        for i, threads in enumerate((1, 1, 3)):
            out = tmp_path / recipe / str(i)
            run(with_overrides(spec, output_dir=str(out), threads=threads))
            trees.append(_tree(out))
        if not (trees[0] == trees[1] == trees[2]):
            mismatched.append(recipe)
        json.loads((tmp_path / recipe / "0" / "resolved_config.json").read_text())
    ok = not mismatched
    criterion(10, ok, f"{len(recipes)} recipes x (1, 1, 3 threads) byte-identical; mismatches: {mismatched or 'none'}")
    assert ok
