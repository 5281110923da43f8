import math
from statistics import median

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aperiodic_array.geometry import ArrayConfig, build_geometry, check_constraints
from aperiodic_array.optimizer import (
    Bat,
    IbaParams,
    PsoParams,
    accept_and_schedule,
    bat_update,
    iba_optimize,
    local_search,
    pso_optimize,
    stalled,
)
from aperiodic_array.optimizer.common import Evaluator, RunTrace, agent_streams, fitness, make_objective, to_db
from aperiodic_array.pattern import psll, sample_pattern


class StubRng:
    """Replays fixed draws for ``random()``."""

    def __init__(self, *values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def make_bat(position, velocity, compensation=0.5, loudness=2.0, r0=0.6, fitness=1.0):
    dim = len(position)
    return Bat(
        position=np.asarray(position, dtype=float),
        velocity=np.asarray(velocity, dtype=float),
        frequency=0.0,
        effective_frequency=np.zeros(dim),
        loudness=loudness,
        pulse_rate=0.0,
        initial_pulse_rate=r0,
        compensation=compensation,
        fitness=fitness,
    )


SMALL = ArrayConfig(2, 2, 1.0, 0.6, structure_kind="DSRE")


class TestBatUpdate:
    def test_hand_computed_step(self):
        params = IbaParams()
        bat = make_bat([0.0, 0.0], [0.1, 0.2])
        v_g = float(np.linalg.norm(bat.velocity))
        out = bat_update(bat, np.array([1.0, -1.0]), v_g, params, StubRng(0.5), omega=0.5)
        # f = 0.5, Doppler = 1, f' = 0.5 * (1 + 0.5 * sign(g - x))
        np.testing.assert_allclose(out.effective_frequency, [0.75, 0.25], atol=1e-9)
        # 0.5 v + (x - g) f' = [-0.7, 0.35], clamped to 0.5
        np.testing.assert_allclose(out.velocity, [-0.5, 0.35], atol=1e-9)
        np.testing.assert_allclose(out.position, [-0.5, 0.35], atol=1e-9)
        assert out.frequency == 0.5

    def test_doppler_factor(self):
        params = IbaParams()
        bat = make_bat([0.0], [0.3], compensation=0.0)
        out = bat_update(bat, np.array([1.0]), 0.1, params, StubRng(1.0), omega=0.0)
        assert out.effective_frequency[0] == pytest.approx((340.3) / (340.1))

    @settings(max_examples=50, deadline=None)
    @given(
        x=st.lists(st.floats(-1, 1), min_size=1, max_size=6),
        f=st.floats(0, 1),
        omega=st.floats(0.5, 0.9),
    )
    def test_best_position_moves_only_by_inertia(self, x, f, omega):
        params = IbaParams()
        v = np.full(len(x), 0.2)
        bat = make_bat(x, v)
        out = bat_update(bat, np.array(x), 0.0, params, StubRng(f), omega)
        np.testing.assert_allclose(out.velocity, omega * v)

    @settings(max_examples=50, deadline=None)
    @given(f=st.floats(0, 1), g=st.lists(st.floats(-2, 2), min_size=3, max_size=3))
    def test_zero_compensation_pure_doppler(self, f, g):
        params = IbaParams()
        bat = make_bat([0.0, 0.0, 0.0], [0.1, 0.0, 0.0], compensation=0.0)
        out = bat_update(bat, np.array(g), 0.1, params, StubRng(f), 0.7)
        np.testing.assert_allclose(out.effective_frequency, f)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**16))
    def test_velocity_bounded(self, seed):
        params = IbaParams()
        rng = np.random.default_rng(seed)
        bat = make_bat(rng.uniform(-3, 3, 5), rng.uniform(-0.5, 0.5, 5))
        out = bat_update(bat, rng.uniform(-3, 3, 5), 0.2, params, rng, 0.9)
        assert np.all(np.abs(out.velocity) <= params.max_speed)


class TestAcceptance:
    def test_accept_shrinks_loudness_and_raises_pulse_rate(self):
        params = IbaParams()
        bat = make_bat([0.0], [0.0], loudness=2.0, r0=0.9, fitness=1.0)
        cand = make_bat([0.1], [0.0], fitness=0.5)
        out = accept_and_schedule(bat, cand, params, 1, StubRng(0.3))
        assert out.loudness == pytest.approx(1.8)
        assert out.pulse_rate == pytest.approx(0.9 * (1 - math.exp(-0.9)))
        assert out.pulse_rate == pytest.approx(0.534088, abs=1e-6)
        assert out.fitness == 0.5

    def test_reject_when_worse(self):
        bat = make_bat([0.0], [0.0], fitness=0.5)
        cand = make_bat([0.1], [0.0], fitness=0.6)
        assert accept_and_schedule(bat, cand, IbaParams(), 1, StubRng(0.0)) is bat

    def test_reject_when_too_quiet(self):
        bat = make_bat([0.0], [0.0], loudness=0.2, fitness=1.0)
        cand = make_bat([0.1], [0.0], fitness=0.1)
        assert accept_and_schedule(bat, cand, IbaParams(), 1, StubRng(0.5)) is bat


class TestLocalSearch:
    def test_silent_swarm_returns_an_elite(self):
        rng = np.random.default_rng(0)
        best = [np.array([1.0, 2.0]), np.array([3.0, 4.0])]
        out = local_search(best, 0.0, 0.1, rng)
        assert any(np.array_equal(out, b) for b in best)

    def test_step_scale(self):
        rng = np.random.default_rng(1)
        steps = np.array([local_search([np.zeros(4)], 1.5, 0.1, rng) for _ in range(2000)])
        assert steps.std() == pytest.approx(0.15, rel=0.05)

    def test_empty_best_set(self):
        with pytest.raises(ValueError):
            local_search([], 1.0, 0.1, np.random.default_rng(0))


class TestParams:
    def test_defaults(self):
        p = IbaParams()
        assert (p.population, p.max_iterations, p.attenuation, p.pulse_rate_factor) == (300, 50, 0.9, 0.9)
        assert p.inertia_at(1) == pytest.approx(0.9)
        assert p.inertia_at(50) == pytest.approx(0.5)

    @pytest.mark.parametrize("kwargs", [dict(population=1), dict(attenuation=1.0), dict(frequency_range=(1, 0))])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            IbaParams(**kwargs)


class TestIba:
    params = IbaParams(population=12, max_iterations=6)

    def test_trace_monotone_and_full_length(self):
        _, trace = iba_optimize(SMALL, self.params, seed=3)
        assert len(trace) == self.params.max_iterations
        assert all(b <= a for a, b in zip(trace.best_fitness, trace.best_fitness[1:]))
        assert trace.evaluations[-1] == 12 * 7

    def test_result_feasible_and_consistent(self):
        geom, trace = iba_optimize(SMALL, self.params, seed=4)
        assert check_constraints(geom).feasible
        assert make_objective(SMALL)(geom) == pytest.approx(trace.best_fitness[-1])

    def test_same_seed_same_result(self):
        a, ta = iba_optimize(SMALL, self.params, seed=5)
        b, tb = iba_optimize(SMALL, self.params, seed=5, threads=3)
        np.testing.assert_array_equal(a.encode(), b.encode())
        assert ta.best_fitness == tb.best_fitness

    def test_seed_sequence_not_consumed(self):
        ss = np.random.SeedSequence(9, spawn_key=(1, 2))
        a, _ = iba_optimize(SMALL, self.params, seed=ss)
        b, _ = iba_optimize(SMALL, self.params, seed=ss)
        np.testing.assert_array_equal(a.encode(), b.encode())

    def test_custom_objective(self):
        def objective(g):
            return float(np.sum(g.encode() ** 2)) + 1.0

        geom, trace = iba_optimize(SMALL, self.params, seed=0, objective=objective)
        assert trace.best_fitness[-1] == pytest.approx(objective(geom))


class TestPso:
    def test_stall_rule(self):
        assert not stalled([1.0] * 10, 10, 1e-4)
        assert stalled([1.0] * 11, 10, 1e-4)
        assert not stalled([1.0, 0.5] + [0.5] * 9, 10, 1e-4)

    def test_constant_fitness_stops_within_stall_window(self):
        params = PsoParams(population=8, max_iterations=100)
        _, trace = pso_optimize(SMALL, params, seed=0, objective=lambda g: 1.0)
        assert len(trace) == params.stall_generations

    def test_trace_monotone(self):
        params = PsoParams(population=10, max_iterations=8)
        geom, trace = pso_optimize(SMALL, params, seed=1)
        assert all(b <= a for a, b in zip(trace.best_fitness, trace.best_fitness[1:]))
        assert len(trace) <= params.max_iterations
        assert check_constraints(geom).feasible

    def test_deterministic(self):
        params = PsoParams(population=10, max_iterations=5)
        a, _ = pso_optimize(SMALL, params, seed=2)
        b, _ = pso_optimize(SMALL, params, seed=2, threads=2)
        np.testing.assert_array_equal(a.encode(), b.encode())


class TestCommon:
    def test_fitness_is_linear_psll(self):
        geom = build_geometry(SMALL, np.zeros(SMALL.design_length))
        res = psll(sample_pattern(geom))
        assert fitness(np.zeros(SMALL.design_length), SMALL) == pytest.approx(10 ** (res.psll_db / 20))
        assert to_db(res.ratio) == pytest.approx(res.psll_db)

    def test_streams_are_distinct_and_reproducible(self):
        a = [g.random() for g in agent_streams(7, 4)]
        b = [g.random() for g in agent_streams(7, 4)]
        assert a == b
        assert len(set(a)) == 4

    def test_evaluator_orders_results(self):
        with Evaluator(lambda x: x * 2.0, threads=4) as ev:
            out = ev(list(range(20)))
        np.testing.assert_array_equal(out, np.arange(20) * 2.0)
        assert ev.count == 20

    def test_trace_csv(self, tmp_path):
        trace = RunTrace()
        trace.record(0.5, 10, 0.1)
        trace.write_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "iteration,best_fitness_linear,best_psll_db,evaluations,elapsed_seconds"
        assert lines[1].startswith("1,0.5,-6.0205999")


@pytest.mark.slow
def test_pso_baseline_not_better_than_iba():
    cfg = ArrayConfig(3, 4, 1.0, 0.87, structure_kind="DSRE")
    iba = IbaParams(population=30, max_iterations=20)
    pso = PsoParams(population=30, max_iterations=20)
    a = [iba_optimize(cfg, iba, seed=s)[1].best_psll_db[-1] for s in range(3)]
    b = [pso_optimize(cfg, pso, seed=s)[1].best_psll_db[-1] for s in range(3)]
    assert median(a) <= median(b) + 0.5
