"""Experiment recipes and their file outputs.

Every recipe writes ``resolved_config.json`` first. Seeds are derived from the
master seed with a counter key ``(point, repetition)``, so adding repetitions
or sweep points never changes the streams of existing ones. Wall time appears
only in ``elapsed_seconds`` columns of trace files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from pathlib import Path
from statistics import median
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from ..geometry import ArrayConfig, ArrayGeometry, build_geometry, random_geometry, write_geometry_csv
from ..optimizer import iba_optimize, make_objective, pso_optimize
from ..optimizer.common import RunTrace
from ..pattern import DirectionGrid, Steering, psll, psll_report, sample_pattern, write_pattern_csv
from ..redundancy import redundancy_of
from .config import ExperimentSpec, Recipe

log = logging.getLogger(__name__)


def derive_seed(master: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))


def seed_label(ss: np.random.SeedSequence) -> int:
    """A printable integer identifying a derived stream."""
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _fmt(x: Any) -> Any:
    if isinstance(x, float):
        return f"{x:.12g}"
    return x


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _write_json(path: Path, data: Dict[str, Any]) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


@dataclasses.dataclass
class RunOutcome:
    config: ArrayConfig
    geometry: ArrayGeometry
    trace: RunTrace
    seed: int


class Runner:
    def __init__(self, spec: ExperimentSpec) -> None:
        self.spec = spec
        self.out = Path(spec.output_dir)

    def steering(self) -> Steering:
        return Steering.from_degrees(*self.spec.steering_deg)

    def optimize(self, config: ArrayConfig, ss: np.random.SeedSequence) -> RunOutcome:
        spec = self.spec
        grid = DirectionGrid.for_aperture(config.aperture, spec.pattern.fit_samples_per_beamwidth)
        objective = make_objective(config, self.steering(), grid, spec.pattern.mask_radius)
        if config.design_length == 0:
            # nothing to optimize: evaluate the fixed layout once
            geometry = build_geometry(config)
            trace = RunTrace()
            trace.record(objective(geometry), 1, 0.0)
            return RunOutcome(config, geometry, trace, seed_label(ss))
        if spec.algorithm == "pso":
            geometry, trace = pso_optimize(config, spec.pso, seed=ss, threads=spec.threads, objective=objective)
        else:
            geometry, trace = iba_optimize(config, spec.iba, seed=ss, threads=spec.threads, objective=objective)
        return RunOutcome(config, geometry, trace, seed_label(ss))

    def report_pattern(self, geometry: ArrayGeometry, steering: Steering, scale: float = 1.0):
        aperture = geometry.config.aperture * scale
        grid = DirectionGrid.for_aperture(aperture, self.spec.pattern.report_samples_per_beamwidth)
        mask = self.spec.pattern.mask_radius
        pattern = sample_pattern(geometry, steering, grid, mask, scale)
        return pattern, psll(pattern)

    def emit_run(self, directory: Path, outcome: RunOutcome, write_pattern: bool) -> Dict[str, Any]:
        directory.mkdir(parents=True, exist_ok=True)
        cfg = outcome.config
        pattern, result = self.report_pattern(outcome.geometry, self.steering())
        red = redundancy_of(outcome.geometry, self.spec.redundancy_resolution)
        write_geometry_csv(outcome.geometry, directory / "geometry.csv")
        outcome.trace.write_csv(directory / "trace.csv")
        if write_pattern:
            write_pattern_csv(pattern, directory / "pattern.csv")
        report = psll_report(pattern, result)
        report.update(
            {
                "structure": cfg.structure_kind.value,
                "seed": outcome.seed,
                "algorithm": self.spec.algorithm if cfg.design_length else "none",
                "fit_psll_db": round(outcome.trace.best_psll_db[-1], 12),
                "fit_grid_du": round(1.0 / (self.spec.pattern.fit_samples_per_beamwidth * cfg.aperture), 12),
                "evaluations": outcome.trace.evaluations[-1],
                "aperture_wavelengths": round(cfg.aperture, 12),
            }
        )
        _write_json(directory / "psll.json", report)
        red.write_json(directory / "redundancy.json")
        return {"psll_db": result.psll_db, "s_re": red.s_re, "ratio": red.ratio}

    # recipes -----------------------------------------------------------------

    def run(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        _write_json(self.out / "resolved_config.json", self.spec.resolved())
        handler = {
            Recipe.OPTIMIZE: self.run_optimize,
            Recipe.STRUCTURE_COMPARISON: self.run_structure_comparison,
            Recipe.DISLOCATION_SWEEP: self.run_dislocation_sweep,
            Recipe.SCAN_SWEEP: self.run_scan_sweep,
            Recipe.FREQUENCY_SWEEP: self.run_frequency_sweep,
            Recipe.REDUNDANCY: self.run_redundancy,
        }[self.spec.recipe]
        handler()

    def run_optimize(self) -> None:
        rows = []
        for rep in range(self.spec.repetitions):
            outcome = self.optimize(self.spec.array, derive_seed(self.spec.seed, 0, rep))
            stats = self.emit_run(self.out / f"rep_{rep:03d}", outcome, self.spec.pattern.write_pattern)
            rows.append([rep, outcome.seed, stats["psll_db"], outcome.trace.best_psll_db[-1], stats["s_re"], stats["ratio"]])
            log.info("repetition %d: PSLL %.2f dB", rep, stats["psll_db"])
        _write_csv(self.out / "summary.csv", ["repetition", "seed", "psll_db", "fit_psll_db", "s_re", "ratio"], rows)

    def run_structure_comparison(self) -> None:
        rows = []
        by_kind: Dict[str, List[float]] = {}
        for p, kind in enumerate(self.spec.structures):
            config = self.spec.array.with_kind(kind)
            for rep in range(self.spec.repetitions):
                outcome = self.optimize(config, derive_seed(self.spec.seed, p, rep))
                stats = self.emit_run(self.out / "runs" / f"{kind.value}_rep_{rep:03d}", outcome, False)
                rows.append([kind.value, rep, outcome.seed, stats["psll_db"], stats["s_re"], stats["ratio"]])
                by_kind.setdefault(kind.value, []).append(stats["psll_db"])
                log.info("%s repetition %d: PSLL %.2f dB", kind.value, rep, stats["psll_db"])
        _write_csv(self.out / "comparison.csv", ["structure", "repetition", "seed", "psll_db", "s_re", "ratio"], rows)
        summary = [(k, median(v), min(v), max(v)) for k, v in by_kind.items()]
        ranked = sorted(summary, key=lambda r: r[1])
        _write_csv(
            self.out / "comparison_summary.csv",
            ["rank", "structure", "median_psll_db", "best_psll_db", "worst_psll_db"],
            [(i + 1, k, m, lo, hi) for i, (k, m, lo, hi) in enumerate(ranked)],
        )

    def sweep_config(self, kind, ds: float) -> ArrayConfig:
        a = self.spec.array
        d = a.element_spacing
        if self.spec.sweep_aperture is not None:
            d = (self.spec.sweep_aperture / a.N - ds) / a.M
        return ArrayConfig(a.M, a.N, d, ds, a.frequency, kind)

    def run_dislocation_sweep(self) -> None:
        rows = []
        for i, ds in enumerate(self.spec.dislocations):
            for j, kind in enumerate(self.spec.structures):
                config = self.sweep_config(kind, ds)
                for rep in range(self.spec.repetitions):
                    point = i * len(self.spec.structures) + j
                    outcome = self.optimize(config, derive_seed(self.spec.seed, point, rep))
                    _, result = self.report_pattern(outcome.geometry, self.steering())
                    rows.append([ds, config.element_spacing, config.aperture, kind.value, rep, outcome.seed, result.psll_db])
                    log.info("ds=%.3g %s rep %d: PSLL %.2f dB", ds, kind.value, rep, result.psll_db)
        _write_csv(
            self.out / "dislocation_sweep.csv",
            ["dislocation_wavelengths", "element_spacing", "aperture", "structure", "repetition", "seed", "psll_db"],
            rows,
        )

    def run_scan_sweep(self) -> None:
        rows = []
        for rep in range(self.spec.repetitions):
            outcome = self.optimize(self.spec.array, derive_seed(self.spec.seed, 0, rep))
            self.emit_run(self.out / f"rep_{rep:03d}", outcome, False)
            for theta, phi in self.spec.steerings_deg:
                steering = Steering.from_degrees(theta, phi)
                _, result = self.report_pattern(outcome.geometry, steering)
                rows.append([rep, outcome.seed, float(theta), float(phi), steering.u0, steering.v0,
                             result.psll_db, result.peak_u, result.peak_v])
        _write_csv(
            self.out / "scan_sweep.csv",
            ["repetition", "seed", "theta_deg", "phi_deg", "u0", "v0", "psll_db", "peak_u", "peak_v"],
            rows,
        )

    def run_frequency_sweep(self) -> None:
        rows = []
        f0 = self.spec.array.frequency
        for rep in range(self.spec.repetitions):
            outcome = self.optimize(self.spec.array, derive_seed(self.spec.seed, 0, rep))
            self.emit_run(self.out / f"rep_{rep:03d}", outcome, False)
            for f in self.spec.frequencies_hz:
                scale = f / f0
                pattern, result = self.report_pattern(outcome.geometry, self.steering(), scale)
                rows.append([rep, outcome.seed, float(f), scale, result.psll_db, result.peak_u, result.peak_v,
                             pattern.mask_radius, pattern.grid.resolution])
        _write_csv(
            self.out / "frequency_sweep.csv",
            ["repetition", "seed", "frequency_hz", "scale", "psll_db", "peak_u", "peak_v", "mask_radius", "grid_du"],
            rows,
        )
        _write_json(
            self.out / "frequency_sweep.json",
            {
                "design_frequency_hz": f0,
                "length_unit": "wavelengths at the design frequency",
                "note": "layout fixed in meters; wavenumber scaled by frequency_hz / design_frequency_hz; "
                        "grid pitch and mask radius follow the electrical aperture",
            },
        )

    def run_redundancy(self) -> None:
        rows = []
        config = self.spec.array
        for rep in range(self.spec.repetitions):
            ss = derive_seed(self.spec.seed, 0, rep)
            if config.design_length == 0 or self.spec.optimize_before_redundancy:
                outcome = self.optimize(config, ss)
                geometry = outcome.geometry
            else:
                geometry = random_geometry(config, np.random.default_rng(ss))
            report = redundancy_of(geometry, self.spec.redundancy_resolution)
            directory = self.out / f"rep_{rep:03d}"
            directory.mkdir(parents=True, exist_ok=True)
            report.write_json(directory / "redundancy.json")
            write_geometry_csv(geometry, directory / "geometry.csv")
            rows.append([rep, seed_label(ss), report.elements, report.s_id, report.s_re, report.ratio])
        _write_csv(self.out / "redundancy.csv", ["repetition", "seed", "elements", "s_id", "s_re", "ratio"], rows)


def run(spec: ExperimentSpec) -> Path:
    """Execute ``spec``; returns the output directory."""
    Runner(spec).run()
    return Path(spec.output_dir)
