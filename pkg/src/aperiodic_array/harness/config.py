"""Experiment config parsing and validation.

Configs are JSON documents describing one experiment. All lengths are in
wavelengths at the design frequency. Validation fills every default and
reports problems by key path, e.g. ``array.dislocation_budget``.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from ..geometry import ArrayConfig, GeometryError, StructureKind
from ..optimizer import IbaParams, PsoParams
from ..redundancy import DEFAULT_RESOLUTION


class ConfigError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class Recipe(str, enum.Enum):
    OPTIMIZE = "optimize"
    STRUCTURE_COMPARISON = "structure_comparison"
    DISLOCATION_SWEEP = "dislocation_sweep"
    SCAN_SWEEP = "scan_sweep"
    FREQUENCY_SWEEP = "frequency_sweep"
    REDUNDANCY = "redundancy"


@dataclass(frozen=True)
class PatternSettings:
    fit_samples_per_beamwidth: float = 4.0
    report_samples_per_beamwidth: float = 8.0
    # None means MASK_FACTOR / L_a at each evaluation frequency
    mask_radius: Optional[float] = None
    write_pattern: bool = True


@dataclass(frozen=True)
class ExperimentSpec:
    recipe: Recipe
    array: ArrayConfig
    algorithm: str = "iba"
    iba: IbaParams = IbaParams()
    pso: PsoParams = PsoParams()
    pattern: PatternSettings = PatternSettings()
    steering_deg: Tuple[float, float] = (0.0, 0.0)
    steerings_deg: Tuple[Tuple[float, float], ...] = ((0.0, 0.0),)
    frequencies_hz: Tuple[float, ...] = ()
    dislocations: Tuple[float, ...] = ()
    sweep_aperture: Optional[float] = None
    structures: Tuple[StructureKind, ...] = (StructureKind.DSUE, StructureKind.USRE, StructureKind.DSRE)
    redundancy_resolution: float = DEFAULT_RESOLUTION
    optimize_before_redundancy: bool = True
    seed: int = 0
    repetitions: int = 1
    # runtime placement; deliberately left out of the resolved echo
    output_dir: str = "out"
    threads: int = 1

    def resolved(self) -> Dict[str, Any]:
        """Fully-resolved config as plain JSON data."""
        a = self.array
        iba = dataclasses.asdict(self.iba)
        iba.pop("seed")
        pso = dataclasses.asdict(self.pso)
        pso.pop("seed")
        return {
            "recipe": self.recipe.value,
            "array": {
                "elements_per_subarray_side": a.M,
                "subarrays_per_side": a.N,
                "element_spacing": a.element_spacing,
                "dislocation_budget": a.dislocation_budget,
                "frequency_hz": a.frequency,
                "structure": a.structure_kind.value,
            },
            "optimizer": {"algorithm": self.algorithm, "iba": _jsonable(iba), "pso": _jsonable(pso)},
            "pattern": dataclasses.asdict(self.pattern),
            "steering_deg": list(self.steering_deg),
            "steerings_deg": [list(s) for s in self.steerings_deg],
            "frequencies_hz": list(self.frequencies_hz),
            "dislocations": list(self.dislocations),
            "sweep_aperture": self.sweep_aperture,
            "structures": [s.value for s in self.structures],
            "redundancy_resolution": self.redundancy_resolution,
            "optimize_before_redundancy": self.optimize_before_redundancy,
            "seed": self.seed,
            "repetitions": self.repetitions,
        }


def _jsonable(d: Dict[str, Any]) -> Dict[str, Any]:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


_TOP_KEYS = {
    "recipe", "array", "optimizer", "pattern", "steering_deg", "steerings_deg", "frequencies_hz",
    "dislocations", "sweep_aperture", "structures", "redundancy_resolution",
    "optimize_before_redundancy", "seed", "repetitions", "output_dir", "threads",
}
_ARRAY_KEYS = {
    "elements_per_subarray_side", "subarrays_per_side", "element_spacing", "dislocation_budget",
    "frequency_hz", "structure", "aperture", "k_ratio",
}
_RANGE_FIELDS = {
    "frequency_range", "loudness_range", "initial_pulse_rate_range", "velocity_bound",
    "inertia_range", "compensation_range",
}


def _check_keys(obj: Any, allowed: set, path: str) -> Dict[str, Any]:
    if not isinstance(obj, dict):
        raise ConfigError(path, "must be an object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(_join(path, key), "unknown key")
    return obj


def _join(path: str, key: Any) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _number(value: Any, path: str, *, minimum: Optional[float] = None, exclusive: bool = False,
            integer: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"must be a number, got {json.dumps(value)}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if integer and int(value) != value:
        raise ConfigError(path, "must be an integer")
    if minimum is not None:
        if exclusive and not value > minimum:
            raise ConfigError(path, f"must be > {minimum}")
        if not exclusive and value < minimum:
            raise ConfigError(path, f"must be >= {minimum}")
    return int(value) if integer else float(value)


def _bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(path, "must be true or false")
    return value


def _list(value: Any, path: str) -> List[Any]:
    if not isinstance(value, list):
        raise ConfigError(path, "must be a list")
    return value


def _parse_array(raw: Any) -> ArrayConfig:
    path = "array"
    a = _check_keys(raw, _ARRAY_KEYS, path)
    for key in ("elements_per_subarray_side", "subarrays_per_side", "structure"):
        if key not in a:
            raise ConfigError(_join(path, key), "required field missing")
    M = _number(a["elements_per_subarray_side"], _join(path, "elements_per_subarray_side"), minimum=1, integer=True)
    N = _number(a["subarrays_per_side"], _join(path, "subarrays_per_side"), minimum=1, integer=True)
    if "aperture" in a or "k_ratio" in a:
        if "element_spacing" in a or "dislocation_budget" in a:
            raise ConfigError(path, "give either aperture + k_ratio or element_spacing + dislocation_budget")
        for key in ("aperture", "k_ratio"):
            if key not in a:
                raise ConfigError(_join(path, key), "required field missing")
        aperture = _number(a["aperture"], _join(path, "aperture"), minimum=0, exclusive=True)
        k = _number(a["k_ratio"], _join(path, "k_ratio"), minimum=0)
        d = aperture / (N * (M + k))
        ds = k * d
    else:
        for key in ("element_spacing", "dislocation_budget"):
            if key not in a:
                raise ConfigError(_join(path, key), "required field missing")
        d = _number(a["element_spacing"], _join(path, "element_spacing"), minimum=0.5)
        ds = _number(a["dislocation_budget"], _join(path, "dislocation_budget"), minimum=0)
    freq = _number(a.get("frequency_hz", 10e9), _join(path, "frequency_hz"), minimum=0, exclusive=True)
    structure = a["structure"]
    if not isinstance(structure, str) or not structure:
        raise ConfigError(_join(path, "structure"), "must be one of Uniform, DSUE, USRE, DSRE")
    try:
        kind = StructureKind.parse(structure)
        return ArrayConfig(M, N, d, ds, freq, kind)
    except GeometryError as exc:
        field_path = _join(path, "structure") if "structure kind" in str(exc) else path
        raise ConfigError(field_path, str(exc)) from None


def _parse_params(raw: Any, cls, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls) if f.name != "seed"}
    _check_keys(raw, set(fields), path)
    kwargs = {}
    for key, value in raw.items():
        p = _join(path, key)
        default = fields[key].default
        if key in _RANGE_FIELDS:
            pair = _list(value, p)
            if len(pair) != 2:
                raise ConfigError(p, "must be a [low, high] pair")
            kwargs[key] = tuple(_number(x, _join(p, i)) for i, x in enumerate(pair))
        elif value is None and key in ("inertia", "step_scale"):
            kwargs[key] = None
        elif isinstance(default, int) and not isinstance(default, bool):
            kwargs[key] = _number(value, p, integer=True)
        else:
            kwargs[key] = _number(value, p)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _angle_pair(value: Any, path: str) -> Tuple[float, float]:
    pair = _list(value, path)
    if len(pair) != 2:
        raise ConfigError(path, "must be a [theta_deg, phi_deg] pair")
    theta = _number(pair[0], _join(path, 0), minimum=0)
    if theta > 90:
        raise ConfigError(_join(path, 0), "theta must be <= 90 degrees")
    return theta, _number(pair[1], _join(path, 1))


def parse_config(data: Any) -> ExperimentSpec:
    """Validate already-decoded JSON data."""
    top = _check_keys(data, _TOP_KEYS, "")
    recipe_raw = top.get("recipe")
    if recipe_raw in (None, ""):
        raise ConfigError("recipe", "required field missing or empty")
    try:
        recipe = Recipe(recipe_raw)
    except ValueError:
        raise ConfigError("recipe", f"must be one of {', '.join(r.value for r in Recipe)}") from None
    if "array" not in top:
        raise ConfigError("array", "required field missing")
    array = _parse_array(top["array"])

    kwargs: Dict[str, Any] = {"recipe": recipe, "array": array}

    opt = _check_keys(top.get("optimizer", {}), {"algorithm", "iba", "pso"}, "optimizer")
    algorithm = opt.get("algorithm", "iba")
    if algorithm not in ("iba", "pso"):
        raise ConfigError("optimizer.algorithm", "must be 'iba' or 'pso'")
    kwargs["algorithm"] = algorithm
    kwargs["iba"] = _parse_params(opt.get("iba", {}), IbaParams, "optimizer.iba")
    kwargs["pso"] = _parse_params(opt.get("pso", {}), PsoParams, "optimizer.pso")

    pat = _check_keys(top.get("pattern", {}), {f.name for f in dataclasses.fields(PatternSettings)}, "pattern")
    pkw: Dict[str, Any] = {}
    for key in ("fit_samples_per_beamwidth", "report_samples_per_beamwidth"):
        if key in pat:
            pkw[key] = _number(pat[key], _join("pattern", key), minimum=0, exclusive=True)
    if pat.get("mask_radius") is not None:
        pkw["mask_radius"] = _number(pat["mask_radius"], "pattern.mask_radius", minimum=0, exclusive=True)
    if "write_pattern" in pat:
        pkw["write_pattern"] = _bool(pat["write_pattern"], "pattern.write_pattern")
    kwargs["pattern"] = PatternSettings(**pkw)

    if "steering_deg" in top:
        kwargs["steering_deg"] = _angle_pair(top["steering_deg"], "steering_deg")
    if "steerings_deg" in top:
        items = _list(top["steerings_deg"], "steerings_deg")
        kwargs["steerings_deg"] = tuple(_angle_pair(s, _join("steerings_deg", i)) for i, s in enumerate(items))
    if "frequencies_hz" in top:
        items = _list(top["frequencies_hz"], "frequencies_hz")
        kwargs["frequencies_hz"] = tuple(
            _number(f, _join("frequencies_hz", i), minimum=0, exclusive=True) for i, f in enumerate(items)
        )
    if "dislocations" in top:
        items = _list(top["dislocations"], "dislocations")
        kwargs["dislocations"] = tuple(_number(x, _join("dislocations", i), minimum=0) for i, x in enumerate(items))
    if top.get("sweep_aperture") is not None:
        kwargs["sweep_aperture"] = _number(top["sweep_aperture"], "sweep_aperture", minimum=0, exclusive=True)
    if "structures" in top:
        items = _list(top["structures"], "structures")
        kinds = []
        for i, s in enumerate(items):
            try:
                kinds.append(StructureKind.parse(s))
            except GeometryError as exc:
                raise ConfigError(_join("structures", i), str(exc)) from None
        kwargs["structures"] = tuple(kinds)
    if "redundancy_resolution" in top:
        kwargs["redundancy_resolution"] = _number(
            top["redundancy_resolution"], "redundancy_resolution", minimum=0, exclusive=True
        )
    if "optimize_before_redundancy" in top:
        kwargs["optimize_before_redundancy"] = _bool(top["optimize_before_redundancy"], "optimize_before_redundancy")
    if "seed" in top:
        kwargs["seed"] = _number(top["seed"], "seed", minimum=0, integer=True)
    if "repetitions" in top:
        kwargs["repetitions"] = _number(top["repetitions"], "repetitions", minimum=1, integer=True)
    if "output_dir" in top:
        if not isinstance(top["output_dir"], str) or not top["output_dir"]:
            raise ConfigError("output_dir", "must be a non-empty string")
        kwargs["output_dir"] = top["output_dir"]
    if "threads" in top:
        kwargs["threads"] = _number(top["threads"], "threads", minimum=1, integer=True)

    spec = ExperimentSpec(**kwargs)
    _check_recipe_fields(spec)
    return spec


def _check_recipe_fields(spec: ExperimentSpec) -> None:
    if spec.recipe is Recipe.FREQUENCY_SWEEP and not spec.frequencies_hz:
        raise ConfigError("frequencies_hz", "required for frequency_sweep")
    if spec.recipe is Recipe.DISLOCATION_SWEEP:
        if not spec.dislocations:
            raise ConfigError("dislocations", "required for dislocation_sweep")
        if spec.sweep_aperture is not None:
            a = spec.array
            for i, ds in enumerate(spec.dislocations):
                d = (spec.sweep_aperture / a.N - ds) / a.M
                if d < 0.5:
                    raise ConfigError(_join("dislocations", i), f"leaves element spacing {d:.4g} < 0.5 at the sweep aperture")
    if spec.recipe in (Recipe.STRUCTURE_COMPARISON, Recipe.DISLOCATION_SWEEP) and not spec.structures:
        raise ConfigError("structures", "must list at least one structure")
    if spec.recipe is Recipe.SCAN_SWEEP and not spec.steerings_deg:
        raise ConfigError("steerings_deg", "must list at least one steering")


def validate_config(text: str) -> ExperimentSpec:
    """Parse and validate JSON config text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(data)


def with_overrides(spec: ExperimentSpec, **overrides: Any) -> ExperimentSpec:
    clean = {k: v for k, v in overrides.items() if v is not None}
    if "seed" in clean and clean["seed"] < 0:
        raise ConfigError("seed", "must be >= 0")
    if "threads" in clean and clean["threads"] < 1:
        raise ConfigError("threads", "must be >= 1")
    return dataclasses.replace(spec, **clean)
