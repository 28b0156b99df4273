"""
JSON run configuration.

Example::

    {
      "schema": "surprise-index/1",
      "model": {"type": "gps", "Sigma0": [[1.0, 0.2], [0.2, 0.8]], "R": [[0.6, 0.0], [0.0, 0.9]]},
      "horizon": 50,
      "truth": {"R_scale": 1.0, "P0_scale": 1.0},
      "controller": {"kind": "none"},
      "runs": 100,
      "seed": 7,
      "sweep": {"R_scale": [0.5, 0.75, 1.0, 1.5, 2.0]}
    }

Model types: ``gps``, ``linear``, ``static``, ``duffing``, ``cr3bp``.
"""
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .harness import ControllerSpec, Scenario
from .lgm import LinearSystem
from .models import (
    EARTH_MOON_MASS_RATIO,
    GPS_MU0,
    GPS_R,
    GPS_SIGMA0,
    SUN_EARTH_MASS_RATIO,
    cr3bp_model,
    duffing_model,
    gps_system,
    static_platform,
)

__all__ = ["SCHEMA", "ConfigError", "RunConfig", "load_config", "parse_config", "config_hash"]

SCHEMA = "surprise-index/1"
MODEL_TYPES = ("gps", "linear", "static", "duffing", "cr3bp")
SWEEP_KEYS = ("R_scale", "P0_scale")
MASS_RATIOS = {"earth-moon": EARTH_MOON_MASS_RATIO, "sun-earth": SUN_EARTH_MASS_RATIO}
_TOP_KEYS = {"schema", "model", "horizon", "truth", "controller", "nominal_controls",
             "disable_control_at", "measurements", "runs", "seed", "workers", "kappa", "sweep"}


class ConfigError(ValueError):
    """Unparseable configuration, missing or mistyped fields."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True, eq=False)
class RunConfig:
    scenario: Scenario
    sweep_key: Optional[str]
    sweep_values: Tuple[float, ...]
    raw: Dict[str, Any]

    @property
    def hash(self):
        return config_hash(self.raw)

    def scenarios(self):
        """``(label, scenario)`` pairs; a single unlabeled entry without a sweep."""
        if self.sweep_key is None:
            return [(None, self.scenario)]
        return [(f"{self.sweep_key}_{v!r}", self.scenario.replace(**{self.sweep_key: v}))
                for v in self.sweep_values]


def config_hash(raw):
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


class _Reader:
    """Collects every missing/mistyped field before failing."""

    def __init__(self):
        self.problems: List[str] = []

    def get(self, section, key, path, kind, required=False, default=None):
        if not isinstance(section, dict):
            return default
        if key not in section or section[key] is None:
            if required:
                self.problems.append(f"missing field {path}{key}")
            return default
        value = section[key]
        try:
            if kind == "array":
                arr = np.asarray(value, dtype=float)
                if arr.dtype == object:
                    raise ValueError
                return arr
            if kind == "int":
                if isinstance(value, bool) or int(value) != value:
                    raise ValueError
                return int(value)
            if kind == "float":
                if isinstance(value, bool):
                    raise ValueError
                return float(value)
            if kind == "str":
                if not isinstance(value, str):
                    raise ValueError
                return value
            if kind == "bool":
                if not isinstance(value, bool):
                    raise ValueError
                return value
            if kind == "dict":
                if not isinstance(value, dict):
                    raise ValueError
                return value
        except (TypeError, ValueError):
            self.problems.append(f"field {path}{key} must be of type {kind}, got {json.dumps(value)[:60]}")
            return default
        return value


def _build_model(rd, spec, horizon):
    kind = rd.get(spec, "type", "model.", "str", required=True)
    if kind is None:
        return None
    if kind not in MODEL_TYPES:
        rd.problems.append(f"field model.type must be one of {MODEL_TYPES}, got {kind!r}")
        return None
    g = lambda key, k="array", **kw: rd.get(spec, key, "model.", k, **kw)  # noqa: E731
    if kind == "gps":
        args = dict(mu0=g("mu0", default=GPS_MU0), Sigma0=g("Sigma0", default=GPS_SIGMA0), R=g("R", default=GPS_R))
        return None if rd.problems or horizon is None else gps_system(horizon, **args)
    if kind == "static":
        args = dict(mu0=g("mu0", default=GPS_MU0), Sigma0=g("Sigma0", default=GPS_SIGMA0),
                    R=g("R", default=GPS_R), dt=g("dt", "float", default=1.0))
        return None if rd.problems else static_platform(**args)
    if kind == "linear":
        args = {key: g(key, required=True) for key in ("F", "H", "R", "mu0", "P0")}
        args.update({key: g(key) for key in ("G", "u", "Gamma", "Q")})
        return None if rd.problems or horizon is None else LinearSystem(horizon=horizon, **args)
    if kind == "duffing":
        args = dict(mu0=g("mu0", default=(1.0, 0.0)), P0=g("P0"), R=g("R"),
                    dt=g("dt", "float", default=0.1), substeps=g("substeps", "int", default=10))
        return None if rd.problems else duffing_model(**args)
    ratio = spec.get("mass_ratio", "earth-moon")
    if isinstance(ratio, str):
        if ratio not in MASS_RATIOS:
            rd.problems.append(f"field model.mass_ratio must be a number or one of {sorted(MASS_RATIOS)}")
            return None
        ratio = MASS_RATIOS[ratio]
    else:
        ratio = g("mass_ratio", "float")
    args = dict(mass_ratio=ratio, mu0=g("mu0"), P0=g("P0"), R=g("R"), dt=g("dt", "float", default=0.02),
                substeps=g("substeps", "int", default=20), spatial=g("spatial", "bool", default=True))
    return None if rd.problems else cr3bp_model(**args)


def parse_config(raw, seed=None, workers=None) -> RunConfig:
    """
    Build a ``RunConfig`` from decoded JSON.

    Raises
    ------
    ConfigError
        Missing or mistyped fields (all of them are reported).
    DimensionError
        Arrays whose shapes do not fit together.
    ModelValidationError
        Model or scenario invariants violated (all of them are reported).
    """
    if not isinstance(raw, dict):
        raise ConfigError(["configuration must be a JSON object"])
    rd = _Reader()
    schema = rd.get(raw, "schema", "", "str", required=True)
    if schema is not None and schema != SCHEMA:
        rd.problems.append(f"field schema must be {SCHEMA!r}, got {schema!r}")
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        rd.problems.append(f"unknown top-level fields: {', '.join(unknown)}")
    horizon = rd.get(raw, "horizon", "", "int", required=True)
    model_spec = rd.get(raw, "model", "", "dict", required=True)
    truth = rd.get(raw, "truth", "", "dict", default={})
    ctrl = rd.get(raw, "controller", "", "dict", default={})
    sweep = rd.get(raw, "sweep", "", "dict")
    sweep_key, sweep_values = None, ()
    if sweep is not None:
        keys = [k for k in sweep if k in SWEEP_KEYS]
        if len(keys) != 1 or len(sweep) != 1:
            rd.problems.append(f"field sweep must have exactly one key out of {SWEEP_KEYS}")
        else:
            sweep_key = keys[0]
            vals = rd.get(sweep, sweep_key, "sweep.", "array", required=True)
            if vals is not None:
                sweep_values = tuple(float(v) for v in np.atleast_1d(vals))
    controller_args = dict(
        kind=rd.get(ctrl, "kind", "controller.", "str", default="none"),
        gain=rd.get(ctrl, "gain", "controller.", "array", default=np.array(0.0)),
        schedule=rd.get(ctrl, "schedule", "controller.", "array"),
        per_period=rd.get(ctrl, "per_period", "controller.", "int", default=15),
        period_steps=rd.get(ctrl, "period_steps", "controller.", "int"),
        lead_time=rd.get(ctrl, "lead_time", "controller.", "float"),
    )
    scenario_args = dict(
        R_scale=rd.get(truth, "R_scale", "truth.", "float", default=1.0),
        P0_scale=rd.get(truth, "P0_scale", "truth.", "float", default=1.0),
        nominal_controls=rd.get(raw, "nominal_controls", "", "array"),
        disable_control_at=rd.get(raw, "disable_control_at", "", "int"),
        n_measurements=rd.get(raw, "measurements", "", "int"),
        runs=rd.get(raw, "runs", "", "int", default=100),
        seed=rd.get(raw, "seed", "", "int", default=0),
        workers=rd.get(raw, "workers", "", "int", default=1),
        kappa=rd.get(raw, "kappa", "", "float"),
    )
    if rd.problems:
        raise ConfigError(rd.problems)
    model = _build_model(rd, model_spec, horizon)
    if rd.problems:
        raise ConfigError(rd.problems)

    raw = dict(raw)
    if seed is not None:
        scenario_args["seed"] = int(seed)
        raw["seed"] = int(seed)
    if workers is not None:
        scenario_args["workers"] = int(workers)
    gain = controller_args["gain"]
    controller_args["gain"] = float(gain) if gain.ndim == 0 else tuple(map(tuple, np.atleast_2d(gain)))
    if controller_args["schedule"] is not None:
        controller_args["schedule"] = tuple(int(s) for s in np.atleast_1d(controller_args["schedule"]))
    try:
        controller = ControllerSpec(**controller_args)
    except ValueError as exc:
        raise ConfigError([f"controller: {exc}"]) from exc
    scenario = Scenario(model, horizon=horizon, controller=controller, **scenario_args)
    for v in sweep_values:
        scenario.replace(**{sweep_key: v})
    # a --workers override changes scheduling only, so it is not hashed
    return RunConfig(scenario, sweep_key, sweep_values, raw)


def load_config(path, seed=None, workers=None) -> RunConfig:
    """Read and parse a JSON config file; decoding failures become ``ConfigError``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON in {path}: {exc}"]) from exc
    return parse_config(raw, seed=seed, workers=workers)
