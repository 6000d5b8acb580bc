"""Experiment configuration: JSON loading, validation, canonical hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .drivers import DriverSpec
from .fibers import GridSpec
from .spectrum import SpectrumConfig

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "config_hash"]

EXPERIMENTS = ("spectrum", "compare", "converge", "oracle", "bounds")


class ConfigError(ValueError):
    """Invalid configuration; message carries the offending field path."""


@dataclass
class ExperimentConfig:
    experiment: str
    driver: DriverSpec
    grid: GridSpec
    spectrum: SpectrumConfig
    fiber: str = "continuous"
    compare_tolerances: dict = field(default_factory=dict)
    converge_factors: tuple[int, ...] = (1, 2, 4)
    oracle_count: int = 4
    oracle_tolerance: float = 1e-3
    bounds_horizon: int = 200
    bounds_samples: int = 50
    bounds_slope_tol: float = 1e-2
    output_dir: str = "out"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}: missing required field")
    return obj[key]


def _as_positive_int(value, path: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        raise ConfigError(f"{path}: must be a positive integer, got {value!r}")
    return value


def _parse_driver(obj: dict, path: str = "driver") -> DriverSpec:
    kind = _need(obj, "kind", path)
    if kind not in ("constant", "quasi_periodic", "telegraph"):
        raise ConfigError(f"{path}.kind: unknown driver kind {kind!r}")
    dimension = _as_positive_int(_need(obj, "dimension", path), f"{path}.dimension")
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"{path}.seed: must be an integer")
    p = obj.get("p", 2.0)
    if not isinstance(p, (int, float)) or not (1.0 < float(p) < np.inf):
        raise ConfigError(f"{path}.p: must be a number in (1, inf)")

    params: dict = {}
    try:
        if kind == "constant":
            params["A0"] = np.asarray(_need(obj, "A0", path), dtype=float)
            params["B0"] = np.asarray(_need(obj, "B0", path), dtype=float)
        elif kind == "quasi_periodic":
            for name in ("freqs", "a0", "b0", "a_cos", "a_sin", "b_cos", "b_sin"):
                params[name] = np.asarray(_need(obj, name, path), dtype=float)
        else:
            states_raw = _need(obj, "states", path)
            states = []
            for i, st in enumerate(states_raw):
                if not isinstance(st, dict) or "A" not in st or "B" not in st:
                    raise ConfigError(f"{path}.states[{i}]: needs matrices 'A' and 'B'")
                states.append(
                    (np.asarray(st["A"], dtype=float), np.asarray(st["B"], dtype=float))
                )
            params["states"] = states
            params["generator"] = np.asarray(_need(obj, "generator", path), dtype=float)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed matrix data ({exc})") from exc

    try:
        return DriverSpec(kind, dimension, params, seed=seed, p=float(p))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_grid(obj: dict) -> GridSpec:
    M = _need(obj, "M", "grid")
    if not isinstance(M, int) or isinstance(M, bool) or M < 4:
        raise ConfigError(f"grid.M: must be an integer >= 4, got {M!r}")
    return GridSpec(M)


def _parse_spectrum(obj: dict) -> SpectrumConfig:
    kwargs = {
        "k": _as_positive_int(_need(obj, "k", "spectrum"), "spectrum.k"),
        "horizon": _as_positive_int(_need(obj, "horizon", "spectrum"), "spectrum.horizon"),
    }
    for name in ("renorm_every", "transient", "push_steps", "filtration_steps"):
        if name in obj and obj[name] is not None:
            kwargs[name] = _as_positive_int(obj[name], f"spectrum.{name}")
    for name in ("gap_tol", "floor_rate"):
        if name in obj and obj[name] is not None:
            if not isinstance(obj[name], (int, float)):
                raise ConfigError(f"spectrum.{name}: must be a number")
            kwargs[name] = float(obj[name])
    if "sample_times" in obj:
        st = obj["sample_times"]
        if not isinstance(st, list) or not all(isinstance(x, int) and x >= 0 for x in st):
            raise ConfigError("spectrum.sample_times: must be a list of nonnegative integers")
        kwargs["sample_times"] = tuple(st)
    if "probe_seed" in obj and obj["probe_seed"] is not None:
        if not isinstance(obj["probe_seed"], int):
            raise ConfigError("spectrum.probe_seed: must be an integer")
        kwargs["probe_seed"] = obj["probe_seed"]
    try:
        return SpectrumConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"spectrum: {exc}") from exc


def parse_config(raw: dict, seed_override: int | None = None) -> ExperimentConfig:
    """Build a validated ExperimentConfig from a JSON document."""
    if not isinstance(raw, dict):
        raise ConfigError("top level: must be a JSON object")
    raw = json.loads(json.dumps(raw))  # deep copy, keeps raw JSON-typed
    experiment = _need(raw, "experiment", "top level")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: must be one of {EXPERIMENTS}, got {experiment!r}")
    if seed_override is not None:
        raw.setdefault("driver", {})
        raw["driver"]["seed"] = seed_override

    driver = _parse_driver(_need(raw, "driver", "top level"))
    grid = _parse_grid(_need(raw, "grid", "top level"))
    spectrum = _parse_spectrum(_need(raw, "spectrum", "top level"))

    fiber = raw.get("fiber", "continuous")
    if fiber not in ("continuous", "lp"):
        raise ConfigError(f"fiber: must be 'continuous' or 'lp', got {fiber!r}")

    cfg = ExperimentConfig(
        experiment=experiment,
        driver=driver,
        grid=grid,
        spectrum=spectrum,
        fiber=fiber,
        output_dir=raw.get("output", {}).get("dir", "out"),
        raw=raw,
    )

    if "compare" in raw:
        tols = raw["compare"].get("tolerances", {})
        if not isinstance(tols, dict):
            raise ConfigError("compare.tolerances: must be an object")
        for key, val in tols.items():
            if not isinstance(val, (int, float)) or val <= 0:
                raise ConfigError(f"compare.tolerances.{key}: must be a positive number")
        cfg.compare_tolerances = {k: float(v) for k, v in tols.items()}
    if "converge" in raw:
        factors = raw["converge"].get("factors", [1, 2, 4])
        if (
            not isinstance(factors, list)
            or not factors
            or not all(isinstance(x, int) and x >= 1 for x in factors)
        ):
            raise ConfigError("converge.factors: must be a nonempty list of integers >= 1")
        cfg.converge_factors = tuple(factors)
    if "oracle" in raw:
        cfg.oracle_count = _as_positive_int(raw["oracle"].get("count", 4), "oracle.count")
        tol = raw["oracle"].get("tolerance", 1e-3)
        if not isinstance(tol, (int, float)) or tol <= 0:
            raise ConfigError("oracle.tolerance: must be a positive number")
        cfg.oracle_tolerance = float(tol)
    if "bounds" in raw:
        b = raw["bounds"]
        cfg.bounds_horizon = _as_positive_int(b.get("horizon", 200), "bounds.horizon")
        cfg.bounds_samples = _as_positive_int(b.get("samples", 50), "bounds.samples")
        tol = b.get("slope_tol", 1e-2)
        if not isinstance(tol, (int, float)) or tol <= 0:
            raise ConfigError("bounds.slope_tol: must be a positive number")
        cfg.bounds_slope_tol = float(tol)
    return cfg


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and validate a configuration file; errors carry line positions."""
    with open(path) as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return parse_config(raw, seed_override=seed_override)
