"""Experiment configuration and run manifests.

A run is described by one JSON document; command-line flags may override
top-level scalars. Every key is validated up front and unknown keys are
rejected by name, so a typo cannot silently change an experiment.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .dynamics import InitialSet, RadiusLaw
from .geometry import Ball

OUTPUT_DIR_ENV = "OUTBURST_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid or unknown configuration; the message names the offending key."""


_KNOWN_KEYS = {
    "dimension",
    "radius_law",
    "initial_set",
    "stepper",
    "seed",
    "replications",
    "distances",
    "direction",
    "epsilon",
    "t_max",
    "n_max",
    "net_resolution",
    "target_rel_error",
    "event_cap",
    "mu",
    "mu_file",
    "snapshot_times",
    "workers",
    "output_dir",
}


@dataclass
class ExperimentConfig:
    seed: int
    dimension: int = 2
    radius_law: dict = field(default_factory=lambda: {"kind": "deterministic", "r": 1.0})
    initial_set: dict | None = None
    stepper: str = "thinning"
    replications: int = 1
    distances: list[float] | None = None
    direction: list[float] | None = None
    epsilon: float | None = None
    t_max: float | None = None
    n_max: int | None = None
    net_resolution: float | None = None
    target_rel_error: float = 0.01
    event_cap: int = 10**6
    mu: float | None = None
    mu_file: str | None = None
    snapshot_times: list[float] | None = None
    workers: int = 1
    output_dir: str | None = None

    def law(self) -> RadiusLaw:
        return parse_radius_law(self.radius_law)

    def initial(self) -> InitialSet:
        if self.initial_set is None:
            gamma = self.law().gamma
            return InitialSet.ball((0.0,) * self.dimension, gamma)
        return parse_initial_set(self.initial_set)

    def resolved_output_dir(self) -> Path:
        if self.output_dir is not None:
            return Path(self.output_dir)
        return Path(os.environ.get(OUTPUT_DIR_ENV, "out"))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "seed": self.seed,
            "dimension": self.dimension,
            "radius_law": self.radius_law,
            "stepper": self.stepper,
            "replications": self.replications,
            "target_rel_error": self.target_rel_error,
            "event_cap": self.event_cap,
            "workers": self.workers,
        }
        for key in (
            "initial_set",
            "distances",
            "direction",
            "epsilon",
            "t_max",
            "n_max",
            "net_resolution",
            "mu",
            "mu_file",
            "snapshot_times",
            "output_dir",
        ):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


def parse_radius_law(spec: dict) -> RadiusLaw:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("radius_law: expected an object with a 'kind' key")
    kind = spec["kind"]
    try:
        if kind == "deterministic":
            _require_keys(spec, {"kind", "r"}, "radius_law")
            return RadiusLaw.deterministic(spec["r"])
        if kind == "uniform_interval":
            _require_keys(spec, {"kind", "a", "b"}, "radius_law")
            return RadiusLaw.uniform_interval(spec["a"], spec["b"])
        if kind == "finite_discrete":
            _require_keys(spec, {"kind", "atoms"}, "radius_law")
            return RadiusLaw.finite_discrete([(r, p) for r, p in spec["atoms"]])
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"radius_law: {exc}") from exc
    raise ConfigError(f"radius_law.kind: unknown kind {kind!r}")


def parse_initial_set(spec: dict) -> InitialSet:
    if not isinstance(spec, dict) or "shape" not in spec:
        raise ConfigError("initial_set: expected an object with a 'shape' key")
    shape = spec["shape"]
    try:
        if shape == "ball":
            _require_keys(spec, {"shape", "center", "radius"}, "initial_set")
            return InitialSet.ball(spec["center"], spec["radius"])
        if shape == "box":
            _require_keys(spec, {"shape", "lo", "hi"}, "initial_set")
            return InitialSet.box(spec["lo"], spec["hi"])
        if shape == "ball_list":
            _require_keys(spec, {"shape", "balls"}, "initial_set")
            return InitialSet.ball_list(
                [Ball(tuple(b[:-1]), b[-1]) for b in spec["balls"]]
            )
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"initial_set: {exc}") from exc
    raise ConfigError(f"initial_set.shape: unknown shape {shape!r}")


def _require_keys(spec: dict, allowed: set[str], prefix: str) -> None:
    for key in spec:
        if key not in allowed:
            raise ConfigError(f"{prefix}: unknown key {key!r}")
    for key in allowed - set(spec):
        raise ConfigError(f"{prefix}: missing key {key!r}")


def _check_type(name: str, value, types, predicate=None, describe: str = "") -> None:
    if not isinstance(value, types) or isinstance(value, bool):
        raise ConfigError(f"{name}: expected {describe or types}, got {value!r}")
    if predicate is not None and not predicate(value):
        raise ConfigError(f"{name}: invalid value {value!r} ({describe})")


def load_config(data: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a raw config mapping (e.g. parsed JSON) into an
    ExperimentConfig; `overrides` wins on top-level scalars."""
    if not isinstance(data, dict):
        raise ConfigError(f"config root: expected an object, got {type(data).__name__}")
    if "config" in data and "engine_version" in data:
        data = data["config"]  # a manifest replays its own config echo
    merged = dict(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    for key in merged:
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    if "seed" not in merged:
        raise ConfigError("missing required config key 'seed'")
    _check_type("seed", merged["seed"], int, describe="an integer")

    cfg = ExperimentConfig(seed=merged["seed"])
    for key, value in merged.items():
        setattr(cfg, key, value)

    _check_type("dimension", cfg.dimension, int, lambda v: v >= 1, "integer >= 1")
    _check_type("replications", cfg.replications, int, lambda v: v >= 1, "integer >= 1")
    _check_type("workers", cfg.workers, int, lambda v: v >= 1, "integer >= 1")
    _check_type("event_cap", cfg.event_cap, int, lambda v: v >= 1, "integer >= 1")
    _check_type(
        "target_rel_error", cfg.target_rel_error, (int, float), lambda v: v > 0, "positive number"
    )
    if cfg.stepper not in ("rate", "thinning"):
        raise ConfigError(f"stepper: expected 'rate' or 'thinning', got {cfg.stepper!r}")
    for key in ("epsilon", "t_max", "net_resolution", "mu"):
        value = getattr(cfg, key)
        if value is not None:
            _check_type(key, value, (int, float), lambda v: v > 0, "positive number")
            setattr(cfg, key, float(value))
    if cfg.n_max is not None:
        _check_type("n_max", cfg.n_max, int, lambda v: v >= 0, "integer >= 0")
    if cfg.distances is not None:
        if not isinstance(cfg.distances, list) or not all(
            isinstance(v, (int, float)) and v > 0 for v in cfg.distances
        ):
            raise ConfigError(f"distances: expected a list of positive numbers, got {cfg.distances!r}")
        cfg.distances = [float(v) for v in cfg.distances]
    if cfg.direction is not None:
        if (
            not isinstance(cfg.direction, list)
            or len(cfg.direction) != cfg.dimension
            or not all(isinstance(v, (int, float)) for v in cfg.direction)
            or not any(v != 0 for v in cfg.direction)
        ):
            raise ConfigError(
                f"direction: expected a nonzero list of {cfg.dimension} numbers, got {cfg.direction!r}"
            )
        cfg.direction = [float(v) for v in cfg.direction]
    if cfg.snapshot_times is not None:
        if not isinstance(cfg.snapshot_times, list) or not all(
            isinstance(v, (int, float)) and v >= 0 for v in cfg.snapshot_times
        ):
            raise ConfigError(
                f"snapshot_times: expected a list of nonnegative numbers, got {cfg.snapshot_times!r}"
            )
        cfg.snapshot_times = [float(v) for v in cfg.snapshot_times]
    if cfg.mu_file is not None and not isinstance(cfg.mu_file, str):
        raise ConfigError(f"mu_file: expected a path string, got {cfg.mu_file!r}")
    if cfg.output_dir is not None and not isinstance(cfg.output_dir, str):
        raise ConfigError(f"output_dir: expected a path string, got {cfg.output_dir!r}")
    cfg.law()  # validates radius_law
    cfg.initial()  # validates initial_set
    return cfg


def load_config_file(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return load_config(data, overrides)


@dataclass
class RunManifest:
    """Record of one command invocation, sufficient to rerun it bit-exactly."""

    command: str
    config: dict
    replication_seeds: list[int]
    artifacts: list[str]
    started_at: str
    finished_at: str
    engine_version: str

    def to_dict(self) -> dict:
        return {
            "engine_version": self.engine_version,
            "command": self.command,
            "config": self.config,
            "replication_seeds": self.replication_seeds,
            "artifacts": self.artifacts,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
