"""Scenario configuration: dataclasses, validation, and JSON round-trip.

Config files are plain JSON whose keys mirror the dataclass fields below.
A node's chi may be null, which resolves to 1 / (1 + dt): covariance growth
of one sample interval per missed scan.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from importlib import resources
from typing import Optional

from .fusion import NodeProfile

__all__ = [
    "ConfigError",
    "NodeSpec",
    "ProcessorSpec",
    "TargetSpec",
    "ScenarioConfig",
    "NetworkTopology",
    "load_config",
    "save_config",
    "builtin_config_path",
]

FUSION_METHODS = ("ci", "modci", "bci", "mbci", "both")
TRACKERS = ("rbpf", "rbmcda")
COUNT_MODES = ("map", "mode")


class ConfigError(ValueError):
    """Invalid scenario configuration; message names the offending field."""


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class NodeSpec:
    node_id: int
    p_detect: float
    chi: Optional[float] = None
    clutter_density: float = 0.0

    def profile(self, dt: float) -> NodeProfile:
        chi = self.chi if self.chi is not None else 1.0 / (1.0 + dt)
        return NodeProfile(self.p_detect, chi, self.clutter_density)


@dataclass(frozen=True)
class ProcessorSpec:
    proc_id: int
    inputs: tuple

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(int(i) for i in self.inputs))


@dataclass(frozen=True)
class TargetSpec:
    birth: float
    death: float
    initial_state: tuple

    def __post_init__(self):
        object.__setattr__(self, "initial_state", tuple(float(x) for x in self.initial_state))


@dataclass(frozen=True)
class NetworkTopology:
    """Bipartite wiring: monitoring nodes feed processing nodes."""

    monitoring: tuple  # NodeSpec
    processing: tuple  # ProcessorSpec

    def __post_init__(self):
        node_ids = [n.node_id for n in self.monitoring]
        _require(len(set(node_ids)) == len(node_ids), "nodes: duplicate node_id")
        proc_ids = [p.proc_id for p in self.processing]
        _require(len(set(proc_ids)) == len(proc_ids), "processors: duplicate proc_id")
        _require(
            not set(node_ids) & set(proc_ids),
            "processors: proc_id collides with a node_id",
        )
        for proc in self.processing:
            _require(
                len(proc.inputs) >= 2,
                f"processors: processor {proc.proc_id} needs at least 2 monitoring inputs",
            )
            unknown = set(proc.inputs) - set(node_ids)
            _require(
                not unknown,
                f"processors: processor {proc.proc_id} references unknown nodes {sorted(unknown)}",
            )


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float
    dt: float
    nodes: tuple  # NodeSpec
    processors: tuple  # ProcessorSpec
    targets: tuple  # TargetSpec
    turn_rate: float = 0.5
    diffusion: float = 0.1
    meas_noise: float = 0.05
    n_particles: int = 20
    tracker: str = "rbpf"
    fusion_method: str = "modci"
    association_threshold: Optional[float] = None
    region: Optional[tuple] = None  # ((xmin, xmax), (ymin, ymax))
    region_padding: float = 0.2
    clutter_is_rate: bool = True
    init_mean: Optional[tuple] = None
    init_cov: Optional[tuple] = None
    p_birth: float = 0.01
    lifetime_shape: float = 2.0
    lifetime_scale: float = 0.5
    max_targets: int = 20
    birth_velocity_var: float = 1.0
    count_mode: str = "map"
    resample_threshold: float = 0.5
    markov_order: int = 1
    assoc_prior_matrix: Optional[tuple] = None
    baseline_kf: bool = False

    def __post_init__(self):
        _require(self.dt > 0, "dt: must be positive")
        _require(self.duration > self.dt, "duration: must exceed dt")
        _require(self.diffusion >= 0, "diffusion: must be nonnegative")
        _require(self.meas_noise > 0, "meas_noise: must be positive")
        _require(self.n_particles >= 1, "n_particles: must be at least 1")
        _require(self.tracker in TRACKERS, f"tracker: must be one of {TRACKERS}")
        _require(
            self.fusion_method in FUSION_METHODS,
            f"fusion_method: must be one of {FUSION_METHODS}",
        )
        _require(self.count_mode in COUNT_MODES, f"count_mode: must be one of {COUNT_MODES}")
        _require(len(self.nodes) >= 1, "nodes: at least one monitoring node required")
        _require(0 <= self.p_birth <= 1, "p_birth: must lie in [0, 1]")
        _require(self.lifetime_shape > 0, "lifetime_shape: must be positive")
        _require(self.lifetime_scale > 0, "lifetime_scale: must be positive")
        _require(self.max_targets >= 1, "max_targets: must be at least 1")
        _require(self.birth_velocity_var > 0, "birth_velocity_var: must be positive")
        _require(
            0 < self.resample_threshold <= 1,
            "resample_threshold: must lie in (0, 1]",
        )
        _require(self.markov_order >= 0, "markov_order: must be nonnegative")
        if self.association_threshold is not None:
            _require(self.association_threshold > 0, "association_threshold: must be positive")
        for node in self.nodes:
            _require(
                0 <= node.p_detect <= 1,
                f"nodes: node {node.node_id} p_detect must lie in [0, 1]",
            )
            _require(
                node.chi is None or 0 < node.chi <= 1,
                f"nodes: node {node.node_id} chi must lie in (0, 1]",
            )
            _require(
                node.clutter_density >= 0,
                f"nodes: node {node.node_id} clutter_density must be nonnegative",
            )
        for i, tgt in enumerate(self.targets):
            _require(
                0 <= tgt.birth < tgt.death <= self.duration,
                f"targets: target {i} needs 0 <= birth < death <= duration",
            )
            _require(
                len(tgt.initial_state) == 4,
                f"targets: target {i} initial_state must have 4 entries",
            )
        if self.region is not None:
            _require(
                len(self.region) == 2 and all(len(b) == 2 for b in self.region),
                "region: must be ((xmin, xmax), (ymin, ymax))",
            )
            _require(
                all(b[1] > b[0] for b in self.region),
                "region: upper bounds must exceed lower bounds",
            )
        if self.init_mean is not None:
            _require(len(self.init_mean) == 4, "init_mean: must have 4 entries")
        # Topology invariants (>= 2 inputs per processor, known node ids).
        NetworkTopology(self.nodes, self.processors)

    @property
    def num_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def topology(self) -> NetworkTopology:
        return NetworkTopology(self.nodes, self.processors)

    def node(self, node_id: int) -> NodeSpec:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(f"unknown node {node_id}")

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


def _tupled(value):
    if isinstance(value, (list, tuple)):
        return tuple(_tupled(v) for v in value)
    return value


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    known = set(ScenarioConfig.__dataclass_fields__)
    unknown = set(data) - known
    _require(not unknown, f"unknown config fields: {sorted(unknown)}")
    for name in ("duration", "dt", "nodes", "processors", "targets"):
        _require(name in data, f"{name}: missing required field")
    kwargs = dict(data)
    try:
        kwargs["nodes"] = tuple(NodeSpec(**n) for n in data["nodes"])
        kwargs["processors"] = tuple(ProcessorSpec(**p) for p in data["processors"])
        kwargs["targets"] = tuple(TargetSpec(**t) for t in data["targets"])
    except TypeError as exc:
        raise ConfigError(f"nodes/processors/targets: {exc}") from exc
    for name in ("region", "init_mean", "init_cov", "assoc_prior_matrix"):
        if kwargs.get(name) is not None:
            kwargs[name] = _tupled(kwargs[name])
    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    """Parse a scenario config JSON file; raises ConfigError with the field
    (or JSON line) that failed."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    return config_from_dict(data)


def save_config(config: ScenarioConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def builtin_config_path(name: str):
    """Filesystem path of a shipped scenario config ('one_target' or
    'multi_target')."""
    candidate = resources.files("cifuse").joinpath("configs", f"{name}.json")
    if not candidate.is_file():
        raise ConfigError(f"no builtin config named {name!r}")
    return candidate
