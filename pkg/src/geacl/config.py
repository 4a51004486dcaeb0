"""Run configuration: strict JSON loading, dotted overrides, typed sections.

Unknown fields are rejected everywhere. Errors carry the dotted path and,
when the source text is known, the line where the offending field sits.
Times in fault and scenario sections are given in rounds.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import re
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

SCENARIOS = ("synthetic", "factory", "disaster", "walkthrough")
MODES = ("GossipAugmented", "BaselineDirect")
GOSSIP_MODES = ("Push", "Pull", "PushPull", "AntiEntropyOnly")


class ConfigError(ValueError):
    pass


# -- sections -----------------------------------------------------------------

@dataclass
class GossipSection:
    mode: str = "PushPull"
    fanout: int = 1
    round_len: int = 10
    suppression_k: int = 4
    delta_cap: int = 16
    critical_suppression_multiplier: int = 4
    repair_every: int = 10
    shuffle_len: int = 3
    view_capacity: int = 8


@dataclass
class FilterSection:
    weights: dict = field(default_factory=lambda: {"Critical": 8.0, "High": 4.0,
                                                   "Routine": 2.0, "Low": 1.0})
    gamma: float = 0.85
    ttl_rounds: dict = field(default_factory=lambda: {"Critical": 32, "High": 16,
                                                      "Routine": 8, "Low": 4})


@dataclass
class AdversarySpec:
    agent: int
    behavior: str = "injector"      # or "forger"
    key: str = "alarm/fabricated"
    value: list = field(default_factory=lambda: ["F", "line2", "alarm", "fire"])
    priority: str = "High"
    start_round: int = 1
    victim: Optional[int] = None    # forger: origin it impersonates


@dataclass
class TrustSection:
    signing: bool = False
    corroboration: bool = False
    k: int = 2
    applies_to: str = "High"
    timeout_rounds: int = 8
    reputation: bool = False
    reputation_bias: bool = False
    publish_every: int = 5
    adversaries: list[AdversarySpec] = field(default_factory=list)


@dataclass
class HealthSection:
    enabled: bool = False
    t_suspect: int = 5
    t_confirm: int = 10
    ttl_margin: int = 4


@dataclass
class NetworkSection:
    latency: int = 1
    lat_min: Optional[int] = None
    lat_max: Optional[int] = None
    drop_p: float = 0.0


@dataclass
class TopologySection:
    type: str = "complete"          # complete | random | grid | explicit
    p: Optional[float] = None
    width: Optional[int] = None
    height: Optional[int] = None
    comm_range: Optional[float] = None
    edges: Optional[list] = None


@dataclass
class PartitionSpec:
    start_round: int
    end_round: int
    blocks: list


@dataclass
class OutageSpec:
    start_round: int
    end_round: int
    edge: Optional[list] = None


@dataclass
class CrashSpec:
    round: int
    agent: int


@dataclass
class FaultSection:
    partitions: list[PartitionSpec] = field(default_factory=list)
    crashes: list[CrashSpec] = field(default_factory=list)
    link_outages: list[OutageSpec] = field(default_factory=list)


@dataclass
class InjectionSpec:
    round: int = 0
    agent: int = 0
    key: str = "x/0"
    value: list = field(default_factory=lambda: ["S", 1.0])
    priority: str = "Critical"
    ttl_rounds: Optional[int] = None


@dataclass
class BurstSpec:
    round: int = 0
    keys: int = 50
    ttl_rounds: int = 1000


@dataclass
class SyntheticSection:
    N: int = 64
    injections: list[InjectionSpec] = field(default_factory=lambda: [InjectionSpec()])
    burst: Optional[BurstSpec] = None
    stop: str = "converged"         # converged | quiescent | horizon
    extra_rounds: int = 0


@dataclass
class LoadShockSpec:
    round: int = 25
    agent: int = 0
    tasks: int = 30


@dataclass
class FactorySection:
    arrival_p: float = 0.3
    service_rate: float = 1.0
    speed: float = 100.0
    defect_round: int = 12
    workstation: str = "WS4"
    load_shock: Optional[LoadShockSpec] = field(default_factory=LoadShockSpec)
    poll_interval: int = 5
    coordinator: int = 3
    tre_window: int = 10
    horizon_rounds: int = 60


@dataclass
class DisasterSection:
    width: int = 20
    height: int = 20
    drones: int = 4
    robots: int = 6
    drone_speed: int = 2
    drone_range: float = 4.0
    robot_speed: int = 1
    robot_range: float = 2.0
    sensing_range: int = 1
    hazards: int = 8
    survivors: int = 4
    blocked: int = 40
    waypoints: int = 6
    poll_interval: int = 1
    horizon_rounds: int = 80
    split: bool = False
    blackouts: list[list] = field(default_factory=list)   # [start_round, end_round]


@dataclass
class OutputSection:
    dir: str = "out"
    trace: bool = False


@dataclass
class RunConfig:
    scenario: str = "synthetic"
    mode: str = "GossipAugmented"
    seed: int = 1
    max_ticks: int = 5000
    gossip: GossipSection = field(default_factory=GossipSection)
    filter: FilterSection = field(default_factory=FilterSection)
    trust: TrustSection = field(default_factory=TrustSection)
    health: HealthSection = field(default_factory=HealthSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    topology: TopologySection = field(default_factory=TopologySection)
    faults: FaultSection = field(default_factory=FaultSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    factory: FactorySection = field(default_factory=FactorySection)
    disaster: DisasterSection = field(default_factory=DisasterSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario: unknown scenario {self.scenario!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {', '.join(MODES)}, got {self.mode!r}")
        if self.gossip.mode not in GOSSIP_MODES:
            raise ConfigError(f"gossip.mode: expected one of {', '.join(GOSSIP_MODES)}")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        if self.max_ticks < 1:
            raise ConfigError("max_ticks: must be >= 1")
        for name in ("fanout", "round_len", "suppression_k", "delta_cap",
                     "critical_suppression_multiplier", "repair_every",
                     "shuffle_len", "view_capacity"):
            if getattr(self.gossip, name) < 1:
                raise ConfigError(f"gossip.{name}: must be >= 1")
        if not 0.0 <= self.network.drop_p <= 1.0:
            raise ConfigError("network.drop_p: must lie in [0, 1]")
        if self.synthetic.N < 1:
            raise ConfigError("synthetic.N: must be >= 1")
        if self.synthetic.stop not in ("converged", "quiescent", "horizon"):
            raise ConfigError("synthetic.stop: expected converged, quiescent or horizon")
        for a in self.trust.adversaries:
            if a.behavior not in ("injector", "forger"):
                raise ConfigError(f"trust.adversaries: unknown behavior {a.behavior!r}")
        if self.topology.type not in ("complete", "random", "grid", "explicit"):
            raise ConfigError(f"topology.type: unknown topology {self.topology.type!r}")
        d = self.disaster
        if d.drones < 1 or d.robots < 1 or d.drones + d.robots != 10:
            raise ConfigError("disaster: need >= 1 drone, >= 1 robot, 10 agents in total")
        if d.width < 2 or d.height < 1 or d.blocked + d.hazards + d.survivors >= d.width * d.height // 2:
            raise ConfigError("disaster: grid too small for the requested map features")
        for w in d.blackouts:
            if len(w) != 2 or not 0 <= w[0] < w[1]:
                raise ConfigError(f"disaster.blackouts: bad window {w!r}")
        f = self.factory
        if not 0.0 <= f.arrival_p <= 1.0:
            raise ConfigError("factory.arrival_p: must lie in [0, 1]")
        if not 0 <= f.coordinator < 5:
            raise ConfigError("factory.coordinator: must name one of the five machines")
        if f.poll_interval < 1:
            raise ConfigError("factory.poll_interval: must be >= 1")


# -- strict conversion -----------------------------------------------------------

def _line_of(text: Optional[str], name: str) -> Optional[int]:
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(name), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(msg: str, text: Optional[str], name: Optional[str], source: str) -> ConfigError:
    line = _line_of(text, name) if name else None
    where = f"{source}:{line}: " if line else f"{source}: "
    return ConfigError(where + msg)


def _convert(tp, value, path: str, text, source):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    leaf = path.rsplit(".", 1)[-1].split("[")[0]
    if origin is Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path, text, source)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise _fail(f"{path}: expected an object", text, leaf, source)
        return build(tp, value, path, text, source)
    if origin is list:
        if not isinstance(value, list):
            raise _fail(f"{path}: expected a list", text, leaf, source)
        if args and dataclasses.is_dataclass(args[0]):
            return [_convert(args[0], v, f"{path}[{i}]", text, source)
                    for i, v in enumerate(value)]
        return value
    if tp is list and not isinstance(value, list):
        raise _fail(f"{path}: expected a list", text, leaf, source)
    if tp is dict and not isinstance(value, dict):
        raise _fail(f"{path}: expected an object", text, leaf, source)
    if tp is bool and not isinstance(value, bool):
        raise _fail(f"{path}: expected true/false", text, leaf, source)
    if tp is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise _fail(f"{path}: expected an integer", text, leaf, source)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _fail(f"{path}: expected a number", text, leaf, source)
        return float(value)
    if tp is str and not isinstance(value, str):
        raise _fail(f"{path}: expected a string", text, leaf, source)
    return value


def build(cls, data: dict, path: str = "", text: Optional[str] = None,
          source: str = "<config>"):
    """Instantiate dataclass ``cls`` from ``data``, rejecting unknown fields."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for name, value in data.items():
        dotted = f"{path}.{name}" if path else name
        if name not in names:
            raise _fail(f"{dotted}: unknown field", text, name, source)
        kwargs[name] = _convert(hints[name], value, dotted, text, source)
    missing = [f.name for f in dataclasses.fields(cls)
               if f.name not in kwargs and f.default is dataclasses.MISSING
               and f.default_factory is dataclasses.MISSING]
    if missing:
        raise _fail(f"{path or 'config'}: missing field {missing[0]!r}", text, None, source)
    return cls(**kwargs)


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


# -- loading ---------------------------------------------------------------------

def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r}: expected KEY=VALUE")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r}: empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_override(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {key}: {p} is not an object")
        node = nxt
    node[parts[-1]] = value


def from_dict(data: dict, overrides=(), text: Optional[str] = None,
              source: str = "<config>") -> RunConfig:
    data = copy.deepcopy(data)
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    for ov in overrides:
        k, v = parse_override(ov) if isinstance(ov, str) else ov
        apply_override(data, k, v)
    cfg = build(RunConfig, data, "", text, source)
    try:
        cfg.validate()
    except ConfigError as e:
        field_name = str(e).split(":", 1)[0].rsplit(".", 1)[-1]
        line = _line_of(text, field_name)
        raise ConfigError(f"{source}:{line}: {e}" if line else f"{source}: {e}") from None
    return cfg


def load(path, overrides=()) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: malformed JSON: {e.msg}") from None
    return from_dict(data, overrides, text, str(path))


def packaged_config(name: str) -> Path:
    """Path of a config that ships with the package (e.g. ``factory_default.json``)."""
    return Path(__file__).with_name("configs") / name
