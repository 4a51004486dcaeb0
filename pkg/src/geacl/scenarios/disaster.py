"""Disaster-response toy environment: drones and ground robots on a grid.

Agents patrol scripted waypoint routes, sense hazards and survivors within
one cell and record them as High-priority facts. Links exist only between
agents within radio range of each other and outside blackout windows. In
gossip mode agents push-pull with whoever is in range; the baseline only
talks to a fixed partner, and only about its own observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .. import metrics as M
from ..config import RunConfig
from ..core import Fact, Priority
from ..dissemination import BaselineSettings
from ..rng import Rng, derive_seed
from ..simnet import FaultSchedule, LinkOutage, Simulation
from .common import SCENARIO_STREAM, finish, gossip_config, make_agent, net_config, safe

Cell = tuple[int, int]
TRACKED = ("hazard/", "survivor/")
STEPS = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]


@dataclass
class Unit:
    kind: str               # "drone" or "robot"
    speed: int
    comm_range: float
    pos: Cell
    route: list
    region: int = 0
    leg: int = 0


@dataclass
class WorldMap:
    width: int
    height: int
    blocked: set
    hazards: set
    survivors: set

    def inside(self, c: Cell) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height


def cell_key(kind: str, c: Cell) -> str:
    return f"{kind}/{c[0]}_{c[1]}"


def region_of(c: Cell, width: int, split: bool) -> int:
    return int(c[0] >= width // 2) if split else 0


def make_world(cfg: RunConfig, rng: Rng) -> WorldMap:
    d = cfg.disaster
    cells = [(x, y) for y in range(d.height) for x in range(d.width)]
    picks = rng.sample(cells, d.blocked + d.hazards + d.survivors)
    blocked = set(picks[:d.blocked])
    hazards = set(picks[d.blocked:d.blocked + d.hazards])
    survivors = set(picks[d.blocked + d.hazards:])
    return WorldMap(d.width, d.height, blocked, hazards, survivors)


def make_units(cfg: RunConfig, world: WorldMap, rng: Rng) -> list[Unit]:
    d = cfg.disaster
    units = []
    free = [(x, y) for y in range(d.height) for x in range(d.width) if (x, y) not in world.blocked]
    for i in range(d.drones + d.robots):
        drone = i < d.drones
        region = i % 2 if d.split else 0
        mine = [c for c in free if region_of(c, d.width, d.split) == region]
        route = rng.sample(mine, d.waypoints + 1)
        units.append(Unit("drone" if drone else "robot",
                          d.drone_speed if drone else d.robot_speed,
                          d.drone_range if drone else d.robot_range,
                          route[0], route[1:], region))
    return units


def step_toward(u: Unit, world: WorldMap, split: bool) -> None:
    """Move up to ``speed`` cells toward the current waypoint; robots avoid rubble."""
    for _ in range(u.speed):
        goal = u.route[u.leg]
        if u.pos == goal:
            u.leg = (u.leg + 1) % len(u.route)
            goal = u.route[u.leg]
        best = None
        here = max(abs(goal[0] - u.pos[0]), abs(goal[1] - u.pos[1]))
        for dx, dy in STEPS:
            c = (u.pos[0] + dx, u.pos[1] + dy)
            if not world.inside(c) or region_of(c, world.width, split) != u.region:
                continue
            if u.kind == "robot" and c in world.blocked:
                continue
            dist = (max(abs(goal[0] - c[0]), abs(goal[1] - c[1])),
                    abs(goal[0] - c[0]) + abs(goal[1] - c[1]))
            if best is None or dist < best[0]:
                best = (dist, c)
        if best is None or best[0][0] >= here:
            u.leg = (u.leg + 1) % len(u.route)      # stuck: try the next waypoint
            return
        u.pos = best[1]


class DisasterDriver:
    """Moves units, senses the map and defines who can hear whom."""

    def __init__(self, sim: Simulation, cfg: RunConfig, world: WorldMap, units: list[Unit]):
        self.sim = sim
        self.cfg = cfg
        self.world = world
        self.units = units
        self.seen: list[set] = [set() for _ in units]
        self.found: dict[str, int] = {}     # key -> first discovery round
        sim.before_round.append(self.before)

    def in_range(self, a: int, b: int, t: int) -> bool:
        ua, ub = self.units[a], self.units[b]
        if self.cfg.disaster.split and ua.region != ub.region:
            return False
        return math.dist(ua.pos, ub.pos) <= min(ua.comm_range, ub.comm_range)

    def before(self, sim: Simulation, r: int) -> None:
        d = self.cfg.disaster
        now = sim.now
        for i in sorted(sim.alive):
            u = self.units[i]
            if r > 0:
                step_toward(u, self.world, d.split)
            sim.record_env({"type": "pos", "t": now, "agent": i, "pos": list(u.pos)})
            for dx in range(-d.sensing_range, d.sensing_range + 1):
                for dy in range(-d.sensing_range, d.sensing_range + 1):
                    c = (u.pos[0] + dx, u.pos[1] + dy)
                    for kind, cells in (("hazard", self.world.hazards),
                                        ("survivor", self.world.survivors)):
                        if c in cells and (kind, c) not in self.seen[i]:
                            self.seen[i].add((kind, c))
                            sim.record_env({"type": "observe", "t": now, "agent": i,
                                            "what": kind, "cell": list(c)})
                            self._record(sim, i, kind, c, r)

    def _record(self, sim: Simulation, i: int, kind: str, c: Cell, r: int) -> None:
        key = cell_key(kind, c)
        self.found.setdefault(key, r)
        a = sim.agents[i]
        if key in a.store.entries:
            return
        env = a.put(key, Fact(kind, f"{c[0]},{c[1]}", "present"), Priority.HIGH, sim.now, 1000)
        sim.record({"type": "inject", "t": sim.now, "r": r, "agent": i, "key": key,
                    "origin": env.origin, "seq": env.seq, "priority": env.priority.label})


def baseline_pairs(n: int) -> dict[int, list[int]]:
    """Fixed partners (0,1), (2,3), ...; an odd agent out polls the one before it."""
    out = {}
    for i in range(n):
        j = i + 1 if i % 2 == 0 else i - 1
        out[i] = [j] if j < n else ([i - 1] if i > 0 else [])
    return out


def build(cfg: RunConfig):
    d = cfg.disaster
    n = d.drones + d.robots
    ids = list(range(n))
    mrng = Rng(derive_seed(cfg.seed, SCENARIO_STREAM))
    world = make_world(cfg, mrng)
    units = make_units(cfg, world, mrng)
    baseline = cfg.mode == "BaselineDirect"
    gcfg = gossip_config(cfg, peer_source="neighbors", shuffle=False)
    pairs = baseline_pairs(n)
    agents = {}
    for i in ids:
        b = BaselineSettings(pairs[i], d.poll_interval, relay=False) if baseline else None
        agents[i] = make_agent(i, cfg, ids, gcfg=gcfg, baseline=b, tracked_prefixes=TRACKED)
    L = gcfg.round_len
    faults = FaultSchedule(
        crashes=[(c.round * L, c.agent) for c in cfg.faults.crashes],
        link_outages=[LinkOutage(s * L, e * L, None) for s, e in d.blackouts])
    holder: dict = {}
    sim = Simulation(agents, seed=cfg.seed, round_len=L, net=net_config(cfg), faults=faults,
                     tracked_keys=lambda k: k.startswith(TRACKED),
                     link_filter=lambda a, b, t: holder["drv"].in_range(a, b, t))
    drv = DisasterDriver(sim, cfg, world, units)
    holder["drv"] = drv
    for i in ids:
        agents[i].neighbors = (lambda i=i: sim.neighbors_of(i))
    return sim, drv


def hazard_coverage(snap: dict, keys) -> Optional[float]:
    """Share of the given keys held by every alive agent in a snapshot."""
    keys = list(keys)
    if not keys:
        return None
    alive = set(snap["alive"])
    full = sum(1 for k in keys if {a for a, _ in snap["hold"].get(k, ())} >= alive)
    return full / len(keys)


def hazard_awareness(snap: dict, keys) -> Optional[float]:
    """Mean share of alive agents holding each key."""
    keys = list(keys)
    alive = set(snap["alive"])
    if not keys or not alive:
        return None
    held = [len({a for a, _ in snap["hold"].get(k, ())} & alive) / len(alive) for k in keys]
    return sum(held) / len(held)


def alert_delays(trace, found: dict, prefix: str) -> list[Optional[int]]:
    out = []
    for key in sorted(k for k in found if k.startswith(prefix)):
        out.append(safe(M.full_convergence_time, trace, key))
    return out


def run_disaster(cfg: RunConfig):
    sim, drv = build(cfg)
    result = sim.run(min(cfg.max_ticks, cfg.disaster.horizon_rounds * sim.round_len))
    return report(cfg, result, drv), result


def report(cfg: RunConfig, result, drv: DisasterDriver):
    trace = result.trace
    snaps = M.rounds(trace)
    hazards = sorted(k for k in drv.found if k.startswith("hazard/"))
    series = []
    for s in snaps:
        found_by = [k for k in hazards if drv.found[k] <= s["r"]]
        series.append(hazard_coverage(s, found_by))
    delays = alert_delays(trace, drv.found, "survivor/")
    reached = [x for x in delays if x is not None]
    L = cfg.gossip.round_len
    d = cfg.disaster
    pc_blackout = None
    npr = None
    if d.blackouts:
        s0, e0 = d.blackouts[0]
        during = [v for s, v in zip(snaps, series) if s0 <= s["r"] < e0 and v is not None]
        pc_blackout = sum(during) / len(during) if during else None
        npr = M.partition_resilience(trace, s0 * L, e0 * L)
    m = {
        "hazard_coverage": hazard_coverage(snaps[-1], hazards) if snaps else None,
        "hazard_awareness": hazard_awareness(snaps[-1], hazards) if snaps else None,
        "hazards_discovered": len(hazards),
        "survivors_discovered": sum(1 for k in drv.found if k.startswith("survivor/")),
        "critical_alert_delay": sum(reached) / len(reached) if reached else None,
        "alerts_unreached": len(delays) - len(reached),
        "pc_under_disconnection": pc_blackout,
        "NPR": npr,
        "bandwidth": M.total_bytes(trace),
        "messages": M.count(trace, "send"),
        "drops_out_of_range": M.count(trace, "drop", reason="out_of_range"),
    }
    return finish(cfg, result, m, {"hazard_coverage": series},
                  params={"mode": cfg.mode, "split": d.split, "fanout": cfg.gossip.fanout})
