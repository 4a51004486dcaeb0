"""Deterministic discrete-event network and round scheduler.

Time is integer ticks; round ``r`` starts at tick ``r * round_len``. All
randomness is drawn from per-purpose streams derived from one master seed,
so equal (seed, config) pairs give identical traces.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Union

from .core import AgentId, Tick, value_token
from .dissemination import AgentState, GossipMessage, Kind, message_size
from .rng import Rng, derive_seed

# stream ids for derive_seed; agent streams use the agent id
NET_STREAM = 1 << 32
TOPOLOGY_STREAM = NET_STREAM + 1
ENV_STREAM = NET_STREAM + 2


# -- topology ----------------------------------------------------------------

@dataclass(frozen=True)
class Complete:
    pass


@dataclass(frozen=True)
class RandomEdges:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")


@dataclass(frozen=True)
class Grid:
    width: int
    height: int
    comm_range: float

    def __post_init__(self):
        if self.comm_range < 1:
            raise ValueError("grid range must be >= 1")


@dataclass(frozen=True)
class Explicit:
    edges: tuple

    def __post_init__(self):
        for a, b in self.edges:
            if a == b:
                raise ValueError("self-loop in explicit topology")


Topology = Union[Complete, RandomEdges, Grid, Explicit]


def grid_position(agent: AgentId, width: int) -> tuple[int, int]:
    return agent % width, agent // width


def adjacency(topo: Topology, agents: Iterable[AgentId],
              rng: Optional[Rng] = None) -> Optional[dict[AgentId, set]]:
    """Undirected neighbor sets, or ``None`` for the complete graph."""
    agents = sorted(agents)
    if isinstance(topo, Complete):
        return None
    adj: dict[AgentId, set] = {a: set() for a in agents}

    def link(a, b):
        if a != b and a in adj and b in adj:
            adj[a].add(b)
            adj[b].add(a)

    if isinstance(topo, RandomEdges):
        rng = rng or Rng(0)
        for i, a in enumerate(agents):
            for b in agents[i + 1:]:
                if rng.bernoulli(topo.p):
                    link(a, b)
    elif isinstance(topo, Grid):
        for i, a in enumerate(agents):
            ax, ay = grid_position(a, topo.width)
            for b in agents[i + 1:]:
                bx, by = grid_position(b, topo.width)
                if math.hypot(ax - bx, ay - by) <= topo.comm_range:
                    link(a, b)
    else:
        for a, b in topo.edges:
            link(a, b)
    return adj


# -- faults ------------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    start: Tick
    end: Tick
    blocks: tuple

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("partition window needs start < end")
        seen: set = set()
        for b in self.blocks:
            if seen & set(b):
                raise ValueError("partition blocks overlap")
            seen |= set(b)

    def active(self, t: Tick) -> bool:
        return self.start <= t < self.end

    def separates(self, a: AgentId, b: AgentId) -> bool:
        for blk in self.blocks:
            if a in blk:
                return b not in blk
        return False


@dataclass(frozen=True)
class LinkOutage:
    start: Tick
    end: Tick
    edge: Optional[tuple] = None  # None blacks out every link

    def active(self, t: Tick) -> bool:
        return self.start <= t < self.end

    def covers(self, a: AgentId, b: AgentId) -> bool:
        return self.edge is None or {a, b} == set(self.edge)


@dataclass
class FaultSchedule:
    partitions: list = field(default_factory=list)
    crashes: list = field(default_factory=list)      # (tick, agent)
    link_outages: list = field(default_factory=list)

    def check(self, agents: Iterable[AgentId]) -> None:
        agents = set(agents)
        for p in self.partitions:
            covered = set().union(*map(set, p.blocks)) if p.blocks else set()
            if covered != agents:
                raise ValueError("partition blocks must cover all agents")


@dataclass
class NetConfig:
    latency: int = 1
    lat_min: Optional[int] = None
    lat_max: Optional[int] = None
    drop_p: float = 0.0

    def __post_init__(self):
        if self.latency < 1:
            raise ValueError("latency must be >= 1 tick")
        if (self.lat_min is None) != (self.lat_max is None):
            raise ValueError("give both lat_min and lat_max")
        if self.lat_min is not None and not 1 <= self.lat_min <= self.lat_max:
            raise ValueError("need 1 <= lat_min <= lat_max")
        if not 0.0 <= self.drop_p <= 1.0:
            raise ValueError("drop_p must lie in [0, 1]")

    def draw_latency(self, rng: Rng) -> int:
        if self.lat_min is None:
            return self.latency
        return rng.integers(self.lat_min, self.lat_max)


# -- events ------------------------------------------------------------------

DELIVER = 0
FAULT = 1
SCENARIO = 2


class EventQueue:
    """Min-queue on (tick, insertion sequence)."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0

    def push(self, tick: Tick, kind: int, payload) -> None:
        heapq.heappush(self._heap, (tick, self._seq, kind, payload))
        self._seq += 1

    def peek_tick(self) -> Optional[Tick]:
        return self._heap[0][0] if self._heap else None

    def pop(self):
        return heapq.heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)


# -- traces ------------------------------------------------------------------

def canonical_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def trace_hash(records: Iterable[dict]) -> str:
    h = hashlib.sha256()
    for r in records:
        h.update(canonical_line(r).encode())
        h.update(b"\n")
    return h.hexdigest()


def write_trace(records: Iterable[dict], path) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(canonical_line(r) + "\n")


def read_trace(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def entry_token(entry):
    if entry.set_elements is not None:
        return ["G", sorted((value_token(v) for v in entry.set_elements), key=repr)]
    return value_token(entry.value)


@dataclass
class RunResult:
    trace: list
    env_trace: list
    agents: dict
    timeout: bool
    ticks: Tick
    rounds: int

    @property
    def trace_hash(self) -> str:
        return trace_hash(self.trace)

    @property
    def env_hash(self) -> str:
        return trace_hash(self.env_trace)


# -- simulation --------------------------------------------------------------

class Simulation:
    """Round-driven event loop over a set of :class:`AgentState` objects."""

    def __init__(self, agents: dict[AgentId, AgentState], *, seed: int,
                 round_len: int = 10, net: Optional[NetConfig] = None,
                 topology: Topology = Complete(), faults: Optional[FaultSchedule] = None,
                 tracked_keys: Optional[Callable[[str], bool]] = None,
                 link_filter: Optional[Callable[[AgentId, AgentId, Tick], bool]] = None,
                 record_sends: bool = True):
        self.agents = agents
        self.seed = seed
        self.round_len = round_len
        self.net = net or NetConfig()
        self.faults = faults or FaultSchedule()
        self.faults.check(agents)
        self.adj = adjacency(topology, agents, Rng(derive_seed(seed, TOPOLOGY_STREAM)))
        self.net_rng = Rng(derive_seed(seed, NET_STREAM))
        self.env_rng = Rng(derive_seed(seed, ENV_STREAM))
        self.queue = EventQueue()
        self.alive: set = set(agents)
        self.crash_tick: dict[AgentId, Tick] = {}
        self.trace: list[dict] = []
        self.env_trace: list[dict] = []
        self.tracked = tracked_keys or (lambda key: False)
        self.link_filter = link_filter
        self.record_sends = record_sends
        self.now: Tick = 0
        self.round_no = 0
        self.before_round: list[Callable[["Simulation", int], None]] = []
        self.after_round: list[Callable[["Simulation", int], None]] = []
        for a in agents.values():
            a.emit = self.record
        for tick, agent in sorted(self.faults.crashes):
            self.queue.push(tick, FAULT, ("crash", agent))

    # -- recording -------------------------------------------------------

    def record(self, rec: dict) -> None:
        self.trace.append(rec)

    def record_env(self, rec: dict) -> None:
        """Environment event: identical across modes for a given seed."""
        self.env_trace.append(rec)
        self.trace.append(rec)

    # -- connectivity ----------------------------------------------------

    def link_ok(self, a: AgentId, b: AgentId, t: Tick) -> Optional[str]:
        """``None`` when a message may cross a-b at tick ``t``, else the reason."""
        if self.adj is not None and b not in self.adj.get(a, ()):
            return "no_edge"
        for o in self.faults.link_outages:
            if o.active(t) and o.covers(a, b):
                return "link_down"
        for p in self.faults.partitions:
            if p.active(t) and p.separates(a, b):
                return "partition_blocked"
        if self.link_filter is not None and not self.link_filter(a, b, t):
            return "out_of_range"
        return None

    def neighbors_of(self, a: AgentId) -> list[AgentId]:
        cands = self.adj[a] if self.adj is not None else self.alive
        return [b for b in sorted(cands) if b != a and b in self.alive
                and self.link_ok(a, b, self.now) is None]

    # -- messaging -------------------------------------------------------

    def send(self, src: AgentId, dst: AgentId, msg: GossipMessage, now: Tick) -> bool:
        if src not in self.alive:
            return False
        rec = None
        if self.record_sends:
            rec = {"type": "send", "t": now, "src": src, "dst": dst, "kind": msg.kind.value,
                   "bytes": message_size(msg), "n": len(msg.envelopes),
                   "init": msg.initiated}
            tk: dict = {}
            for e in msg.envelopes:
                if self.tracked(e.key):
                    tk[e.key] = tk.get(e.key, 0) + 1
            if tk:
                rec["tk"] = tk
            if msg.overflow:
                rec["ovf"] = msg.overflow
            self.trace.append(rec)
        reason = self.link_ok(src, dst, now)
        if reason is None and self.net.drop_p > 0.0 and self.net_rng.bernoulli(self.net.drop_p):
            reason = "dropped"
        if reason is not None:
            self.trace.append({"type": "drop", "t": now, "src": src, "dst": dst,
                               "reason": reason})
            return False
        self.queue.push(now + self.net.draw_latency(self.net_rng), DELIVER, (src, dst, msg))
        return True

    def _deliver(self, tick: Tick, src: AgentId, dst: AgentId, msg: GossipMessage) -> None:
        if dst not in self.alive:
            self.trace.append({"type": "drop", "t": tick, "src": src, "dst": dst,
                               "reason": "dead"})
            return
        _, replies = self.agents[dst].on_message(msg, tick)
        for to, reply in replies:
            self.send(dst, to, reply, tick)

    def crash(self, agent: AgentId, tick: Tick) -> None:
        if agent in self.alive:
            self.alive.discard(agent)
            self.crash_tick[agent] = tick
            self.record_env({"type": "crash", "t": tick, "agent": agent})

    def schedule(self, tick: Tick, fn: Callable[["Simulation", Tick], None]) -> None:
        self.queue.push(tick, SCENARIO, fn)

    def _process_until(self, limit: Tick, inclusive: bool) -> None:
        q = self.queue
        while q:
            t = q.peek_tick()
            if t > limit or (t == limit and not inclusive):
                break
            tick, _, kind, payload = q.pop()
            self.now = tick
            if kind == DELIVER:
                self._deliver(tick, *payload)
            elif kind == FAULT:
                what, agent = payload
                if what == "crash":
                    self.crash(agent, tick)
            else:
                payload(self, tick)

    # -- snapshots -------------------------------------------------------

    def snapshot(self, r: int) -> dict:
        alive = sorted(self.alive)
        hold: dict[str, list] = {}
        for a in alive:
            for key, entry in self.agents[a].store.entries.items():
                if self.tracked(key):
                    hold.setdefault(key, []).append([a, entry_token(entry)])
        return {"type": "round", "r": r, "t": r * self.round_len, "alive": alive,
                "hold": {k: hold[k] for k in sorted(hold)}}

    # -- main loop -------------------------------------------------------

    def run(self, max_ticks: int, until: Optional[Callable[["Simulation", int], bool]] = None,
            extra_rounds: int = 0) -> RunResult:
        """Run rounds until ``until`` holds (plus ``extra_rounds``) or ``max_ticks``."""
        L = self.round_len
        max_rounds = max(1, max_ticks // L)
        timeout = until is not None
        stop_at: Optional[int] = None
        r = 0
        for r in range(max_rounds):
            t0 = r * L
            self.round_no = r
            self._process_until(t0, inclusive=True)
            self.now = t0
            for hook in self.before_round:
                hook(self, r)
            for a in sorted(self.alive):
                for dst, msg in self.agents[a].on_round(t0, r):
                    self.send(a, dst, msg, t0)
            self._process_until(t0 + L, inclusive=False)
            self.now = t0 + L - 1
            for hook in self.after_round:
                hook(self, r)
            self.trace.append(self.snapshot(r))
            if stop_at is None and until is not None and until(self, r):
                stop_at = r + extra_rounds
                timeout = False
            if stop_at is not None and r >= stop_at:
                break
        return RunResult(self.trace, self.env_trace, self.agents, timeout,
                         (r + 1) * L, r + 1)
