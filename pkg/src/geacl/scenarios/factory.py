"""Smart-factory toy environment: five machines, stochastic tasks, one defect spike.

Agents publish their queue length as ``load/<id>`` each round. Whoever
receives a task routes it to the agent it believes least loaded. The
quality agent observes a defect spike at one workstation and the others
adapt once they learn of it. In BaselineDirect mode the same loop runs
over a polled star around a coordinator instead of gossip.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .. import metrics as M
from ..config import RunConfig
from ..core import Fact, Priority, Scalar
from ..dissemination import AgentState, BaselineSettings
from ..simnet import Simulation
from .common import fault_schedule, finish, gossip_config, make_agent, net_config, \
    record_injection, safe

ROLES = ("arm", "material", "quality", "planner", "packer")
ARM, MATERIAL, QUALITY, PLANNER, PACKER = range(5)
TRACKED = ("defect/", "adapt/")
WS4_SHARE = 0.2         # fraction of tasks that depend on the defective workstation
OFFLOAD_GAP = 3         # queue excess over the least loaded peer that triggers a hand-off
SPEED_FACTOR = 0.8


def defect_key(ws: str) -> str:
    return f"defect/{ws}"


def defect_fact(ws: str) -> Fact:
    return Fact("defect_spike", ws, "high_severity")


def ws_agent(ws: str) -> Optional[int]:
    """Workstation ``WS<i>`` is machine ``i``."""
    try:
        i = int(ws[2:])
    except ValueError:
        return None
    return i if ws.startswith("WS") and 0 <= i < len(ROLES) else None


@dataclass
class Task:
    id: int
    ws4: bool


class FactoryAgent(AgentState):
    """A machine: gossip state plus a task queue and the defect rules."""

    role = "machine"
    workstation = "WS4"
    speed = 100.0
    service_rate = 1.0

    def setup(self, role: str, workstation: str, speed: float, service_rate: float) -> None:
        self.role = role
        self.workstation = workstation
        self.speed = speed
        self.service_rate = service_rate
        self.queue: deque[Task] = deque()
        self.credit = 0.0
        self.route = "default"
        self.adapted: set = set()
        self.served = 0

    # -- beliefs ------------------------------------------------------------

    def believed_loads(self, now: int, ids) -> dict[int, tuple[float, int]]:
        """``peer -> (queue length, staleness in ticks)``; own load is exact."""
        out = {self.id: (float(len(self.queue)), 0)}
        for j in ids:
            if j == self.id or j in self.believed_failed:
                continue
            entry = self.store.entries.get(f"load/{j}")
            if entry is None:
                continue
            out[j] = (entry.value.x, now - entry.envelope.created_tick)
        return out

    def excluded(self) -> set:
        if self.route == "alternate_path":
            ws = ws_agent(self.workstation)
            return {ws} if ws is not None and ws != self.id else set()
        return set()

    def choose(self, now: int, ids) -> tuple[int, int]:
        """Least believed load, ties to the smaller id; returns (agent, staleness)."""
        loads = self.believed_loads(now, ids)
        skip = self.excluded()
        best = min((v[0], j) for j, v in loads.items() if j not in skip)
        return best[1], loads[best[1]][1]

    # -- defect rules ----------------------------------------------------------

    def adapt(self, now: int) -> list[str]:
        """Apply this agent's defect rule once per spike it has learned of."""
        key = defect_key(self.workstation)
        if key not in self.store.entries or key in self.adapted:
            return []
        self.adapted.add(key)
        if self.role == "arm":
            self.speed = SPEED_FACTOR * self.speed
            action = f"speed={self.speed:g}"
        elif self.role == "material":
            self.route = "alternate_path"
            action = "route=alternate_path"
        elif self.role == "planner":
            self.queue = deque(sorted(self.queue, key=lambda t: t.ws4))
            action = "deprioritize_ws4"
            self.emit({"type": "structured_call", "t": now, "agent": self.id,
                       "calls": [f"request_diagnostics:{self.workstation}",
                                 f"query_logs:{self.workstation}",
                                 f"dispatch_repair:{self.workstation}"]})
        else:
            return []
        self.emit({"type": "adapt", "t": now, "agent": self.id, "role": self.role,
                   "key": key, "action": action})
        self.put(f"adapt/{self.role}", Fact("adapt", self.role, action.split("=")[-1]),
                 Priority.ROUTINE, now, 1000)
        return [action]

    def enqueue(self, task: Task) -> None:
        if self.role == "planner" and self.adapted and task.ws4:
            self.queue.append(task)
        elif self.role == "planner" and self.adapted:
            # ahead of the deferred WS4-dependent work
            i = next((k for k, t in enumerate(self.queue) if t.ws4), len(self.queue))
            self.queue.insert(i, task)
        else:
            self.queue.append(task)

    def serve(self) -> int:
        rate = self.service_rate * self.speed / 100.0
        self.credit += rate
        done = 0
        while self.credit >= 1.0 and self.queue:
            self.queue.popleft()
            self.credit -= 1.0
            done += 1
        if not self.queue:
            self.credit = min(self.credit, 1.0)
        self.served += done
        return done


# -- construction --------------------------------------------------------------

def baseline_settings(cfg: RunConfig, agent: int, ids: list[int]) -> BaselineSettings:
    """Star: the coordinator polls every machine, the others poll the coordinator."""
    c = cfg.factory.coordinator
    partners = [j for j in ids if j != c] if agent == c else [c]
    return BaselineSettings(partners, cfg.factory.poll_interval, relay=True)


def build(cfg: RunConfig, n: int = len(ROLES), roles=ROLES) -> Simulation:
    f = cfg.factory
    baseline = cfg.mode == "BaselineDirect"
    if baseline:
        # heartbeats only travel on gossip; the star detects failures by poll timeouts
        cfg = replace(cfg, health=replace(cfg.health, enabled=False))
    ids = list(range(n))
    gcfg = gossip_config(cfg)
    agents = {}
    for i in ids:
        a = make_agent(i, cfg, ids, gcfg=gcfg, tracked_prefixes=TRACKED, cls=FactoryAgent,
                       baseline=baseline_settings(cfg, i, ids) if baseline else None)
        a.setup(roles[i], f.workstation, f.speed, f.service_rate)
        agents[i] = a
    sim = Simulation(agents, seed=cfg.seed, round_len=gcfg.round_len, net=net_config(cfg),
                     faults=fault_schedule(cfg, ids), tracked_keys=lambda k: k.startswith(TRACKED))
    return sim


class FactoryDriver:
    """Environment side of the factory: arrivals, the spike, the shock, service."""

    def __init__(self, sim: Simulation, cfg: RunConfig):
        self.sim = sim
        self.cfg = cfg
        self.f = cfg.factory
        self.ids = sorted(sim.agents)
        self.next_task = 0
        self.lost = 0
        self.queues: dict[int, list[int]] = {}
        self.shock_var: Optional[float] = None
        sim.before_round.append(self.before)
        sim.after_round.append(self.after)

    def _lost(self, task: Task, at: int, why: str) -> None:
        self.lost += 1
        self.sim.record({"type": "task_lost", "t": self.sim.now, "task": task.id,
                         "agent": at, "why": why})

    def _deliver(self, task: Task, to: int) -> None:
        if to in self.sim.alive:
            self.sim.agents[to].enqueue(task)
        else:
            self._lost(task, to, "crashed")

    def before(self, sim: Simulation, r: int) -> None:
        now = sim.now
        f = self.f
        if r == f.defect_round and QUALITY in sim.alive and QUALITY in sim.agents:
            q = sim.agents[QUALITY]
            # the anomaly persists until resolved, i.e. past the horizon
            env = q.put(defect_key(f.workstation), defect_fact(f.workstation),
                        Priority.CRITICAL, now, f.horizon_rounds + 1)
            record_injection(sim, QUALITY, env, r)
        shock = f.load_shock
        if shock is not None and r == shock.round:
            sim.record_env({"type": "load_shock", "t": now, "agent": shock.agent,
                            "tasks": shock.tasks})
            for _ in range(shock.tasks):
                self._deliver(Task(self.next_task, False), shock.agent)
                self.next_task += 1
        for i in sorted(sim.alive):
            sim.agents[i].adapt(now)
        # one arrival draw per tick, taken whether or not a task arrives
        rng = sim.env_rng
        for k in range(sim.round_len):
            u, entry, dep = rng.random(), rng.below(len(self.ids)), rng.random()
            if u >= f.arrival_p:
                continue
            task = Task(self.next_task, dep < WS4_SHARE)
            self.next_task += 1
            sim.record_env({"type": "arrival", "t": now + k, "task": task.id, "entry": entry,
                            "ws4": task.ws4})
            if entry not in sim.alive:
                self._lost(task, entry, "entry_down")
                continue
            router = sim.agents[entry]
            to, age = router.choose(now, self.ids)
            sim.record({"type": "decision", "t": now, "agent": entry, "task": task.id,
                        "chosen": to, "staleness": age, "why": "route"})
            self._deliver(task, to)
        for i in sorted(sim.alive):
            a = sim.agents[i]
            a.put(f"load/{i}", Scalar(float(len(a.queue))), Priority.ROUTINE, now)

    def after(self, sim: Simulation, r: int) -> None:
        now = sim.now
        for i in sorted(sim.alive):
            sim.agents[i].serve()
        for i in sorted(sim.alive):
            a = sim.agents[i]
            to, age = a.choose(now, self.ids)
            mine = len(a.queue)
            believed = a.believed_loads(now, self.ids)[to][0]
            if to != i and mine - believed >= OFFLOAD_GAP:
                task = a.queue.pop()
                sim.record({"type": "decision", "t": now, "agent": i, "task": task.id,
                            "chosen": to, "staleness": age, "why": "offload"})
                self._deliver(task, to)
        self.queues[r] = [len(sim.agents[i].queue) if i in sim.alive else None
                          for i in self.ids]


def queue_variance(row: list) -> Optional[float]:
    xs = [x for x in row if x is not None]
    return float(np.var(xs)) if xs else None


def redistribution_efficiency(queues: dict, shock_round: int, window: int) -> Optional[float]:
    """Queue-length variance ``window`` rounds after the shock over the variance at it."""
    if shock_round not in queues or shock_round + window not in queues:
        return None
    before = queue_variance(queues[shock_round])
    after = queue_variance(queues[shock_round + window])
    if before is None or after is None:
        return None
    return M.task_redistribution_efficiency(after, before)


def failure_recovery_latency(trace, crashed: int, crash_round: int, L: int) -> Optional[int]:
    """Rounds after the crash until routers stop choosing the dead machine."""
    last = None
    for r in trace:
        if r["type"] == "decision" and r["chosen"] == crashed and r["t"] >= crash_round * L:
            last = r["t"] // L
    return 0 if last is None else last - crash_round + 1


def run_factory(cfg: RunConfig):
    sim = build(cfg)
    drv = FactoryDriver(sim, cfg)
    result = sim.run(min(cfg.max_ticks, cfg.factory.horizon_rounds * sim.round_len))
    return report(cfg, result, drv), result


def report(cfg: RunConfig, result, drv: FactoryDriver):
    trace = result.trace
    L = cfg.gossip.round_len
    f = cfg.factory
    key = defect_key(f.workstation)
    arm = result.agents.get(ARM)
    m = {
        "alert_propagation_time": safe(M.full_convergence_time, trace, key),
        "alert_coverage": (M.coverage_curve(trace, key) or [0.0])[-1],
        "task_redistribution_efficiency": (
            redistribution_efficiency(drv.queues, f.load_shock.round, f.tre_window)
            if f.load_shock else None),
        "failure_recovery_latency": None,
        "staleness_index": M.staleness_index(trace),
        "bandwidth": M.total_bytes(trace),
        "messages": M.count(trace, "send"),
        "redundancy": M.redundancy_overhead(trace, key),
        "tasks_arrived": drv.next_task,
        "tasks_served": sum(a.served for a in result.agents.values()),
        "tasks_lost": drv.lost,
        "adaptations": M.count(trace, "adapt"),
        "arm_speed": arm.speed if arm is not None else None,
        "structured_calls": M.count(trace, "structured_call"),
    }
    for c in cfg.faults.crashes[:1]:
        m["failure_recovery_latency"] = failure_recovery_latency(trace, c.agent, c.round, L)
    series = {"queues": [drv.queues[r] for r in sorted(drv.queues)],
              "alert_coverage": M.coverage_curve(trace, key)}
    return finish(cfg, result, m, series, params={"mode": cfg.mode,
                                                  "gossip_mode": cfg.gossip.mode,
                                                  "poll_interval": f.poll_interval,
                                                  "fanout": cfg.gossip.fanout})
