"""Shared plumbing: config translation, agent construction, reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

from .. import trust
from ..config import RunConfig
from ..core import Envelope, Priority, value_from_token
from ..dissemination import AgentState, BaselineSettings, GossipConfig, GossipMessage, Kind, Mode
from ..filtering import FilterPolicy
from ..health import HealthConfig
from ..peer_sampling import init_view
from ..rng import Rng, derive_seed
from ..simnet import (
    Complete, Explicit, FaultSchedule, Grid, LinkOutage, NetConfig, Partition, RandomEdges,
    Simulation, Topology,
)
from ..store import Store

KEY_STREAM = (1 << 32) + 7
SCENARIO_STREAM = (1 << 32) + 8


def gossip_config(cfg: RunConfig, **overrides) -> GossipConfig:
    g = cfg.gossip
    base = GossipConfig(Mode(g.mode), g.fanout, g.round_len, g.suppression_k, g.delta_cap,
                        g.critical_suppression_multiplier, g.repair_every, g.shuffle_len,
                        g.view_capacity)
    return replace(base, **overrides) if overrides else base


def filter_policy(cfg: RunConfig) -> FilterPolicy:
    f = cfg.filter
    return FilterPolicy({Priority.parse(k): float(v) for k, v in f.weights.items()}, f.gamma,
                        {Priority.parse(k): int(v) for k, v in f.ttl_rounds.items()},
                        cfg.gossip.delta_cap)


def health_config(cfg: RunConfig) -> Optional[HealthConfig]:
    h = cfg.health
    return HealthConfig(h.enabled, h.t_suspect, h.t_confirm, h.ttl_margin) if h.enabled else None


def trust_settings(cfg: RunConfig) -> trust.TrustSettings:
    t = cfg.trust
    return trust.TrustSettings(
        signing=t.signing, corroboration=t.corroboration, reputation=t.reputation,
        reputation_bias=t.reputation_bias, publish_every=t.publish_every,
        policy=trust.CorroborationPolicy(t.k, Priority.parse(t.applies_to), t.timeout_rounds))


def topology(cfg: RunConfig) -> Topology:
    t = cfg.topology
    if t.type == "complete":
        return Complete()
    if t.type == "random":
        return RandomEdges(t.p if t.p is not None else 0.1)
    if t.type == "grid":
        return Grid(t.width, t.height, t.comm_range or 1.0)
    return Explicit(tuple(tuple(e) for e in (t.edges or ())))


def fault_schedule(cfg: RunConfig, agents: Iterable[int]) -> FaultSchedule:
    L = cfg.gossip.round_len
    f = cfg.faults
    return FaultSchedule(
        partitions=[Partition(p.start_round * L, p.end_round * L,
                              tuple(tuple(b) for b in p.blocks)) for p in f.partitions],
        crashes=[(c.round * L, c.agent) for c in f.crashes],
        link_outages=[LinkOutage(o.start_round * L, o.end_round * L,
                                 tuple(o.edge) if o.edge else None) for o in f.link_outages])


def net_config(cfg: RunConfig) -> NetConfig:
    n = cfg.network
    return NetConfig(n.latency, n.lat_min, n.lat_max, n.drop_p)


def key_registry(cfg: RunConfig, ids: Iterable[int]) -> Optional[trust.KeyRegistry]:
    if not cfg.trust.signing:
        return None
    return trust.KeyRegistry.generate(sorted(ids), Rng(derive_seed(cfg.seed, KEY_STREAM)))


def make_agent(agent_id: int, cfg: RunConfig, ids: list[int], *, gcfg: GossipConfig,
               registry=None, baseline: Optional[BaselineSettings] = None,
               tracked_prefixes: tuple = (), bootstrap: Optional[list[int]] = None,
               cls=None) -> AgentState:
    rng = Rng(derive_seed(cfg.seed, agent_id))
    others = [p for p in (bootstrap if bootstrap is not None else ids) if p != agent_id]
    view = init_view(agent_id, others, gcfg.view_capacity, rng) if others else None
    cls = cls or AgentState
    return cls(agent_id, Store(agent_id), view, rng, gcfg, filter_policy(cfg),
               health_config=health_config(cfg), trust_settings=trust_settings(cfg),
               registry=registry, baseline=baseline,
               known=set(view.peers()) if view else set(),
               tracked_prefixes=tracked_prefixes)


def record_injection(sim: Simulation, agent: int, env: Envelope, r: int) -> None:
    """Trace the local write; the environment trace omits mode-dependent seqs."""
    sim.record_env({"type": "env_write", "t": sim.now, "agent": agent, "key": env.key})
    sim.record({"type": "inject", "t": sim.now, "r": r, "agent": agent, "key": env.key,
                "origin": env.origin, "seq": env.seq, "priority": env.priority.label})


# -- adversaries -------------------------------------------------------------------

class InjectorAgent(AgentState):
    """Validly signed agent that fabricates a claim and gossips it like any rumor."""

    spec = None

    def on_round(self, now, round_no):
        s = self.spec
        if round_no == s.start_round:
            env = self.put(s.key, value_from_token(s.value), Priority.parse(s.priority), now)
            self.emit({"type": "fabricate", "t": now, "agent": self.id, "key": env.key,
                       "origin": env.origin, "seq": env.seq})
        return super().on_round(now, round_no)


class ForgerAgent(AgentState):
    """Pushes envelopes that claim another origin, signed with its own key."""

    spec = None
    forged_seq = 1 << 40

    def on_round(self, now, round_no):
        out = super().on_round(now, round_no)
        s = self.spec
        if round_no >= s.start_round:
            victim = s.victim if s.victim is not None else 0
            env = Envelope(victim, self.forged_seq, s.key, value_from_token(s.value),
                           Priority.parse(s.priority), now, 16)
            self.forged_seq += 1
            if self.signer is not None:
                env = trust.sign_envelope(env, self.signer)
            for p in self.choose_partners():
                out.append((p, GossipMessage(Kind.RUMOR, self.id, (env,))))
        return out


def adversary_class(behavior: str):
    return {"injector": InjectorAgent, "forger": ForgerAgent}[behavior]


# -- reports -----------------------------------------------------------------------

@dataclass
class MetricsReport:
    scenario: str
    mode: str
    seed: int
    timeout: bool
    rounds: int
    trace_hash: str
    env_hash: str
    metrics: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "mode": self.mode, "seed": self.seed,
                "timeout": self.timeout, "rounds": self.rounds,
                "trace_hash": self.trace_hash, "env_hash": self.env_hash,
                "params": self.params, "metrics": self.metrics, "series": self.series}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def csv_text(self) -> str:
        """One row per metric."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "mode", "seed", "metric", "value"])
        for k in sorted(self.metrics):
            w.writerow([self.scenario, self.mode, self.seed, k, fmt(self.metrics[k])])
        return buf.getvalue()


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def finish(cfg: RunConfig, result, metrics: dict, series: Optional[dict] = None,
           params: Optional[dict] = None) -> MetricsReport:
    return MetricsReport(cfg.scenario, cfg.mode, cfg.seed, result.timeout, result.rounds,
                         result.trace_hash, result.env_hash, metrics, series or {},
                         params or {})


def safe(fn: Callable, *args, **kw):
    """Metric value, or ``None`` when the metric is undefined for this run."""
    try:
        return fn(*args, **kw)
    except ValueError:
        return None
