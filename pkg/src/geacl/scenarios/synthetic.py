"""Synthetic populations for protocol-level experiments.

N identical agents on a configurable topology. Updates are injected on a
schedule (or as a concurrent burst in which every agent writes the same
keys), and the run ends when every tracked key has converged or at the
tick horizon.
"""

from __future__ import annotations

from typing import Optional

from .. import metrics as M
from ..config import RunConfig
from ..core import Priority, Scalar, value_from_token
from ..rng import Rng, derive_seed
from ..simnet import RunResult, Simulation
from .common import (
    SCENARIO_STREAM, adversary_class, fault_schedule, finish, gossip_config, key_registry,
    make_agent, net_config, record_injection, safe, topology,
)

TRACKED = ("x/", "b/", "alarm/")


def tracked(key: str) -> bool:
    return key.startswith(TRACKED)


def converged(sim: Simulation, r: int) -> bool:
    """Every alive agent holds the same value for every tracked key."""
    snap = sim.trace[-1]
    pending = getattr(sim, "pending_injections", 0)
    if pending:
        return False
    n = len(snap["alive"])
    for key, holders in snap["hold"].items():
        if key.startswith("alarm/"):
            continue
        if len(holders) != n or len({repr(t) for _, t in holders}) != 1:
            return False
    return bool(snap["hold"])


def quiescent(sim: Simulation, r: int) -> bool:
    """Converged, and no agent still mongers a tracked rumor."""
    if not converged(sim, r):
        return False
    return not any(rs.active and tracked(rs.envelope.key)
                   for i in sim.alive for rs in sim.agents[i].rumors.values())


STOPS = {"converged": converged, "quiescent": quiescent, "horizon": None}


def build(cfg: RunConfig) -> Simulation:
    n = cfg.synthetic.N
    ids = list(range(n))
    gcfg = gossip_config(cfg)
    registry = key_registry(cfg, ids)
    adversaries = {a.agent: a for a in cfg.trust.adversaries}
    agents = {}
    for i in ids:
        spec = adversaries.get(i)
        cls = adversary_class(spec.behavior) if spec else None
        a = make_agent(i, cfg, ids, gcfg=gcfg, registry=registry, tracked_prefixes=TRACKED,
                       cls=cls)
        if spec:
            a.spec = spec
        agents[i] = a
    sim = Simulation(agents, seed=cfg.seed, round_len=gcfg.round_len, net=net_config(cfg),
                     topology=topology(cfg), faults=fault_schedule(cfg, ids),
                     tracked_keys=tracked)
    schedule_injections(sim, cfg)
    return sim


def schedule_injections(sim: Simulation, cfg: RunConfig) -> None:
    syn = cfg.synthetic
    plan: dict[int, list] = {}
    for inj in syn.injections:
        plan.setdefault(inj.round, []).append(inj)
    sim.pending_injections = len(syn.injections) + (1 if syn.burst else 0)
    burst = syn.burst
    brng = Rng(derive_seed(cfg.seed, SCENARIO_STREAM))

    def hook(sim: Simulation, r: int) -> None:
        for inj in plan.get(r, ()):
            if inj.agent in sim.alive:
                a = sim.agents[inj.agent]
                env = a.put(inj.key, value_from_token(inj.value), Priority.parse(inj.priority),
                            sim.now, inj.ttl_rounds)
                record_injection(sim, inj.agent, env, r)
            sim.pending_injections -= 1
        if burst is not None and r == burst.round:
            for k in range(burst.keys):
                for i in sorted(sim.alive):
                    env = sim.agents[i].put(f"b/{k}", Scalar(round(brng.random(), 6)),
                                            Priority.ROUTINE, sim.now, burst.ttl_rounds)
                    record_injection(sim, i, env, r)
            sim.pending_injections -= 1

    sim.before_round.append(hook)


def run_sim(cfg: RunConfig) -> RunResult:
    sim = build(cfg)
    until = STOPS[cfg.synthetic.stop]
    return sim.run(cfg.max_ticks, until, cfg.synthetic.extra_rounds)


def report(cfg: RunConfig, result: RunResult):
    trace = result.trace
    L = cfg.gossip.round_len
    keys = sorted({r["key"] for r in trace if r["type"] == "inject" and r["key"].startswith("x/")})
    per_key = {}
    n = cfg.synthetic.N
    for key in keys:
        curve = M.epidemic_curve(trace, key)
        fit = safe(M.fit_beta, curve, n)
        per_key[key] = {
            "PL": safe(M.propagation_latency, trace, key),
            "FCT": safe(M.full_convergence_time, trace, key),
            "DW": safe(M.divergence_window, trace, key),
            "RO": M.redundancy_overhead(trace, key),
            "final_coverage": (M.coverage_curve(trace, key) or [0.0])[-1],
            "beta_hat": fit.beta_hat if fit else None,
            "beta_r2": fit.r_squared if fit else None,
            "curve": curve,
        }
    start = cfg.synthetic.burst.round if cfg.synthetic.burst else 0
    d_series = M.divergence_series(trace, start_round=start)
    eta = M.estimate_eta(d_series)
    mp = M.mpar(trace, L)
    fabricated = {r["key"] for r in trace if r["type"] == "fabricate"}
    adversaries = {a.agent for a in cfg.trust.adversaries}
    false_commits = sum(1 for r in trace if r["type"] == "commit" and r["key"] in fabricated
                        and r["agent"] not in adversaries)
    first = per_key[keys[0]] if keys else {}
    m = {
        "PL": first.get("PL"), "FCT": first.get("FCT"), "DW": first.get("DW"),
        "RO": first.get("RO"), "final_coverage": first.get("final_coverage"),
        "beta_hat": first.get("beta_hat"), "beta_r2": first.get("beta_r2"),
        "eta_hat": eta.eta_hat, "eta_r2": eta.r_squared,
        "D_final": d_series[-1] if d_series else None,
        "total_bytes": M.total_bytes(trace),
        "mpar_init": sum(x["init"] for x in mp) / len(mp) if mp else 0.0,
        "mpar_reply": sum(x["reply"] for x in mp) / len(mp) if mp else 0.0,
        "max_gossip_init": max((x["max_gossip_init"] for x in mp), default=0),
        "drops": M.count(trace, "drop", reason="dropped"),
        "partition_blocked": M.count(trace, "drop", reason="partition_blocked"),
        "duplicates": None,
        "rejects": M.count(trace, "reject"),
        "commits": M.count(trace, "commit"),
        "false_commits": false_commits,
        "corroboration_expired": M.count(trace, "corroboration_expired"),
        "critical_overflow": M.critical_overflow(trace),
        "protocol_errors": M.count(trace, "protocol_error"),
        "isolated_rounds": M.count(trace, "isolated_round"),
        "availability": M.availability_under_churn(trace),
        "false_confirmations": false_confirmations(trace),
    }
    m["duplicates"] = sum(a.duplicates for a in result.agents.values())
    # fixed column set: failure and partition metrics are present, empty when unused
    m.update(fpd_mean=None, fpd_max=None, fpd_detection_rate=None, NPR=None)
    for c in cfg.faults.crashes[:1]:
        fpd = M.failure_propagation_delay(trace, c.agent, L)
        m.update(fpd_mean=fpd.mean_rounds, fpd_max=fpd.max_rounds,
                 fpd_detection_rate=fpd.detection_rate)
    for p in cfg.faults.partitions[:1]:
        m["NPR"] = M.partition_resilience(trace, p.start_round * L, p.end_round * L)
    series = {"D": d_series, "per_key": per_key, "mpar": mp}
    return finish(cfg, result, m, series, params={"N": n, "fanout": cfg.gossip.fanout,
                                                   "gossip_mode": cfg.gossip.mode,
                                                   "drop_p": cfg.network.drop_p,
                                                   "suppression_k": cfg.gossip.suppression_k,
                                                   "k_corroboration": cfg.trust.k})


def false_confirmations(trace) -> int:
    """Failure confirmations about agents that had not crashed at that tick."""
    crashed = {r["agent"]: r["t"] for r in trace if r["type"] == "crash"}
    return sum(1 for r in trace if r["type"] == "failure_detected"
               and (r["peer"] not in crashed or crashed[r["peer"]] > r["t"]))


def run_synthetic(cfg: RunConfig):
    if cfg.mode != "GossipAugmented":
        raise ValueError("synthetic scenario runs only in GossipAugmented mode")
    result = run_sim(cfg)
    return report(cfg, result), result
