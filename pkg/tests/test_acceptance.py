"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Runs are registered as they execute so criterion 11 can re-run every one of
them and compare reports byte for byte.
"""

import itertools
import math
import statistics
import time
from dataclasses import replace
from functools import lru_cache

import numpy as np

from geacl import metrics as M
from geacl import scenarios
from geacl.config import (
    AdversarySpec, BurstSpec, CrashSpec, FaultSection, GossipSection, HealthSection,
    InjectionSpec, PartitionSpec, RunConfig, SyntheticSection, TrustSection, load,
    packaged_config,
)
from geacl.core import Counter, Fact, Priority, Scalar, Vector
from geacl.dissemination import anti_entropy_session
from geacl.rng import Rng
from geacl.scenarios.common import key_registry
from geacl.scenarios.walkthrough import WalkthroughError
from geacl.store import Store, apply_all
from geacl.trust import KeyRegistry, sign_envelope, verify_envelope

from conftest import ACCEPTANCE, env

RUNS: list[tuple[RunConfig, str, str]] = []     # (config, report json, trace hash)


def run(cfg: RunConfig):
    rep, res = scenarios.run(cfg)
    RUNS.append((cfg, rep.to_json(), res.trace_hash))
    return rep, res


def verdict(cid: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[cid] = (bool(ok), detail)
    print(f"{cid} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"{cid}: {detail}"


def synthetic(seed, n, **kw):
    syn = kw.pop("syn", {})
    return RunConfig(seed=seed, synthetic=SyntheticSection(N=n, **syn), **kw)


# -- 1 and 3: epidemic shape ----------------------------------------------------------

@lru_cache(maxsize=None)
def logistic_runs():
    t = time.perf_counter()
    curves = []
    for s in range(20):
        _, res = run(synthetic(s, 256))
        curves.append(M.epidemic_curve(res.trace, "x/0"))
    return curves, time.perf_counter() - t


def test_c1_logistic_shape():
    curves, secs = logistic_runs()
    fits = [M.fit_beta(c, 256) for c in curves]
    r2 = [f.r_squared for f in fits]
    mono = all(f.monotone for f in fits)
    uni = all(M.unimodal_increments(c, 3) for c in curves)
    ok = min(r2) >= 0.95 and mono and uni and secs < 30
    verdict("C1", ok, f"N=256 x20: min R2 {min(r2):.3f}, monotone {mono}, "
                      f"unimodal {uni}, {secs:.1f}s")


def test_c3_uninformed_tail():
    curves, _ = logistic_runs()
    n = 256
    shape_ok = True
    for c in curves:
        y = np.asarray(c, dtype=float)
        z = np.log(1.0 - y[y < n] / n)
        # strictly decreasing, and never decelerating: superlinear to linear
        shape_ok &= bool(np.all(np.diff(z) < 0) and np.all(np.diff(z, 2) <= 1e-12))
    width = max(map(len, curves))
    pooled = np.mean([c + [n] * (width - len(c)) for c in curves], axis=0)
    r2 = M.uninformed_tail_r2(pooled, n)
    per_run = [M.uninformed_tail_r2(c, n) for c in curves]
    ok = shape_ok and r2 is not None and r2 >= 0.9
    verdict("C3", ok, f"log(1-I/N) decreasing and concave in all runs: {shape_ok}; mid-phase "
                      f"R2 {r2:.3f} on the seed-averaged curve (per run: min "
                      f"{min(per_run):.3f}, {sum(x >= 0.9 for x in per_run)}/20 >= 0.9)")


# -- 2: logarithmic scaling --------------------------------------------------------------

def test_c2_logarithmic_scaling():
    t = time.perf_counter()
    sizes = (16, 64, 256)
    med = [statistics.median(run(synthetic(s, n))[0].metrics["FCT"] for s in range(50))
           for n in sizes]
    secs = time.perf_counter() - t
    r2 = M.linear_r2(np.log2(sizes), med)
    ratio = med[-1] / med[0]
    ok = r2 >= 0.9 and ratio < 4 and secs < 120
    verdict("C2", ok, f"median FCT {med} at N={list(sizes)}: R2 {r2:.3f}, "
                      f"ratio {ratio:.2f}, {secs:.1f}s")


# -- 4: divergence contraction ---------------------------------------------------------

def test_c4_divergence_contraction():
    bad, r2s, etas = [], [], []
    for s in range(20):
        cfg = synthetic(s, 32, gossip=GossipSection(delta_cap=64),
                        syn=dict(injections=[], burst=BurstSpec(), stop="quiescent"))
        rep, _ = run(cfg)
        d = rep.series["D"]
        m = rep.metrics
        if not (all(b <= a for a, b in zip(d, d[1:])) and d[-1] == 0):
            bad.append(s)
        etas.append(m["eta_hat"])
        r2s.append(m["eta_r2"])
    eta_ok = all(e is not None and 0 < e < 1 for e in etas)
    r2_ok = all(r is not None and r >= 0.9 for r in r2s)
    ok = not bad and eta_ok and r2_ok
    verdict("C4", ok, f"N=32 burst x20: non-monotone {len(bad)}, eta in "
                      f"[{min(etas):.2f}, {max(etas):.2f}], log-D R2 min {min(r2s):.3f} "
                      f"mean {statistics.mean(r2s):.3f} (need >= 0.9)")


# -- 5: anti-entropy oracle ----------------------------------------------------------------

def random_value(key, rng):
    if key.startswith("hb/"):
        return Counter(rng.below(9))
    if key.startswith("cap/"):
        return Fact("cap", "c", str(rng.below(4)))
    if key.startswith("emb/"):
        return Vector((rng.random(), rng.random()))
    return Scalar(rng.random())


def test_c5_anti_entropy_oracle():
    rng = Rng(2024)
    keys = ["k1", "k2", "k3", "hb/1", "cap/1", "emb/1"]
    fails = 0
    for _ in range(500):
        a, b = Store(0), Store(1)
        for s in (a, b):
            for _ in range(rng.below(10)):
                key = rng.choice(keys)
                s.put_local(key, random_value(key, rng), Priority(rng.below(4)), 50,
                            rng.below(20))
        anti_entropy_session(a, b, 1 + rng.below(4))
        sa, sb = a.state(), b.state()
        plain = [k for k in set(sa) | set(sb) if not k.startswith("emb/")]
        fails += a.digest() != b.digest() or any(sa.get(k) != sb.get(k) for k in plain)
    order_fails = 0
    for _ in range(100):
        key = rng.choice(keys[:5])
        envs = [env(rng.below(4), i + 1, key, random_value(key, rng), tick=rng.below(5))
                for i in range(3)]
        outs = set()
        for p in itertools.permutations(envs):
            s = Store(9)
            apply_all(s, list(p), 0)
            outs.add(repr((s.state(), s.digest())))
        order_fails += len(outs) != 1
    verdict("C5", fails == 0 and order_fails == 0,
            f"500 pairs: {fails} mismatches; 100 three-envelope sets x 6 orderings: "
            f"{order_fails} order-dependent")


# -- 6: partitions -------------------------------------------------------------------------

def test_c6_partition_semantics():
    blocks = [list(range(32)), list(range(32, 64))]
    L = 10
    cap_fail, per_seed, fresh, recover, traces = 0, 0, [], [], []
    for s in range(20):
        cfg = synthetic(s, 64, max_ticks=1200,
                        faults=FaultSection(partitions=[PartitionSpec(5, 55, blocks)]),
                        syn=dict(stop="converged", injections=[
                            InjectionSpec(10, 0, "x/0", ttl_rounds=1000),
                            InjectionSpec(20, 40, "x/1", priority="Routine", ttl_rounds=1000),
                            InjectionSpec(55, s % 64, "x/2", ttl_rounds=1000)]))
        _, res = run(cfg)
        tr = res.trace
        for key in ("x/0", "x/1"):
            during = [n / a for r, n, a in M.informed_counts(tr, key) if r < 55]
            cap_fail += max(during) > 0.5 or during[-1] != 0.5
        fct = M.full_convergence_time(tr, "x/2")
        rec = max(next(r for r, n, a in M.informed_counts(tr, k) if n == a)
                  for k in ("x/0", "x/1")) - 55
        fresh.append(fct)
        recover.append(rec)
        traces.append(tr)
        per_seed += rec <= fct
    # the measured FCT of a fresh update injected at the heal, taken over all seeds
    bound = max(fresh)
    by_tick = (55 + bound + 1) * L - 1          # end of round 55 + bound
    npr = [M.partition_resilience(tr, 5 * L, 55 * L, by_tick=by_tick) for tr in traces]
    pc = [M.propagation_coverage(tr, k, 55 + bound) for tr in traces for k in ("x/0", "x/1")]
    ok = cap_fail == 0 and max(recover) <= bound and min(npr) == 1.0 and min(pc) == 1.0
    verdict("C6", ok, f"PC cap violations {cap_fail}; NPR min {min(npr):g} and PC min "
                      f"{min(pc):g} at heal + {bound} rounds (measured fresh FCT max); "
                      f"recovery max {max(recover)}; within same-seed FCT in {per_seed}/20")


# -- 7: failure detection -----------------------------------------------------------------

def test_c7_failure_detection():
    fpd, false_conf, det = {}, 0, []
    for n in (16, 32, 64):
        means = []
        for s in range(20):
            cfg = synthetic(s, n, max_ticks=10 * 45, gossip=GossipSection(delta_cap=64),
                            health=HealthSection(enabled=True, t_suspect=5, t_confirm=10),
                            faults=FaultSection(crashes=[CrashSpec(10, n - 1)]),
                            syn=dict(injections=[], stop="horizon"))
            m = run(cfg)[0].metrics
            false_conf += m["false_confirmations"]
            det.append(m["fpd_detection_rate"])
            means.append(m["fpd_mean"])
        fpd[n] = statistics.mean(means)
    c = fpd[16] / math.log2(16)
    growth = all(fpd[n] <= c * math.log2(n) for n in fpd)
    ok = false_conf == 0 and min(det) == 1.0 and growth
    verdict("C7", ok, f"false confirmations {false_conf}, detection {min(det):.2f}, mean FPD "
                      + ", ".join(f"N={n}: {v:.1f}" for n, v in fpd.items())
                      + f" (bound {c:.2f}*log2 N)")


# -- 8: corroboration boundary -----------------------------------------------------------

def adversarial(seed, nadv):
    return synthetic(seed, 64 + nadv, max_ticks=400,
                     trust=TrustSection(signing=True, corroboration=True, k=2,
                                        adversaries=[AdversarySpec(64 + i)
                                                     for i in range(nadv)]),
                     syn=dict(injections=[InjectionSpec(2, 0, "x/0")], stop="horizon"))


def test_c8_corroboration_boundary():
    one = [run(adversarial(s, 1))[0].metrics["false_commits"] for s in range(50)]
    two = [run(adversarial(s, 2))[0].metrics["false_commits"] for s in range(50)]
    # tampering: every single-bit flip of the signature, and a changed value
    registry = KeyRegistry.generate(range(4), Rng(5))
    tamper_ok = True
    for origin in range(4):
        e = sign_envelope(env(origin=origin, value=Scalar(1.0)), registry.signer(origin))
        tamper_ok &= verify_envelope(e, registry)
        tamper_ok &= not verify_envelope(replace(e, value=Scalar(2.0)), registry)
        for bit in range(len(e.signature) * 8):
            sig = bytearray(e.signature)
            sig[bit // 8] ^= 1 << (bit % 8)
            tamper_ok &= not verify_envelope(replace(e, signature=bytes(sig)), registry)
    forged_stored = rejects = 0
    for s in range(5):
        cfg = synthetic(s, 65, max_ticks=300,
                        trust=TrustSection(signing=True, corroboration=True,
                                           adversaries=[AdversarySpec(64, behavior="forger",
                                                                      victim=5)]),
                        syn=dict(injections=[], stop="horizon"))
        rep, res = run(cfg)
        rejects += rep.metrics["rejects"]
        keys = key_registry(cfg, range(65))
        forged_stored += sum(not verify_envelope(e, keys)
                             for a, st in res.agents.items() if a != 64
                             for e in st.store.live_envelopes())
    ok = sum(one) == 0 and sum(1 for x in two if x) >= 1 and tamper_ok \
        and rejects > 0 and forged_stored == 0
    verdict("C8", ok, f"1 injector: {sum(one)} false commits / 50 seeds; 2 colluders: "
                      f"false commits in {sum(1 for x in two if x)}/50 seeds; tamper rejected "
                      f"{tamper_ok}; forger rejects {rejects}, forged stored {forged_stored}")


# -- 9: suppression trade-off ---------------------------------------------------------------

def test_c9_suppression_tradeoff():
    good = 0
    for s in range(20):
        out = []
        for k in (2, 8):
            cfg = synthetic(s, 64, max_ticks=3000, gossip=GossipSection(suppression_k=k),
                            syn=dict(stop="quiescent", injections=[
                                InjectionSpec(priority="Routine", ttl_rounds=1000)]))
            m = run(cfg)[0].metrics
            out.append((m["RO"], m["FCT"]))
        good += out[0][0] < out[1][0] and out[0][1] <= 2 * out[1][1]
    verdict("C9", good == 20, f"k=2 cheaper with FCT within 2x in {good}/20 paired seeds")


# -- 10: scenario directions -----------------------------------------------------------------

def test_c10_scenarios():
    fac = load(packaged_config("factory_default.json"))
    dis = load(packaged_config("disaster_default.json"))
    f_wins = d_wins = 0
    for s in range(20):
        b = run(replace(fac, mode="BaselineDirect", seed=s))[0].metrics
        g = run(replace(fac, mode="GossipAugmented", seed=s))[0].metrics
        f_wins += g["alert_propagation_time"] < b["alert_propagation_time"]
        b = run(replace(dis, mode="BaselineDirect", seed=s))[0].metrics
        g = run(replace(dis, mode="GossipAugmented", seed=s))[0].metrics
        d_wins += g["hazard_coverage"] >= b["hazard_coverage"]
    try:
        rep, _ = run(load(packaged_config("walkthrough.json")))
        walk = rep.metrics["arm_speed"] == 80.0 and rep.metrics["final_D"] == 0.0
        walk_note = f"walkthrough speed 100->{rep.metrics['arm_speed']:g}, " \
                    f"final D {rep.metrics['final_D']:g}"
    except WalkthroughError as e:
        walk, walk_note = False, f"walkthrough failed at {e}"
    ok = f_wins >= 18 and d_wins >= 18 and walk
    verdict("C10", ok, f"factory gossip faster {f_wins}/20; disaster coverage >= baseline "
                       f"{d_wins}/20; {walk_note}")


# -- 11: determinism -----------------------------------------------------------------------

def test_c11_determinism():
    if not RUNS:        # run on its own: exercise one config per criterion family
        for cfg in (synthetic(1, 256), adversarial(1, 2),
                    load(packaged_config("factory_default.json")),
                    load(packaged_config("disaster_default.json"))):
            run(cfg)
    mismatched = 0
    for cfg, report, thash in list(RUNS):
        rep, res = scenarios.run(cfg)
        mismatched += rep.to_json() != report or res.trace_hash != thash
    verdict("C11", mismatched == 0, f"{len(RUNS)} runs re-executed: {mismatched} differ")
