import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geacl import metrics as M
from geacl.config import (
    FaultSection, GossipSection, InjectionSpec, PartitionSpec, RunConfig, SyntheticSection,
)
from geacl.scenarios.synthetic import report, run_synthetic
from geacl.simnet import read_trace, write_trace

S1 = ["S", 1.0]
S2 = ["S", 2.0]


def snap(r, alive, hold):
    return {"type": "round", "r": r, "t": r * 10, "alive": list(alive),
            "hold": {k: [[a, t] for a, t in v] for k, v in hold.items()}}


def inject(r, agent, key="x/0", seq=1):
    return {"type": "inject", "t": r * 10, "r": r, "agent": agent, "key": key,
            "origin": agent, "seq": seq, "priority": "Critical"}


def hand_trace():
    return [inject(0, 0),
            snap(0, range(4), {"x/0": [(0, S1)]}),
            snap(1, range(4), {"x/0": [(0, S1), (1, S1)]}),
            snap(2, range(4), {"x/0": [(a, S1) for a in range(4)]})]


def test_pl_fct_hand_trace():
    tr = hand_trace()
    assert M.propagation_latency(tr, "x/0") == 2
    assert M.full_convergence_time(tr, "x/0") == 2
    assert M.propagation_latency(tr, "x/0", q=0.5) == 1
    assert M.propagation_coverage(tr, "x/0", 1) == 0.5


def test_degenerate_cases():
    tr = [inject(0, 0), snap(0, range(3), {"x/0": [(a, S1) for a in range(3)]})]
    assert M.propagation_latency(tr, "x/0") == 0
    single = [inject(0, 0), snap(0, [0], {"x/0": [(0, S1)]})]
    assert M.full_convergence_time(single, "x/0") == 0
    assert M.divergence_window(single, "x/0") == 0


def test_unreached_reports_coverage():
    tr = [inject(0, 0), snap(0, range(4), {"x/0": [(0, S1)]})]
    with pytest.raises(M.Unreached) as e:
        M.propagation_latency(tr, "x/0")
    assert e.value.coverage == 0.25


def test_divergence_window_counts_conflict_rounds():
    tr = [inject(0, 0),
          snap(0, range(3), {"x/0": [(0, S1), (1, S2)]}),
          snap(1, range(3), {"x/0": [(0, S1), (1, S1)]}),
          snap(2, range(3), {"x/0": [(a, S1) for a in range(3)]})]
    assert M.divergence_window(tr, "x/0") == 1


def test_partition_bound_pc():
    tr = [inject(0, 0)] + [snap(r, range(64), {"x/0": [(a, S1) for a in range(40)]})
                           for r in range(5)]
    assert M.propagation_coverage(tr, "x/0", 4) == 0.625


def test_semantic_divergence_examples():
    same = snap(0, [0, 1], {"a": [(0, S1), (1, S1)]})
    assert M.semantic_divergence(same) == 0.0
    three = snap(0, [0, 1], {k: [(0, S1), (1, S2)] for k in ("a", "b", "c")})
    assert M.semantic_divergence(three) == 3.0
    one_sided = snap(0, [0, 1, 2], {"a": [(0, S1)]})
    assert M.semantic_divergence(one_sided) == 2.0
    vec = snap(0, [0, 1], {"e": [(0, ["V", [1.0, 0.0]]), (1, ["V", [0.0, 1.0]])]})
    assert M.semantic_divergence(vec) == pytest.approx(1.0)


holds = st.dictionaries(st.sampled_from(["a", "b", "c"]),
                        st.lists(st.tuples(st.integers(0, 5), st.integers(0, 2)),
                                 unique_by=lambda t: t[0], max_size=6), max_size=3)


@given(holds, st.permutations(range(6)))
def test_divergence_relabeling_invariant(hold, perm):
    h = {k: [(a, ["S", float(v)]) for a, v in lst] for k, lst in hold.items()}
    relabeled = {k: [(perm[a], t) for a, t in lst] for k, lst in h.items()}
    assert M.semantic_divergence(snap(0, range(6), h)) == \
        M.semantic_divergence(snap(0, range(6), relabeled))


def test_estimate_eta():
    d = [100 * 0.6 ** t for t in range(8)]
    est = M.estimate_eta(d)
    assert est.eta_hat == pytest.approx(0.4) and est.r_squared == pytest.approx(1.0)
    assert M.estimate_eta([0, 0, 0]).converged_at_start


def test_fit_beta_exact_logistic():
    t = np.arange(20)
    curve = M.logistic(t, 1.0, 100)
    fit = M.fit_beta(curve, 100)
    assert abs(fit.beta_hat - 1.0) <= 0.01 and fit.r_squared >= 0.999
    assert fit.monotone and not fit.degenerate


def test_fit_beta_flags():
    assert M.fit_beta([1, 1, 1], 1).degenerate
    fit = M.fit_beta([1, 3, 2, 6, 10, 10], 10)
    assert not fit.monotone


def test_uninformed_tail_exact():
    n = 1000
    curve = [n * (1 - 0.5 ** t) for t in range(1, 12)]
    assert M.uninformed_tail_r2(curve, n) == pytest.approx(1.0)


def test_unimodal_increments():
    assert M.unimodal_increments([1, 2, 4, 8, 12, 14, 15, 15])
    assert not M.unimodal_increments([1, 2, 6, 7, 12, 13, 20, 21, 30])


def test_redundancy_overhead_minimum():
    tr = [inject(0, 0),
          {"type": "send", "t": 0, "src": 0, "dst": 1, "kind": "rumor", "tk": {"x/0": 1}},
          snap(0, [0, 1], {"x/0": [(0, S1), (1, S1)]})]
    assert M.redundancy_overhead(tr, "x/0") == 1.0
    lone = [inject(0, 0), snap(0, [0, 1], {"x/0": [(0, S1)]})]
    assert M.redundancy_overhead(lone, "x/0") is None


def test_partition_resilience_and_availability():
    tr = [inject(1, 0, "x/a", 1), inject(2, 1, "x/b", 1),
          {"type": "learn", "t": 30, "agent": 1, "key": "x/a", "origin": 0, "seq": 1},
          {"type": "learn", "t": 90, "agent": 0, "key": "x/b", "origin": 1, "seq": 1},
          snap(9, [0, 1], {})]
    assert M.partition_resilience(tr, 0, 50) == 1.0
    assert M.partition_resilience(tr, 0, 50, by_tick=50) == 0.5
    assert M.availability_under_churn(tr) == 1.0


def test_task_redistribution_efficiency():
    assert M.task_redistribution_efficiency(2.0, 8.0) == 0.25
    assert M.task_redistribution_efficiency(2.0, 0.0) is None


# -- run-based properties ---------------------------------------------------------

def test_pl_le_fct_over_random_runs():
    for seed in range(100):
        n = 8 + seed % 40
        mode = ("Push", "Pull", "PushPull")[seed % 3]
        cfg = RunConfig(seed=seed, gossip=GossipSection(mode=mode),
                        synthetic=SyntheticSection(N=n))
        _, res = run_synthetic(cfg)
        tr = res.trace
        pl = [M.propagation_latency(tr, "x/0", q) for q in (0.5, 0.8, 0.95)]
        fct = M.full_convergence_time(tr, "x/0")
        assert pl == sorted(pl) and pl[-1] <= fct
        assert M.propagation_coverage(tr, "x/0", M.injection_round(tr, "x/0") + fct) == 1.0


def test_metrics_recomputed_from_persisted_trace(tmp_path):
    cfg = RunConfig(seed=9, synthetic=SyntheticSection(N=32))
    rep, res = run_synthetic(cfg)
    write_trace(res.trace, tmp_path / "t.ndjson")
    res.trace = read_trace(tmp_path / "t.ndjson")
    assert report(cfg, res).to_json() == rep.to_json()


def test_pc_post_heal_reaches_one():
    for seed in range(20):
        blocks = [list(range(32)), list(range(32, 64))]
        cfg = RunConfig(seed=seed, max_ticks=1500,
                        faults=FaultSection(partitions=[PartitionSpec(1, 20, blocks)]),
                        synthetic=SyntheticSection(N=64, injections=[InjectionSpec(
                            round=2, ttl_rounds=1000)]))
        rep, _ = run_synthetic(cfg)
        assert rep.metrics["final_coverage"] == 1.0


def test_suppression_k2_cheaper_than_k8():
    lower = 0
    for seed in range(20):
        ro = []
        for k in (2, 8):
            cfg = RunConfig(seed=seed, max_ticks=3000, gossip=GossipSection(suppression_k=k),
                            synthetic=SyntheticSection(N=64, stop="quiescent", injections=[
                                InjectionSpec(priority="Routine", ttl_rounds=1000)]))
            ro.append(run_synthetic(cfg)[0].metrics["RO"])
        lower += ro[0] < ro[1]
    assert lower == 20


def test_log_helpers():
    assert M.linear_r2([0, 1, 2], [1, 3, 5]) == pytest.approx(1.0)
    assert math.isclose(M.r_squared([1, 1], np.array([1, 1])), 1.0)
