import itertools

import pytest
from hypothesis import given, strategies as st

from geacl.core import Priority
from geacl.filtering import FilterPolicy, score, select_for_message

from conftest import env

POL = FilterPolicy()


def test_score_table():
    assert score(env(priority=Priority.CRITICAL), 0, 10, POL) == 8
    assert score(env(priority=Priority.ROUTINE), 0, 10, POL) == 2
    assert score(env(priority=Priority.ROUTINE), 20, 10, POL) == pytest.approx(1.445)


def test_policy_validation():
    with pytest.raises(ValueError):
        FilterPolicy(gamma=0.0)
    with pytest.raises(ValueError):
        FilterPolicy(priority_weight={Priority.CRITICAL: 1.0, Priority.HIGH: 4.0,
                                      Priority.ROUTINE: 2.0, Priority.LOW: 1.0})


@given(st.sampled_from(list(Priority)), st.integers(0, 500), st.integers(0, 500))
def test_older_never_outscores_younger(prio, t1, t2):
    old, young = sorted((t1, t2))
    now = 600
    assert score(env(priority=prio, tick=old), now, 10, POL) <= \
        score(env(priority=prio, tick=young), now, 10, POL)


def test_priority_dominance_with_budget():
    rs = [env(seq=i, priority=Priority.ROUTINE, tick=i) for i in range(1, 4)]
    c = env(seq=9, priority=Priority.CRITICAL)
    got, extra = select_for_message(rs + [c], 2, 10, 10, POL)
    assert got == [c, rs[0]] and extra == 0


def test_critical_overflow():
    cs = [env(seq=i, priority=Priority.CRITICAL) for i in range(1, 6)]
    got, extra = select_for_message(cs, 2, 0, 10, POL)
    assert len(got) == 5 and extra == 3


envs = st.lists(st.tuples(st.integers(0, 5), st.sampled_from(list(Priority)), st.integers(0, 30)),
                max_size=12, unique_by=lambda t: t[0])


@given(envs, st.integers(1, 6))
def test_selection_matches_brute_force(spec, budget):
    pool = [env(origin=o, seq=1, priority=p, tick=t) for o, p, t in spec]
    got, _ = select_for_message(pool, budget, 40, 10, POL)
    # brute-force oracle: the permutation whose keys are lexicographically sorted
    keyed = [(-POL.priority_weight[e.priority] * POL.gamma ** ((40 - e.created_tick) // 10),
              e.created_tick, e.origin, e.seq, i) for i, e in enumerate(pool)]
    best = min(itertools.permutations(keyed), key=list) if len(pool) <= 6 else sorted(keyed)
    order = [pool[k[-1]] for k in best]
    want = order[:budget] + [e for e in order[budget:] if e.priority is Priority.CRITICAL]
    assert got == want
