import itertools

import pytest
from hypothesis import given, strategies as st

from geacl.core import Counter, Fact, Priority, Scalar, Vector, vv_missing
from geacl.dissemination import anti_entropy_session
from geacl.rng import Rng
from geacl.store import (
    GrowOnlySetUnion, LwwRegister, MaxCounter, Outcome, Store, VectorBlend, apply_all,
    entries_since, merge_entry, policy_for_key,
)

from conftest import env


def test_policy_by_prefix():
    assert isinstance(policy_for_key("hb/3"), MaxCounter)
    assert isinstance(policy_for_key("cap/3"), GrowOnlySetUnion)
    assert isinstance(policy_for_key("emb/3"), VectorBlend)
    assert isinstance(policy_for_key("load/3"), LwwRegister)
    with pytest.raises(ValueError):
        VectorBlend(0.0)


def test_put_local_defect_fact():
    s = Store(owner=3)
    fact = Fact("defect_spike", "WS4", "high_severity")
    e = s.put_local("defect/WS4", fact, Priority.CRITICAL, 16, 100)
    assert (e.origin, e.seq, e.value, e.priority, e.created_tick) == \
        (3, 1, fact, Priority.CRITICAL, 100)
    assert s.get("defect/WS4") == fact
    assert s.put_local("x", Scalar(1.0), Priority.LOW, 1, 101).seq == 2
    with pytest.raises(ValueError):
        s.put_local("x", Scalar(1.0), Priority.LOW, 0, 101)


def test_lww_tie_break_higher_origin():
    local, _ = merge_entry(None, env(origin=2, tick=5, value=Fact("a", "a", "a")),
                           LwwRegister(), 0)
    entry, changed = merge_entry(local, env(origin=9, tick=5, value=Fact("b", "b", "b")),
                                 LwwRegister(), 0)
    assert changed and entry.value == Fact("b", "b", "b")


def test_max_counter():
    local, _ = merge_entry(None, env(key="hb/1", value=Counter(7), seq=2), MaxCounter(), 0)
    entry, changed = merge_entry(local, env(key="hb/1", value=Counter(3), seq=1),
                                 MaxCounter(), 0)
    assert entry.value == Counter(7) and not changed


def test_heartbeat_stale_counter_kept():
    s = Store(0)
    s.apply_remote(env(origin=1, seq=7, key="hb/1", value=Counter(7)), 0)
    s.apply_remote(env(origin=1, seq=5, key="hb/1", value=Counter(5)), 0)
    assert s.get("hb/1") == Counter(7)


def test_type_confusion_rejected():
    s = Store(0)
    assert s.apply_remote(env(key="hb/1", value=Scalar(1.0)), 0) is Outcome.REJECTED
    assert not s.digest().covers(1, 1)


def test_vector_blend():
    pol = VectorBlend(0.5)
    a, _ = merge_entry(None, env(key="emb/1", value=Vector((0.0, 2.0)), tick=1), pol, 0)
    b, changed = merge_entry(a, env(key="emb/1", value=Vector((2.0, 0.0)), tick=2, seq=2),
                             pol, 0)
    assert changed and b.value == Vector((1.0, 1.0))


def test_apply_remote_outcomes():
    s = Store(0)
    e = env(origin=4, key="k")
    assert s.apply_remote(e, 0) is Outcome.NEW
    assert s.apply_remote(e, 0) is Outcome.STALE
    assert s.apply_remote(env(origin=4, seq=2, tick=3), 0) is Outcome.UPDATED
    assert s.apply_remote(env(origin=1, seq=1, tick=1), 0) is Outcome.STALE   # loses LWW


def _pool(kind: str, n: int, rng: Rng):
    out = []
    for i in range(n):
        origin = rng.below(4)
        tick = rng.below(5)
        if kind == "lww":
            out.append(env(origin, i + 1, "k", Scalar(float(rng.below(100))), tick=tick))
        elif kind == "counter":
            out.append(env(origin, i + 1, "hb/0", Counter(rng.below(20)), tick=tick))
        else:
            out.append(env(origin, i + 1, "cap/0", Fact("cap", "c", str(rng.below(6))),
                           tick=tick))
    return out


def _final(envs):
    s = Store(99)
    apply_all(s, envs, 0)
    return s.state(), s.digest()


@pytest.mark.parametrize("kind", ["lww", "counter", "set"])
def test_order_independence_all_orderings(kind):
    rng = Rng(11)
    for _ in range(20):
        envs = _pool(kind, 3, rng)
        results = {repr(_final(list(p))) for p in itertools.permutations(envs)}
        assert len(results) == 1


@pytest.mark.parametrize("kind", ["lww", "counter", "set"])
def test_order_independence_random_shuffles(kind):
    rng = Rng(12)
    envs = _pool(kind, 10, rng)
    want = _final(envs)
    for _ in range(500):
        order = list(envs)
        rng.shuffle(order)
        assert _final(order) == want


def test_two_stores_same_50_envelopes():
    rng = Rng(5)
    envs = []
    for i in range(50):
        key = rng.choice(["a", "b", "hb/1", "cap/1"])
        val = Counter(rng.below(9)) if key.startswith("hb/") else Scalar(float(rng.below(9)))
        if key.startswith("cap/"):
            val = Fact("cap", "x", str(rng.below(5)))
        envs.append(env(rng.below(5), i + 1, key, val, tick=rng.below(10)))
    rev = list(reversed(envs))
    a, b = Store(0), Store(1)
    apply_all(a, envs, 0)
    apply_all(b, rev + envs, 0)        # different order and multiplicity
    assert a.state() == b.state() and a.digest() == b.digest()


def test_entries_since_order_and_cap():
    s = Store(0)
    s.put_local("r", Scalar(1.0), Priority.ROUTINE, 8, 0)
    s.put_local("c", Scalar(1.0), Priority.CRITICAL, 8, 5)
    s.put_local("l", Scalar(1.0), Priority.LOW, 8, 1)
    assert entries_since(s, s.digest(), 10) == []
    keys = [e.key for e in entries_since(s, {}, 10)]
    assert keys == ["c", "r", "l"]
    assert [e.key for e in entries_since(s, {}, 2)] == ["c", "r"]


def test_expire_boundaries():
    s = Store(0)
    s.put_local("k", Scalar(1.0), Priority.ROUTINE, 2, 0)
    assert s.expire(20, 10) == []            # exactly two rounds: kept
    assert s.expire(30, 10) == ["k"]         # three rounds: gone
    assert s.digest().covers(0, 1)


def test_no_resurrection_after_expiry():
    s = Store(0)
    e = env(origin=3, ttl=2)
    s.apply_remote(e, 0)
    s.expire(100, 10)
    assert "k" not in s.entries
    assert s.apply_remote(e, 100) is Outcome.STALE
    assert "k" not in s.entries


# -- closure and convergence properties -------------------------------------------

store_ops = st.lists(st.tuples(st.integers(0, 3), st.sampled_from(["a", "b", "hb/x", "cap/x"]),
                               st.integers(0, 5), st.integers(0, 20)), max_size=25)


def _fill(ops):
    envs, seqs = [], {}
    for origin, key, val, tick in ops:
        seqs[origin] = seqs.get(origin, 0) + 1
        v = Counter(val) if key.startswith("hb/") else Scalar(float(val))
        if key.startswith("cap/"):
            v = Fact("cap", "x", str(val))
        envs.append(env(origin, seqs[origin], key, v, tick=tick))
    return envs


@given(store_ops, st.randoms(use_true_random=False))
def test_delta_closure(ops, rnd):
    envs = _fill(ops)
    a, b = Store(10), Store(11)
    for e in envs:
        (a if rnd.random() < 0.5 else b).apply_remote(e, 0)
    for e in entries_since(a, b.digest(), 1000):
        b.apply_remote(e, 0)
    b.absorb_digest(a.digest())
    assert vv_missing(b.digest().vv, a.digest().vv) == []


@given(store_ops, st.permutations(range(25)))
def test_digest_monotone_and_convergent(ops, perm):
    envs = _fill(ops)
    order = [envs[i] for i in perm if i < len(envs)]
    a, b = Store(10), Store(11)
    prev = a.digest()
    for e in envs:
        a.apply_remote(e, 0)
        cur = a.digest()
        assert all(cur.covers(o, s) for o, s in prev.vv.items() if s)
        prev = cur
    apply_all(b, order + order, 0)
    assert a.state() == b.state() and a.digest() == b.digest()


def test_anti_entropy_session_examples():
    a, b = Store(0), Store(1)
    for i in range(5):
        a.put_local(f"a{i}", Scalar(float(i)), Priority.ROUTINE, 8, i)
        b.put_local(f"b{i}", Scalar(float(i)), Priority.ROUTINE, 8, i)
    same_a, same_b = Store(0), Store(1)
    stats = anti_entropy_session(same_a, same_b, 3)
    assert stats.rounds == 1 and stats.envelopes == 0
    stats = anti_entropy_session(a, b, 3)
    assert len(a.entries) == len(b.entries) == 10
    assert stats.delta_messages >= 4
    assert a.digest() == b.digest() and a.state() == b.state()
