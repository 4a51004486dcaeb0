"""Per-agent semantic state: versioned entries, merge policies, digests, expiry.

Merge policy is chosen by key prefix:

=========  =================
``hb/``    max counter
``cap/``   grow-only set union
``emb/``   vector blend
other      last-writer-wins
=========  =================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Union

from .core import (
    AgentId,
    Counter,
    Envelope,
    EnvelopeId,
    Priority,
    Tick,
    Value,
    Vector,
    VersionVector,
    value_token,
)


class TypeConfusion(ValueError):
    """An envelope's value variant does not fit the key's merge policy."""


@dataclass(frozen=True, slots=True)
class LwwRegister:
    pass


@dataclass(frozen=True, slots=True)
class MaxCounter:
    pass


@dataclass(frozen=True, slots=True)
class GrowOnlySetUnion:
    pass


@dataclass(frozen=True, slots=True)
class VectorBlend:
    alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")


MergePolicy = Union[LwwRegister, MaxCounter, GrowOnlySetUnion, VectorBlend]

PREFIX_POLICIES = (("hb/", MaxCounter()), ("cap/", GrowOnlySetUnion()))


def policy_for_key(key: str, blend_alpha: float = 1.0) -> MergePolicy:
    for prefix, policy in PREFIX_POLICIES:
        if key.startswith(prefix):
            return policy
    if key.startswith("emb/"):
        return VectorBlend(blend_alpha)
    return LwwRegister()


class Outcome(Enum):
    NEW = "new"
    UPDATED = "updated"
    STALE = "stale"
    REJECTED = "rejected"
    HELD = "held"  # parked by the corroboration gate, never reaches the store


def _lww_stamp(env: Envelope) -> tuple[int, int, int]:
    # seq completes the order for two writes by one origin in the same tick
    return (env.created_tick, env.origin, env.seq)


def _counter_stamp(env: Envelope) -> tuple[int, int, int, int]:
    return (env.value.n,) + _lww_stamp(env)


@dataclass(slots=True)
class StoreEntry:
    envelope: Envelope          # live (winning) envelope; carries metadata
    applied_tick: Tick
    policy: MergePolicy
    value: Value                # equals envelope.value except after a blend
    set_elements: Optional[frozenset] = None
    contributors: tuple[Envelope, ...] = ()

    def live_envelopes(self) -> tuple[Envelope, ...]:
        return self.contributors if self.set_elements is not None else (self.envelope,)

    def state(self):
        """Comparable view of the stored state (value plus winning id)."""
        if self.set_elements is not None:
            val = sorted(map(repr, self.set_elements))
        else:
            val = value_token(self.value)
        return (self.envelope.id, repr(val))


def _check_variant(policy: MergePolicy, env: Envelope, dim: Optional[int]) -> None:
    if isinstance(policy, MaxCounter) and not isinstance(env.value, Counter):
        raise TypeConfusion(f"{env.key}: max-counter key needs a Counter")
    if isinstance(policy, VectorBlend):
        if not isinstance(env.value, Vector):
            raise TypeConfusion(f"{env.key}: blend key needs a Vector")
        if dim is not None and env.value.dim != dim:
            raise TypeConfusion(f"{env.key}: vector dimension {env.value.dim} != {dim}")


def merge_entry(
    local: Optional[StoreEntry],
    remote: Envelope,
    policy: MergePolicy,
    now: Tick,
    *,
    vector_dim: Optional[int] = None,
) -> tuple[StoreEntry, bool]:
    """Merge one remote envelope into an (optional) local entry.

    Returns the resulting entry and whether value or metadata changed.
    Raises :class:`TypeConfusion` on a policy/variant mismatch.
    """
    _check_variant(policy, remote, vector_dim)
    if local is None:
        if isinstance(policy, GrowOnlySetUnion):
            return StoreEntry(remote, now, policy, remote.value,
                              frozenset([remote.value]), (remote,)), True
        return StoreEntry(remote, now, policy, remote.value), True

    if isinstance(policy, LwwRegister):
        if _lww_stamp(remote) > _lww_stamp(local.envelope):
            return StoreEntry(remote, now, policy, remote.value), True
        return local, False

    if isinstance(policy, MaxCounter):
        if _counter_stamp(remote) > _counter_stamp(local.envelope):
            return StoreEntry(remote, now, policy, remote.value), True
        return local, False

    if isinstance(policy, GrowOnlySetUnion):
        if any(c.id == remote.id for c in local.contributors):
            return local, False
        elements = local.set_elements | {remote.value}
        contributors = tuple(sorted(local.contributors + (remote,), key=_lww_stamp))
        winner = contributors[-1]
        changed = elements != local.set_elements or winner.id != local.envelope.id
        return StoreEntry(winner, now, policy, winner.value, elements, contributors), changed

    # VectorBlend
    if _lww_stamp(remote) <= _lww_stamp(local.envelope):
        return local, False
    a = policy.alpha
    blended = Vector(tuple((1.0 - a) * x + a * y
                           for x, y in zip(local.value.xs, remote.value.xs)))
    return StoreEntry(remote, now, policy, blended), True


# -- digests -----------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Digest:
    """What a store has seen: a gap-free version vector plus out-of-order ids.

    ``vv[o] = s`` means every sequence number ``1..s`` from origin ``o`` has
    been absorbed; ``dots`` lists ids seen beyond that prefix.
    """

    vv: Mapping[int, int]
    dots: frozenset = frozenset()

    def covers(self, origin: int, seq: int) -> bool:
        return seq <= self.vv.get(origin, 0) or (origin, seq) in self.dots

    def size(self) -> int:
        return len(self.vv) + len(self.dots)

    def without(self, origins) -> "Digest":
        """Digest with every entry of the given origins dropped."""
        if not origins:
            return self
        return Digest({o: s for o, s in self.vv.items() if o not in origins},
                      frozenset(d for d in self.dots if d[0] not in origins))


EMPTY_DIGEST = Digest({})


def as_digest(d: Union[Digest, Mapping[int, int]]) -> Digest:
    return d if isinstance(d, Digest) else Digest(dict(d))


class SeenSet:
    """Mutable digest state for one store."""

    __slots__ = ("vv", "dots", "high")

    def __init__(self):
        self.vv: dict[int, int] = {}
        self.dots: dict[int, set[int]] = {}
        self.high: dict[int, int] = {}

    def covers(self, origin: int, seq: int) -> bool:
        if seq <= self.vv.get(origin, 0):
            return True
        d = self.dots.get(origin)
        return d is not None and seq in d

    def add(self, origin: int, seq: int) -> None:
        if seq > self.high.get(origin, 0):
            self.high[origin] = seq
        base = self.vv.get(origin, 0)
        if seq <= base:
            return
        if seq == base + 1:
            self.vv[origin] = seq
            self._compact(origin)
        else:
            self.dots.setdefault(origin, set()).add(seq)

    def _compact(self, origin: int) -> None:
        d = self.dots.get(origin)
        if not d:
            return
        base = self.vv.get(origin, 0)
        while base + 1 in d:
            base += 1
            d.discard(base)
        for s in [s for s in d if s <= base]:
            d.discard(s)
        self.vv[origin] = base
        if not d:
            del self.dots[origin]

    def absorb(self, other: Digest) -> None:
        for origin, seq in other.vv.items():
            if seq > self.vv.get(origin, 0):
                self.vv[origin] = seq
            if seq > self.high.get(origin, 0):
                self.high[origin] = seq
            self._compact(origin)
        for origin, seq in other.dots:
            self.add(origin, seq)

    def digest(self) -> Digest:
        dots = frozenset((o, s) for o, ss in self.dots.items() for s in ss)
        return Digest(dict(self.vv), dots)


# -- store -------------------------------------------------------------------

def delta_order(env: Envelope) -> tuple[int, int, int, int]:
    return (-int(env.priority), env.created_tick, env.origin, env.seq)


@dataclass
class Store:
    owner: AgentId
    blend_alpha: float = 1.0
    vector_dim: Optional[int] = None
    entries: dict[str, StoreEntry] = field(default_factory=dict)
    next_seq: int = 1
    seen: SeenSet = field(default_factory=SeenSet)

    def policy(self, key: str) -> MergePolicy:
        return policy_for_key(key, self.blend_alpha)

    def get(self, key: str) -> Optional[Value]:
        e = self.entries.get(key)
        return None if e is None else e.value

    def put_local(self, key: str, value: Value, priority: Priority,
                  ttl_rounds: int, now: Tick) -> Envelope:
        """Write a fresh local update and return it for dissemination."""
        if ttl_rounds < 1:
            raise ValueError("ttl_rounds must be >= 1")
        env = Envelope(self.owner, self.next_seq, key, value, priority, now, ttl_rounds)
        self.next_seq += 1
        entry, _ = merge_entry(self.entries.get(key), env, self.policy(key), now,
                               vector_dim=self.vector_dim)
        self.entries[key] = entry
        self.seen.add(env.origin, env.seq)
        return env

    def apply_remote(self, env: Envelope, now: Tick) -> Outcome:
        if self.seen.covers(env.origin, env.seq):
            return Outcome.STALE
        local = self.entries.get(env.key)
        try:
            entry, changed = merge_entry(local, env, self.policy(env.key), now,
                                         vector_dim=self.vector_dim)
        except TypeConfusion:
            return Outcome.REJECTED
        self.seen.add(env.origin, env.seq)
        if local is None:
            self.entries[env.key] = entry
            return Outcome.NEW
        if changed or entry is not local:
            self.entries[env.key] = entry
        return Outcome.UPDATED if changed else Outcome.STALE

    def digest(self) -> Digest:
        return self.seen.digest()

    def high_water(self) -> VersionVector:
        """Pointwise max of every (origin, seq) ever absorbed."""
        return dict(self.seen.high)

    def live_envelopes(self) -> list[Envelope]:
        out: list[Envelope] = []
        for e in self.entries.values():
            out.extend(e.live_envelopes())
        return out

    def delta_for(self, remote: Union[Digest, Mapping[int, int]],
                  cap: int) -> tuple[list[Envelope], bool]:
        """Envelopes the remote lacks, in dissemination order; flag is True when not truncated."""
        if cap < 1:
            raise ValueError("cap must be >= 1")
        envs, rest = self._missing(remote, cap)
        return envs, not rest

    def _missing(self, remote, cap: int) -> tuple[list[Envelope], list[Envelope]]:
        remote = as_digest(remote)
        missing = [env for env in self.live_envelopes()
                   if not remote.covers(env.origin, env.seq)]
        missing.sort(key=delta_order)
        return missing[:cap], missing[cap:]

    def delta_with_digest(self, remote, cap: int) -> tuple[list[Envelope], Digest, bool]:
        """Truncated delta plus the part of the own digest it fully backs.

        Origins with envelopes cut by the cap are left out of the digest, so
        a receiver that applies the delta may absorb what remains.
        """
        if cap < 1:
            raise ValueError("cap must be >= 1")
        envs, rest = self._missing(remote, cap)
        return envs, self.digest().without({e.origin for e in rest}), not rest

    def entries_since(self, remote: Union[Digest, Mapping[int, int]], cap: int) -> list[Envelope]:
        return self.delta_for(remote, cap)[0]

    def absorb_digest(self, d: Digest) -> None:
        """Adopt a peer's digest after applying the delta that backs it."""
        self.seen.absorb(d)

    def expire(self, now: Tick, round_len: int) -> list[str]:
        gone = [k for k, e in self.entries.items()
                if (now - e.envelope.created_tick) // round_len > e.envelope.ttl_rounds]
        for k in gone:
            del self.entries[k]
        return gone

    def state(self) -> dict[str, tuple]:
        return {k: e.state() for k, e in self.entries.items()}


def apply_all(store: Store, envs: Iterable[Envelope], now: Tick) -> list[Outcome]:
    return [store.apply_remote(e, now) for e in envs]


def digest(store: Store) -> Digest:
    return store.digest()


def entries_since(store: Store, remote_digest, cap: int) -> list[Envelope]:
    return store.entries_since(remote_digest, cap)


def expire(store: Store, now: Tick, round_len: int) -> list[str]:
    return store.expire(now, round_len)
