"""Bounded, aged partial views maintained by CYCLON-style shuffles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .core import AgentId
from .rng import Rng


class IsolatedAgent(ValueError):
    pass


class NothingToShuffle(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ViewEntry:
    peer: AgentId
    age: int = 0


@dataclass
class PartialView:
    owner: AgentId
    capacity: int
    entries: list[ViewEntry] = field(default_factory=list)

    def peers(self) -> list[AgentId]:
        return [e.peer for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, peer: AgentId) -> bool:
        return any(e.peer == peer for e in self.entries)

    def remove(self, peer: AgentId) -> None:
        self.entries = [e for e in self.entries if e.peer != peer]

    def check(self) -> None:
        peers = self.peers()
        assert len(peers) <= self.capacity, "view over capacity"
        assert len(set(peers)) == len(peers), "duplicate view entry"
        assert self.owner not in peers, "self entry in view"


def init_view(owner: AgentId, bootstrap: Iterable[AgentId], capacity: int = 8,
              rng: Optional[Rng] = None) -> PartialView:
    """Fill a view from bootstrap peers (random subset when ``rng`` is given)."""
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    peers = list(dict.fromkeys(p for p in bootstrap if p != owner))
    if not peers:
        raise IsolatedAgent("isolated agent")
    if len(peers) > capacity:
        peers = rng.sample(peers, capacity) if rng is not None else peers[:capacity]
    return PartialView(owner, capacity, [ViewEntry(p, 0) for p in peers])


def select_peers(view: PartialView, fanout: int, rng: Rng,
                 weights: Optional[Mapping[AgentId, float]] = None) -> list[AgentId]:
    """Pick ``min(fanout, |view|)`` distinct gossip partners.

    Weighted mode draws proportionally to ``weights`` without replacement;
    zero-weight peers are skipped unless every weight is zero.
    """
    if fanout < 1:
        raise ValueError("fanout must be >= 1")
    peers = view.peers()
    if not peers:
        return []
    if weights is None:
        return rng.sample(peers, fanout)
    ws = [max(0.0, float(weights.get(p, 0.0))) for p in peers]
    if sum(ws) <= 0.0:
        return rng.sample(peers, fanout)
    pool = [(p, w) for p, w in zip(peers, ws) if w > 0.0]
    chosen = []
    while pool and len(chosen) < fanout:
        i = rng.weighted_index([w for _, w in pool])
        chosen.append(pool.pop(i)[0])
    return chosen


def shuffle_initiate(view: PartialView, shuffle_len: int,
                     rng: Rng) -> tuple[PartialView, AgentId, list[ViewEntry]]:
    """Age the view, pick the oldest peer as target and build the outgoing sample.

    The target is dropped from the returned view; a live target re-enters
    with age 0 through the fresh self-entry in its reply.
    """
    if not view.entries:
        raise NothingToShuffle("nothing to shuffle")
    if not 1 <= shuffle_len <= view.capacity:
        raise ValueError("shuffle_len must lie in [1, capacity]")
    aged = [ViewEntry(e.peer, e.age + 1) for e in view.entries]
    target = max(aged, key=lambda e: (e.age, -e.peer)).peer
    others = [e for e in aged if e.peer != target]
    sample = rng.sample(others, min(shuffle_len - 1, len(others)))
    out = [ViewEntry(view.owner, 0)] + sample
    return PartialView(view.owner, view.capacity, others), target, out


def shuffle_reply(view: PartialView, requester: AgentId, shuffle_len: int,
                  rng: Rng) -> list[ViewEntry]:
    """Responder's half of the exchange: a random sample plus itself at age 0."""
    others = [e for e in view.entries if e.peer != requester]
    sample = rng.sample(others, min(shuffle_len - 1, len(others)))
    return [ViewEntry(view.owner, 0)] + sample


def shuffle_merge(view: PartialView, sent: Iterable[ViewEntry],
                  received: Iterable[ViewEntry]) -> PartialView:
    """Insert received entries; when over capacity evict sent entries, then the oldest."""
    entries = {e.peer: e for e in view.entries}
    for e in received:
        if e.peer == view.owner:
            continue
        cur = entries.get(e.peer)
        if cur is None or e.age < cur.age:
            entries[e.peer] = e
    overflow = len(entries) - view.capacity
    if overflow > 0:
        for e in sent:
            if overflow <= 0:
                break
            if e.peer in entries:
                del entries[e.peer]
                overflow -= 1
    if overflow > 0:
        victims = sorted(entries.values(), key=lambda e: (-e.age, e.peer))[:overflow]
        for v in victims:
            del entries[v.peer]
    kept = [e for e in view.entries if e.peer in entries]
    kept = [entries[e.peer] for e in kept]
    known = {e.peer for e in kept}
    kept += [entries[p] for p in entries if p not in known]
    return PartialView(view.owner, view.capacity, kept)
