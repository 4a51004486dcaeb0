"""Heartbeat-based failure detection riding the ordinary gossip substrate."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .core import AgentId, Counter, Envelope, Priority, Tick
from .store import Store


class Status(Enum):
    ALIVE = "alive"
    SUSPECT = "suspect"
    FAILED = "failed"


@dataclass
class HealthConfig:
    enabled: bool = False
    t_suspect: int = 5
    t_confirm: int = 10
    ttl_margin: int = 4

    def __post_init__(self):
        if not self.t_confirm > self.t_suspect >= 1:
            raise ValueError("need t_confirm > t_suspect >= 1")


def heartbeat_key(agent: AgentId) -> str:
    return f"hb/{agent}"


def emit_heartbeat(agent: AgentId, store: Store, now: Tick, round_no: int,
                   config: HealthConfig) -> Envelope:
    return store.put_local(heartbeat_key(agent), Counter(round_no), Priority.ROUTINE,
                           config.t_confirm + config.ttl_margin, now)


@dataclass
class PeerRecord:
    counter: int
    changed_round: int
    status: Status = Status.ALIVE
    since: int = 0


@dataclass
class FailureDetector:
    owner: AgentId
    peers: dict[AgentId, PeerRecord] = field(default_factory=dict)

    def failed(self) -> set[AgentId]:
        return {p for p, r in self.peers.items() if r.status is Status.FAILED}

    def status(self, peer: AgentId) -> Optional[Status]:
        r = self.peers.get(peer)
        return None if r is None else r.status


def check_peers(detector: FailureDetector, store: Store, round_no: int,
                t_suspect: int, t_confirm: int) -> list[tuple[AgentId, Status]]:
    """Advance each peer's suspicion state from its heartbeat counter.

    Progress is noted in the observer's own rounds; a counter idle for more
    than ``t_suspect`` rounds makes the peer Suspect, more than ``t_confirm``
    makes it Failed. Failed is absorbing.
    """
    if not t_confirm > t_suspect >= 1:
        raise ValueError("need t_confirm > t_suspect >= 1")
    for key, entry in store.entries.items():
        if not key.startswith("hb/"):
            continue
        peer = int(key[3:])
        if peer == detector.owner:
            continue
        n = entry.value.n
        rec = detector.peers.get(peer)
        if rec is None:
            detector.peers[peer] = PeerRecord(n, round_no)
        elif n > rec.counter:
            rec.counter = n
            rec.changed_round = round_no
    transitions = []
    for peer in sorted(detector.peers):
        rec = detector.peers[peer]
        if rec.status is Status.FAILED:
            continue
        idle = round_no - rec.changed_round
        if idle > t_confirm:
            rec.status, rec.since = Status.FAILED, round_no
            transitions.append((peer, Status.FAILED))
        elif idle > t_suspect:
            if rec.status is Status.ALIVE:
                rec.status, rec.since = Status.SUSPECT, round_no
                transitions.append((peer, Status.SUSPECT))
        elif rec.status is Status.SUSPECT:
            rec.status, rec.since = Status.ALIVE, round_no
            transitions.append((peer, Status.ALIVE))
    return transitions
