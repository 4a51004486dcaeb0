"""Per-round gossip: push, pull, push-pull, rumor suppression and anti-entropy.

An :class:`AgentState` bundles everything one simulated agent owns. The
scheduler calls :meth:`AgentState.on_round` once per round and
:meth:`AgentState.on_message` for every delivered message; both return
``(destination, message)`` pairs for the network to carry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple, Optional

from . import filtering, health, peer_sampling, trust
from .core import AgentId, Envelope, EnvelopeId, Fact, Priority, Tick, encoded_size
from .filtering import FilterPolicy
from .health import FailureDetector, HealthConfig, Status
from .peer_sampling import PartialView, ViewEntry
from .rng import Rng
from .store import Digest, Outcome, Store

OK_OUTCOMES = (Outcome.NEW, Outcome.UPDATED, Outcome.STALE)


class Mode(Enum):
    PUSH = "Push"
    PULL = "Pull"
    PUSH_PULL = "PushPull"
    ANTI_ENTROPY_ONLY = "AntiEntropyOnly"


class Kind(Enum):
    RUMOR = "rumor"
    DIGEST_REQUEST = "digest_request"
    DELTA = "delta"
    PUSH_PULL = "push_pull"
    SHUFFLE_REQUEST = "shuffle_request"
    SHUFFLE_REPLY = "shuffle_reply"
    DIRECT_REQUEST = "direct_request"
    DIRECT_RESPONSE = "direct_response"
    FEEDBACK = "feedback"


GOSSIP_KINDS = frozenset({Kind.RUMOR, Kind.DIGEST_REQUEST, Kind.DELTA, Kind.PUSH_PULL,
                          Kind.FEEDBACK})
MEMBERSHIP_KINDS = frozenset({Kind.SHUFFLE_REQUEST, Kind.SHUFFLE_REPLY})
DIRECT_KINDS = frozenset({Kind.DIRECT_REQUEST, Kind.DIRECT_RESPONSE})


@dataclass
class GossipConfig:
    mode: Mode = Mode.PUSH_PULL
    fanout: int = 1
    round_len: int = 10
    suppression_k: int = 4
    delta_cap: int = 16
    critical_suppression_multiplier: int = 4
    repair_every: int = 10
    shuffle_len: int = 3
    view_capacity: int = 8
    shuffle: bool = True
    peer_source: str = "view"  # or "neighbors" (contact-driven, e.g. mobile agents)

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = Mode(self.mode)
        for name in ("fanout", "round_len", "suppression_k", "delta_cap",
                     "critical_suppression_multiplier", "repair_every",
                     "shuffle_len", "view_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.peer_source not in ("view", "neighbors"):
            raise ValueError("peer_source must be 'view' or 'neighbors'")

    def threshold(self, priority: Priority) -> int:
        k = self.suppression_k
        return k * self.critical_suppression_multiplier if priority is Priority.CRITICAL else k


@dataclass(slots=True)
class GossipMessage:
    kind: Kind
    sender: AgentId
    envelopes: tuple = ()
    digest: Optional[Digest] = None
    complete: bool = False
    entries: tuple = ()
    initiated: bool = True
    overflow: int = 0
    known: tuple = ()  # pushed ids the receiver already held (suppression feedback)


HEADER_BYTES = 13  # kind (1) + sender (8) + item count (4)
VV_ITEM_BYTES = 16
VIEW_ITEM_BYTES = 16


def message_size(msg: GossipMessage) -> int:
    n = HEADER_BYTES + sum(encoded_size(e) for e in msg.envelopes)
    if msg.digest is not None:
        n += 1 + VV_ITEM_BYTES * msg.digest.size()
    return n + VIEW_ITEM_BYTES * len(msg.entries) + VV_ITEM_BYTES * len(msg.known)


@dataclass
class RumorState:
    envelope: Envelope
    first_seen_tick: Tick
    duplicate_receipts: int = 0
    active: bool = True
    distinct_first_senders: set = field(default_factory=set)

    @property
    def envelope_id(self) -> EnvelopeId:
        return self.envelope.id


def _ahead(mine: Digest, theirs: Digest) -> bool:
    """True when ``mine`` records any id that ``theirs`` does not."""
    for o, s in mine.vv.items():
        if s > theirs.vv.get(o, 0):
            return True
    return any(not theirs.covers(o, s) for o, s in mine.dots)


def _unsettled(results) -> set:
    # origins whose envelopes were held or rejected must not be absorbed
    return {r.envelope.origin for r in results if r.outcome not in OK_OUTCOMES}


def _stale_ids(results) -> tuple:
    return tuple(r.envelope.id for r in results if r.outcome is Outcome.STALE)


class Received(NamedTuple):
    envelope: Envelope
    outcome: Outcome


def _noop(record: dict) -> None:
    pass


@dataclass
class BaselineSettings:
    partners: list = field(default_factory=list)
    poll_interval: int = 5
    relay: bool = True
    timeout_polls: int = 1


class AgentState:
    """All state owned by one simulated agent."""

    def __init__(self, agent_id: AgentId, store: Store, view: Optional[PartialView],
                 rng: Rng, config: GossipConfig, filter_policy: FilterPolicy, *,
                 health_config: Optional[HealthConfig] = None,
                 trust_settings: Optional[trust.TrustSettings] = None,
                 registry: Optional[trust.KeyRegistry] = None,
                 baseline: Optional[BaselineSettings] = None,
                 known: Optional[set] = None,
                 tracked_prefixes: tuple = (),
                 emit: Callable[[dict], None] = _noop):
        self.id = agent_id
        self.store = store
        self.view = view if view is not None else PartialView(agent_id, config.view_capacity)
        self.rng = rng
        self.config = config
        self.filter = filter_policy
        self.rumors: dict[EnvelopeId, RumorState] = {}
        self.rumor_keys: dict[str, set] = {}
        self.known: set = set(known or ()) - {agent_id}
        self.health = health_config if health_config and health_config.enabled else None
        self.detector = FailureDetector(agent_id)
        self.trust = trust_settings
        self.registry = registry
        self.signer = registry.signer(agent_id) if registry and agent_id in registry.keys else None
        self.reputation = trust.ReputationTable(
            params=trust_settings.params if trust_settings else trust.ReputationParams())
        self.corroborator = (trust.Corroborator(agent_id, trust_settings.policy)
                             if trust_settings and trust_settings.corroboration else None)
        self.baseline = baseline
        self.tracked_prefixes = tuple(tracked_prefixes)
        self.emit = emit
        self.neighbors: Optional[Callable[[], list]] = None
        self.pending_shuffles: dict[AgentId, list] = {}
        self.outstanding: dict[AgentId, int] = {}
        self.believed_failed: set = set()
        self.duplicates = 0
        self.round_no = 0

    # -- local writes ---------------------------------------------------------

    def put(self, key: str, value, priority: Priority, now: Tick,
            ttl_rounds: Optional[int] = None) -> Envelope:
        ttl = ttl_rounds if ttl_rounds is not None else self.filter.ttl_for(priority)
        env = self.store.put_local(key, value, priority, ttl, now)
        if self.signer is not None and self.trust and self.trust.signing:
            env = trust.sign_envelope(env, self.signer)
            self._replace_live(env)
        self._track(env, now, Outcome.NEW, self.id)
        return env

    def _replace_live(self, env: Envelope) -> None:
        # keep the signed copy as the live envelope
        entry = self.store.entries.get(env.key)
        if entry is None:
            return
        if entry.envelope.id == env.id:
            entry.envelope = env
        if entry.contributors:
            entry.contributors = tuple(env if c.id == env.id else c for c in entry.contributors)

    def _track(self, env: Envelope, now: Tick, outcome: Outcome, sender: AgentId) -> None:
        key = env.key
        entry = self.store.entries.get(key)
        live = {e.id for e in entry.live_envelopes()} if entry else set()
        ids = self.rumor_keys.setdefault(key, set())
        for rid in [r for r in ids if r not in live]:
            ids.discard(rid)
            self.rumors.pop(rid, None)
        if env.id in live and env.id not in self.rumors:
            self.rumors[env.id] = RumorState(env, now, distinct_first_senders={sender})
            ids.add(env.id)
        if self.tracked_prefixes and key.startswith(self.tracked_prefixes):
            self.emit({"type": "learn", "t": now, "agent": self.id, "key": key,
                       "origin": env.origin, "seq": env.seq, "outcome": outcome.value})

    def active_rumors(self) -> list[Envelope]:
        return [r.envelope for r in self.rumors.values() if r.active]

    def _expire(self, now: Tick) -> None:
        for key in self.store.expire(now, self.config.round_len):
            for rid in self.rumor_keys.pop(key, ()):
                self.rumors.pop(rid, None)

    # -- round ----------------------------------------------------------------

    def on_round(self, now: Tick, round_no: int) -> list:
        self.round_no = round_no
        self._expire(now)
        out: list = []
        if self.corroborator is not None:
            self._expire_claims(now)
        if self.health is not None:
            health.emit_heartbeat(self.id, self.store, now, round_no, self.health)
            env = self.store.entries[health.heartbeat_key(self.id)].envelope
            if self.signer is not None and self.trust and self.trust.signing:
                env = trust.sign_envelope(env, self.signer)
                self._replace_live(env)
            self._track(env, now, Outcome.NEW, self.id)
            self._check_health(round_no, now)
        if self.trust and self.trust.reputation and round_no % self.trust.publish_every == 0:
            for env in trust.publish_reputation(self.id, self.reputation, self.store, now):
                if self.signer is not None and self.trust.signing:
                    env = trust.sign_envelope(env, self.signer)
                    self._replace_live(env)
                self._track(env, now, Outcome.NEW, self.id)
        if self.baseline is not None:
            return self._baseline_round(now, round_no)
        if self.config.peer_source == "view" and not self.view.entries:
            self._reseed_view(now)
        if self.config.shuffle and self.config.peer_source == "view" and self.view.entries:
            self.view, target, sample = peer_sampling.shuffle_initiate(
                self.view, self.config.shuffle_len, self.rng)
            self.pending_shuffles[target] = sample[1:]
            out.append((target, GossipMessage(Kind.SHUFFLE_REQUEST, self.id, entries=tuple(sample))))
        out.extend(self.gossip_messages(now, round_no))
        return out

    def _reseed_view(self, now: Tick) -> None:
        # lost shuffle replies can drain a view; fall back on remembered members
        cands = sorted(self.known - self.believed_failed - {self.id})
        if not cands:
            return
        picks = self.rng.sample(cands, self.view.capacity)
        self.view = PartialView(self.id, self.view.capacity, [ViewEntry(p, 0) for p in picks])
        self.emit({"type": "view_reseeded", "t": now, "agent": self.id})

    def choose_partners(self) -> list[AgentId]:
        f = self.config.fanout
        if self.config.peer_source == "neighbors":
            cands = sorted(self.neighbors()) if self.neighbors is not None else []
            return self.rng.sample(cands, f)
        weights = None
        if self.trust and self.trust.reputation_bias:
            eff = trust.effective_scores(self.store, self.reputation.params.prior)
            prior = self.reputation.params.prior
            weights = {p: eff.get(p, prior) for p in self.view.peers()}
        return peer_sampling.select_peers(self.view, f, self.rng, weights)

    def _repair_peer(self, exclude) -> Optional[AgentId]:
        cands = sorted(self.known - exclude - {self.id})
        return self.rng.choice(cands) if cands else None

    def gossip_messages(self, now: Tick, round_no: int) -> list:
        cfg = self.config
        peers = self.choose_partners()
        if not peers:
            self.emit({"type": "isolated_round", "t": now, "agent": self.id})
            return []
        repair = (cfg.peer_source == "view" and (round_no + self.id) % cfg.repair_every == 0)
        if repair:
            extra = self._repair_peer(set(peers[1:]))
            if extra is not None:
                peers[0] = extra
        mode = cfg.mode
        rumors: tuple = ()
        overflow = 0
        if mode in (Mode.PUSH, Mode.PUSH_PULL) or repair:
            active = self.active_rumors()
            if active:
                sel, overflow = filtering.select_for_message(
                    active, cfg.delta_cap, now, cfg.round_len, self.filter)
                rumors = tuple(e.forwarded() for e in sel)
        out = []
        for i, p in enumerate(peers):
            digest_round = mode is not Mode.PUSH or (repair and i == 0)
            if mode is Mode.PUSH_PULL or (mode is Mode.PUSH and digest_round):
                msg = GossipMessage(Kind.PUSH_PULL, self.id, rumors, self.store.digest(),
                                    overflow=overflow)
            elif mode is Mode.PUSH:
                if not rumors:
                    continue
                msg = GossipMessage(Kind.RUMOR, self.id, rumors, overflow=overflow)
            else:
                msg = GossipMessage(Kind.DIGEST_REQUEST, self.id, digest=self.store.digest())
            out.append((p, msg))
        return out

    # -- health / trust housekeeping -------------------------------------------

    def _check_health(self, round_no: int, now: Tick) -> None:
        h = self.health
        for peer, status in health.check_peers(self.detector, self.store, round_no,
                                               h.t_suspect, h.t_confirm):
            self.emit({"type": "suspicion", "t": now, "agent": self.id, "peer": peer,
                       "status": status.value})
            if status is Status.FAILED:
                self.emit({"type": "failure_detected", "t": now, "r": round_no,
                           "agent": self.id, "peer": peer})
                self._believe_failed(peer, now)

    def _believe_failed(self, peer: AgentId, now: Tick) -> None:
        if peer in self.believed_failed:
            return
        self.believed_failed.add(peer)
        self.view.remove(peer)
        self.emit({"type": "believe_failed", "t": now, "agent": self.id, "peer": peer})

    def _expire_claims(self, now: Tick) -> None:
        for pc in self.corroborator.expire(now, self.config.round_len):
            self.emit({"type": "corroboration_expired", "t": now, "agent": self.id,
                       "key": pc.claim[0], "senders": sorted(pc.senders)})
            if len(pc.senders) == 1 and self.trust.reputation:
                (sole,) = pc.senders
                trust.update_reputation(self.reputation, sole, trust.RepEvent.EXPIRED_SOLE_SOURCE)

    # -- receive ----------------------------------------------------------------

    def receive(self, envelopes, sender: AgentId, now: Tick, rumors: bool = True) -> list[Received]:
        results = []
        tr = self.trust
        for env in envelopes:
            self.known.add(env.origin)
            if tr is not None and tr.signing:
                reason = trust.verify_reason(env, self.registry)
                if reason is not None:
                    results.append(Received(env, Outcome.REJECTED))
                    self.emit({"type": "reject", "t": now, "agent": self.id, "sender": sender,
                               "origin": env.origin, "key": env.key, "reason": reason})
                    if tr.reputation:
                        trust.update_reputation(self.reputation, sender, trust.RepEvent.VERIFY_FAIL)
                    continue
            if self.store.seen.covers(env.origin, env.seq):
                results.append(Received(env, Outcome.STALE))
                self._duplicate(env, sender)
                continue
            if self.corroborator is not None and self.corroborator.applies(env):
                decision, pc = self.corroborator.gate(env, sender, now, self.config.round_len)
                if decision is trust.Decision.HOLD:
                    results.append(Received(env, Outcome.HELD))
                    continue
                self.emit({"type": "commit", "t": now, "agent": self.id, "key": env.key,
                           "origin": env.origin, "senders": sorted(pc.senders)})
                if tr.reputation:
                    for s in sorted(pc.senders):
                        trust.update_reputation(self.reputation, s, trust.RepEvent.COMMIT_CONFIRMED)
                for held in pc.envelopes.values():
                    if held.id != env.id:
                        self._apply(held, sender, now, rumors)
            results.append(Received(env, self._apply(env, sender, now, rumors)))
        return results

    def _apply(self, env: Envelope, sender: AgentId, now: Tick, rumors: bool) -> Outcome:
        outcome = self.store.apply_remote(env, now)
        if outcome is Outcome.NEW or outcome is Outcome.UPDATED:
            if rumors:
                self._track(env, now, outcome, sender)
            elif self.tracked_prefixes and env.key.startswith(self.tracked_prefixes):
                self.emit({"type": "learn", "t": now, "agent": self.id, "key": env.key,
                           "origin": env.origin, "seq": env.seq, "outcome": outcome.value})
            if env.key.startswith("status/"):
                self._status_update(env, now)
        elif outcome is Outcome.STALE:
            self._duplicate(env, sender)
        return outcome

    def _status_update(self, env: Envelope, now: Tick) -> None:
        v = env.value
        if isinstance(v, Fact) and v.qualifier == "failed":
            peer = int(env.key.split("/", 1)[1])
            if peer != self.id:
                self._believe_failed(peer, now)

    def _duplicate(self, env: Envelope, sender: AgentId) -> None:
        self.duplicates += 1
        self._bump(env.id)

    def _bump(self, rid: EnvelopeId) -> None:
        r = self.rumors.get(rid)
        if r is None or not r.active:
            return
        r.duplicate_receipts += 1
        if r.duplicate_receipts >= self.config.threshold(r.envelope.priority):
            r.active = False

    def _delta_reply(self, digest: Digest, known: tuple = ()) -> Optional[GossipMessage]:
        envs, backed, complete = self.store.delta_with_digest(digest, self.config.delta_cap)
        if not envs and not known and not _ahead(backed, digest):
            return None
        return GossipMessage(Kind.DELTA, self.id, tuple(e.forwarded() for e in envs), backed,
                             complete=complete, initiated=False, known=known)

    def malformed(self, msg: GossipMessage) -> bool:
        if not isinstance(msg.kind, Kind):
            return True
        routine = sum(1 for e in msg.envelopes if e.priority is not Priority.CRITICAL)
        return msg.kind in GOSSIP_KINDS and routine > self.config.delta_cap

    def on_message(self, msg: GossipMessage, now: Tick) -> tuple[list[Received], list]:
        if self.malformed(msg):
            self.emit({"type": "protocol_error", "t": now, "agent": self.id, "sender": msg.sender})
            return [], []
        self.known.add(msg.sender)
        kind = msg.kind
        replies: list = []
        results: list[Received] = []
        if kind is Kind.RUMOR:
            results = self.receive(msg.envelopes, msg.sender, now)
            known = _stale_ids(results)
            if known:
                replies.append((msg.sender, GossipMessage(Kind.FEEDBACK, self.id, known=known,
                                                          initiated=False)))
        elif kind is Kind.PUSH_PULL:
            results = self.receive(msg.envelopes, msg.sender, now)
            reply = self._delta_reply(msg.digest, _stale_ids(results))
            if reply is not None:
                replies.append((msg.sender, reply))
        elif kind is Kind.FEEDBACK:
            for rid in msg.known:
                self._bump(tuple(rid))
        elif kind is Kind.DIGEST_REQUEST:
            reply = self._delta_reply(msg.digest)
            if reply is not None:
                replies.append((msg.sender, reply))
        elif kind is Kind.DELTA:
            for rid in msg.known:
                self._bump(tuple(rid))
            results = self.receive(msg.envelopes, msg.sender, now)
            self.store.absorb_digest(msg.digest.without(_unsettled(results)))
        elif kind is Kind.SHUFFLE_REQUEST:
            sample = peer_sampling.shuffle_reply(self.view, msg.sender,
                                                 self.config.shuffle_len, self.rng)
            self._merge_view(sample[1:], msg.entries)
            replies.append((msg.sender, GossipMessage(Kind.SHUFFLE_REPLY, self.id,
                                                      entries=tuple(sample), initiated=False)))
        elif kind is Kind.SHUFFLE_REPLY:
            sent = self.pending_shuffles.pop(msg.sender, [])
            self._merge_view(sent, msg.entries)
        elif kind is Kind.DIRECT_REQUEST:
            replies.append((msg.sender, self._direct_response()))
        elif kind is Kind.DIRECT_RESPONSE:
            self.outstanding.pop(msg.sender, None)
            results = self.receive(msg.envelopes, msg.sender, now, rumors=False)
        return results, replies

    def _merge_view(self, sent, received) -> None:
        received = [e for e in received if e.peer not in self.believed_failed]
        for e in received:
            self.known.add(e.peer)
        self.view = peer_sampling.shuffle_merge(self.view, sent, received)

    # -- direct-messaging baseline ---------------------------------------------

    def _baseline_round(self, now: Tick, round_no: int) -> list:
        b = self.baseline
        if round_no % b.poll_interval != 0:
            return []
        partners = b.partners
        if self.neighbors is not None:
            near = set(self.neighbors())
            partners = [p for p in partners if p in near]
        out = []
        for p in partners:
            if p in self.believed_failed:
                continue
            missed = self.outstanding.get(p, 0)
            if missed >= b.timeout_polls and self.neighbors is None:
                self.put(f"status/{p}", Fact("status", str(p), "failed"), Priority.HIGH, now)
                self._believe_failed(p, now)
                continue
            self.outstanding[p] = missed + 1
            out.append((p, GossipMessage(Kind.DIRECT_REQUEST, self.id)))
        return out

    def _direct_response(self) -> GossipMessage:
        envs = self.store.live_envelopes()
        if not self.baseline or not self.baseline.relay:
            envs = [e for e in envs if e.origin == self.id]
        envs.sort(key=lambda e: (e.key, e.origin, e.seq))
        return GossipMessage(Kind.DIRECT_RESPONSE, self.id, tuple(envs), initiated=False)


# -- functional facade ---------------------------------------------------------

def on_round(agent: AgentState, config: GossipConfig, now: Tick, rng: Optional[Rng] = None,
             round_no: Optional[int] = None) -> list:
    agent.config = config
    if rng is not None:
        agent.rng = rng
    return agent.on_round(now, round_no if round_no is not None else now // config.round_len)


def on_message(agent: AgentState, msg: GossipMessage, config: GossipConfig,
               now: Tick) -> tuple[list[Received], list]:
    agent.config = config
    return agent.on_message(msg, now)


class SessionStats(NamedTuple):
    messages: int
    rounds: int
    envelopes: int
    delta_messages: int


def anti_entropy_session(store_a: Store, store_b: Store, delta_cap: int,
                         now: Tick = 0, max_rounds: int = 10_000) -> SessionStats:
    """Digest/delta exchanges between two stores until neither lacks anything."""
    messages = envelopes = deltas = rounds = 0

    def ship(src: Store, dst: Store, remote: Digest) -> None:
        nonlocal messages, envelopes, deltas
        envs, backed, _ = src.delta_with_digest(remote, delta_cap)
        messages += 1
        if envs:
            deltas += 1
            envelopes += len(envs)
        bad = {e.origin for e in envs if dst.apply_remote(e, now) not in OK_OUTCOMES}
        dst.absorb_digest(backed.without(bad))

    while rounds < max_rounds:
        rounds += 1
        messages += 1  # A -> B digest request
        ship(store_b, store_a, store_a.digest())
        ship(store_a, store_b, store_b.digest())
        da, db = store_a.digest(), store_b.digest()
        if da == db:
            break
    return SessionStats(messages, rounds, envelopes, deltas)
