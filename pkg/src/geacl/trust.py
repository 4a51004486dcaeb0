"""Authenticity, reputation and multi-source corroboration for gossiped state."""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Protocol

from .core import (
    AgentId,
    Envelope,
    Priority,
    Scalar,
    Tick,
    canonical_bytes,
    value_token,
)
from .rng import Rng
from .store import Store

KEY_BYTES = 32
SIG_BYTES = 32


def signing_bytes(env: Envelope) -> bytes:
    # hop_count is transit metadata rewritten by relays, so it is zeroed here
    return canonical_bytes(replace(env, hop_count=0, signature=None))


class Signer(Protocol):
    def sign(self, data: bytes) -> bytes: ...


@dataclass(frozen=True)
class HmacSigner:
    """Keyed-hash stand-in for a public-key signature scheme."""

    key: bytes

    def sign(self, data: bytes) -> bytes:
        return hmac.new(self.key, data, hashlib.sha256).digest()


@dataclass
class KeyRegistry:
    keys: dict[AgentId, bytes] = field(default_factory=dict)

    @classmethod
    def generate(cls, agents: Iterable[AgentId], rng: Rng) -> "KeyRegistry":
        reg = cls()
        for a in agents:
            reg.keys[a] = b"".join(rng.next_u64().to_bytes(8, "big") for _ in range(4))
        return reg

    def signer(self, agent: AgentId) -> HmacSigner:
        return HmacSigner(self.keys[agent])

    def verify(self, agent: AgentId, data: bytes, signature: bytes) -> bool:
        key = self.keys.get(agent)
        if key is None:
            return False
        return hmac.compare_digest(hmac.new(key, data, hashlib.sha256).digest(), signature)


def sign_envelope(env: Envelope, signer: Signer) -> Envelope:
    if env.signature is not None:
        raise ValueError("envelope already signed")
    return replace(env, signature=signer.sign(signing_bytes(env)))


def verify_reason(env: Envelope, registry: KeyRegistry) -> Optional[str]:
    """``None`` when the envelope verifies, else the rejection reason."""
    if env.origin not in registry.keys:
        return "unknown origin"
    if env.signature is None:
        return "unsigned"
    if not registry.verify(env.origin, signing_bytes(env), env.signature):
        return "bad signature"
    return None


def verify_envelope(env: Envelope, registry: KeyRegistry) -> bool:
    return verify_reason(env, registry) is None


# -- reputation --------------------------------------------------------------

class RepEvent(Enum):
    VERIFY_FAIL = "verify_fail"
    EXPIRED_SOLE_SOURCE = "expired_sole_source"
    COMMIT_CONFIRMED = "commit_confirmed"


@dataclass
class ReputationParams:
    verify_fail_factor: float = 0.5
    expired_factor: float = 0.8
    confirm_bonus: float = 0.05
    prior: float = 0.5


@dataclass
class ReputationTable:
    scores: dict[AgentId, float] = field(default_factory=dict)
    params: ReputationParams = field(default_factory=ReputationParams)

    def get(self, agent: AgentId) -> float:
        return self.scores.get(agent, self.params.prior)


def update_reputation(table: ReputationTable, subject: AgentId,
                      event: RepEvent) -> ReputationTable:
    p = table.params
    s = table.get(subject)
    if event is RepEvent.VERIFY_FAIL:
        s *= p.verify_fail_factor
    elif event is RepEvent.EXPIRED_SOLE_SOURCE:
        s *= p.expired_factor
    else:
        s = s + p.confirm_bonus
    table.scores[subject] = min(1.0, max(0.0, s))
    return table


def rep_key(observer: AgentId, subject: AgentId) -> str:
    return f"rep/{observer}/{subject}"


def publish_reputation(agent: AgentId, table: ReputationTable, store: Store,
                       now: Tick, ttl_rounds: int = 8) -> list[Envelope]:
    """Write every non-prior score as a Routine ``rep/<observer>/<subject>`` entry."""
    out = []
    for subject in sorted(table.scores):
        score = table.scores[subject]
        if score == table.params.prior:
            continue
        out.append(store.put_local(rep_key(agent, subject), Scalar(score),
                                   Priority.ROUTINE, ttl_rounds, now))
    return out


def effective_scores(store: Store, prior: float = 0.5) -> dict[AgentId, float]:
    """Mean of the freshest reports per subject across observers."""
    sums: dict[AgentId, list[float]] = {}
    for key, entry in store.entries.items():
        if not key.startswith("rep/"):
            continue
        try:
            subject = int(key.rsplit("/", 1)[1])
        except ValueError:
            continue
        if isinstance(entry.value, Scalar):
            sums.setdefault(subject, []).append(entry.value.x)
    return {s: sum(v) / len(v) for s, v in sums.items()}


def effective_score(store: Store, subject: AgentId, prior: float = 0.5) -> float:
    return effective_scores(store).get(subject, prior)


# -- corroboration -----------------------------------------------------------

class Decision(Enum):
    COMMIT = "commit"
    HOLD = "hold"
    EXPIRE = "expire"
    BYPASS = "bypass"


@dataclass
class CorroborationPolicy:
    k: int = 2
    applies_to: Priority = Priority.HIGH
    timeout_rounds: int = 8

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


def claim_of(env: Envelope) -> tuple:
    """Claims are compared by key and value, not by envelope id."""
    return (env.key, repr(value_token(env.value)))


@dataclass
class PendingClaim:
    claim: tuple
    first_tick: Tick
    envelopes: dict = field(default_factory=dict)
    senders: set = field(default_factory=set)


@dataclass
class Corroborator:
    owner: AgentId
    policy: CorroborationPolicy = field(default_factory=CorroborationPolicy)
    pending: dict = field(default_factory=dict)

    def applies(self, env: Envelope) -> bool:
        return env.origin != self.owner and env.priority >= self.policy.applies_to

    def gate(self, env: Envelope, sender: AgentId, now: Tick,
             round_len: int) -> tuple[Decision, Optional[PendingClaim]]:
        if not self.applies(env):
            return Decision.BYPASS, None
        claim = claim_of(env)
        pc = self.pending.get(claim)
        if pc is not None and (now - pc.first_tick) // round_len > self.policy.timeout_rounds:
            del self.pending[claim]
            pc = None
        if pc is None:
            pc = self.pending[claim] = PendingClaim(claim, now)
        pc.envelopes[env.id] = env
        pc.senders.add(sender)
        if len(pc.senders) >= self.policy.k:
            del self.pending[claim]
            return Decision.COMMIT, pc
        return Decision.HOLD, pc

    def expire(self, now: Tick, round_len: int) -> list[PendingClaim]:
        gone = [pc for pc in self.pending.values()
                if (now - pc.first_tick) // round_len > self.policy.timeout_rounds]
        for pc in gone:
            del self.pending[pc.claim]
        return gone


def corroboration_gate(pending: Corroborator, env: Envelope, first_hop_sender: AgentId,
                       policy: CorroborationPolicy, now: Tick, round_len: int = 10) -> Decision:
    pending.policy = policy
    return pending.gate(env, first_hop_sender, now, round_len)[0]


@dataclass
class TrustSettings:
    signing: bool = False
    corroboration: bool = False
    reputation: bool = False
    reputation_bias: bool = False
    publish_every: int = 5
    policy: CorroborationPolicy = field(default_factory=CorroborationPolicy)
    params: ReputationParams = field(default_factory=ReputationParams)
