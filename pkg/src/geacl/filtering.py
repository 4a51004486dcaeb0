"""Priority- and freshness-weighted choice of which rumors ride each message."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import Envelope, Priority, Tick


def _default_weights() -> dict[Priority, float]:
    return {Priority.CRITICAL: 8.0, Priority.HIGH: 4.0,
            Priority.ROUTINE: 2.0, Priority.LOW: 1.0}


def _default_ttls() -> dict[Priority, int]:
    return {Priority.CRITICAL: 32, Priority.HIGH: 16,
            Priority.ROUTINE: 8, Priority.LOW: 4}


@dataclass
class FilterPolicy:
    priority_weight: dict[Priority, float] = field(default_factory=_default_weights)
    gamma: float = 0.85
    ttl_rounds: dict[Priority, int] = field(default_factory=_default_ttls)
    budget: int = 16

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        ws = [self.priority_weight[p] for p in sorted(Priority)]
        if any(w <= 0 for w in ws) or any(a >= b for a, b in zip(ws, ws[1:])):
            raise ValueError("priority weights must be positive and increase with priority")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")

    def ttl_for(self, priority: Priority) -> int:
        return self.ttl_rounds[priority]


def score(env: Envelope, now: Tick, round_len: int, policy: FilterPolicy) -> float:
    rounds = max(0, now - env.created_tick) // round_len
    return policy.priority_weight[env.priority] * policy.gamma ** rounds


def select_for_message(active: Iterable, budget: int, now: Tick, round_len: int,
                       policy: FilterPolicy) -> tuple[list[Envelope], int]:
    """Top-``budget`` envelopes by score, plus every remaining Critical one.

    ``active`` holds envelopes or ``(envelope, rumor_state)`` pairs. Returns
    the selection and the number of Critical envelopes beyond the budget.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    envs = total_order([a[0] if isinstance(a, tuple) else a for a in active],
                       now, round_len, policy)
    chosen = envs[:budget]
    extra = [e for e in envs[budget:] if e.priority is Priority.CRITICAL]
    return chosen + extra, len(extra)


def total_order(envs: Sequence[Envelope], now: Tick, round_len: int,
                policy: FilterPolicy) -> list[Envelope]:
    return sorted(envs, key=lambda e: (-score(e, now, round_len, policy),
                                       e.created_tick, e.origin, e.seq))
