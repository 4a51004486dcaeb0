"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from geacl.core import Counter, Envelope, Fact, Priority, Scalar
from geacl.dissemination import AgentState, GossipConfig
from geacl.filtering import FilterPolicy
from geacl.peer_sampling import init_view
from geacl.rng import Rng, derive_seed
from geacl.store import Store

settings.register_profile("default", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=1000, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

GOLDEN = Path(__file__).parent / "golden"


def env(origin=1, seq=1, key="k", value=None, priority=Priority.ROUTINE, tick=0, ttl=8,
        hops=0) -> Envelope:
    return Envelope(origin, seq, key, value if value is not None else Scalar(0.0), priority,
                    tick, ttl, hops)


def agent(i: int, ids, seed: int = 1, **gossip) -> AgentState:
    """A bare agent with a full bootstrap view and no trust or health layers."""
    cfg = GossipConfig(**gossip)
    rng = Rng(derive_seed(seed, i))
    others = [p for p in ids if p != i]
    view = init_view(i, others, cfg.view_capacity, rng)
    return AgentState(i, Store(i), view, rng, cfg, FilterPolicy(budget=cfg.delta_cap),
                      known=set(others))


@pytest.fixture
def golden():
    return GOLDEN




# -- acceptance summary ----------------------------------------------------------

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid:>3} {'PASS' if ok else 'FAIL'}  {detail}")


__all__ = ["ACCEPTANCE", "env", "agent", "Counter", "Fact", "Scalar", "Priority"]
