"""Metric suite computed from event traces.

Every function here reads only the trace (a list of JSON-ready dicts), so a
report recomputed from a persisted trace matches the live one exactly.
Round counts are relative to the round in which a key was injected.
"""

from __future__ import annotations

import math
from collections import Counter as Tally
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .core import Vector, cosine_distance

DEFAULT_Q = 0.95


class Unreached(ValueError):
    """A coverage threshold was never met; carries the final coverage."""

    def __init__(self, coverage: float):
        super().__init__(f"threshold unreached (final coverage {coverage:.3f})")
        self.coverage = coverage


def rounds(trace: Sequence[dict]) -> list[dict]:
    return [r for r in trace if r["type"] == "round"]


def injection(trace: Sequence[dict], key: str) -> Optional[dict]:
    for r in trace:
        if r["type"] == "inject" and r["key"] == key:
            return r
    return None


def injection_round(trace: Sequence[dict], key: str) -> int:
    rec = injection(trace, key)
    return 0 if rec is None else rec["r"]


def _tok(t) -> str:
    return repr(t)


def final_token(snaps: Sequence[dict], key: str) -> Optional[str]:
    """Merge-final value: the modal token among alive holders at the last snapshot."""
    for snap in reversed(snaps):
        holders = snap["hold"].get(key)
        if holders:
            tally = Tally(_tok(t) for _, t in holders)
            best = max(tally.values())
            return min(t for t, c in tally.items() if c == best)
    return None


def informed_counts(trace: Sequence[dict], key: str) -> list[tuple[int, int, int]]:
    """``(round, informed, alive)`` per snapshot from the injection round on."""
    snaps = rounds(trace)
    fin = final_token(snaps, key)
    r0 = injection_round(trace, key)
    out = []
    for s in snaps:
        if s["r"] < r0:
            continue
        n = sum(1 for _, t in s["hold"].get(key, ()) if _tok(t) == fin)
        out.append((s["r"], n, len(s["alive"])))
    return out


def coverage_curve(trace: Sequence[dict], key: str) -> list[float]:
    return [n / a if a else 0.0 for _, n, a in informed_counts(trace, key)]


def propagation_latency(trace: Sequence[dict], key: str, q: float = DEFAULT_Q) -> int:
    """Rounds until at least ``ceil(q * alive)`` agents hold the final value."""
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    r0 = injection_round(trace, key)
    counts = informed_counts(trace, key)
    for r, n, a in counts:
        if a and n >= math.ceil(q * a - 1e-9):
            return r - r0
    raise Unreached(counts[-1][1] / counts[-1][2] if counts and counts[-1][2] else 0.0)


def full_convergence_time(trace: Sequence[dict], key: str) -> int:
    return propagation_latency(trace, key, 1.0)


def divergence_window(trace: Sequence[dict], key: str) -> int:
    """Rounds before convergence in which two or more values coexist."""
    r0 = injection_round(trace, key)
    fct = full_convergence_time(trace, key)
    n = 0
    for s in rounds(trace):
        if r0 <= s["r"] < r0 + fct:
            if len({_tok(t) for _, t in s["hold"].get(key, ())}) >= 2:
                n += 1
    return n


def propagation_coverage(trace: Sequence[dict], key: str, deadline: int) -> float:
    """Informed fraction at absolute round ``deadline`` (last snapshot if beyond)."""
    counts = informed_counts(trace, key)
    if not counts:
        return 0.0
    pick = counts[-1]
    for c in counts:
        if c[0] >= deadline:
            pick = c
            break
    return pick[1] / pick[2] if pick[2] else 0.0


# -- semantic divergence -------------------------------------------------------

def _is_vector(tok) -> bool:
    return isinstance(tok, list) and tok and tok[0] == "V"


def semantic_divergence(snapshot: dict, keys: Optional[Iterable[str]] = None) -> float:
    """Sum over unordered agent pairs of per-key disagreement.

    Non-vector keys count 1 per disagreeing pair (absence is a value of its
    own); vector keys contribute cosine distance, or 1 when one side lacks it.
    """
    alive = snapshot["alive"]
    n = len(alive)
    if n < 2:
        return 0.0
    hold = snapshot["hold"]
    keys = sorted(hold) if keys is None else keys
    total = 0.0
    pairs = n * (n - 1) // 2
    for key in keys:
        holders = hold.get(key, ())
        if not holders:
            continue
        absent = n - len(holders)
        if any(_is_vector(t) for _, t in holders):
            xs = [Vector(tuple(t[1])) for _, t in holders]
            for i in range(len(xs)):
                for j in range(i + 1, len(xs)):
                    total += cosine_distance(xs[i], xs[j])
            total += absent * len(holders)
            continue
        tally = Tally(_tok(t) for _, t in holders)
        same = sum(c * (c - 1) // 2 for c in tally.values()) + absent * (absent - 1) // 2
        total += pairs - same
    return float(total)


def divergence_series(trace: Sequence[dict], keys: Optional[Iterable[str]] = None,
                      start_round: int = 0) -> list[float]:
    keys = None if keys is None else list(keys)
    return [semantic_divergence(s, keys) for s in rounds(trace) if s["r"] >= start_round]


@dataclass
class EtaEstimate:
    eta_hat: Optional[float]
    r_squared: Optional[float]
    converged_at_start: bool = False
    ratios_used: int = 0


def estimate_eta(series: Sequence[float]) -> EtaEstimate:
    """Contraction rate from ``D(t+1) ≈ (1 - eta) D(t)``.

    Uses the geometric mean of successive ratios where both terms are
    positive; R² comes from a least-squares line through ``log D``.
    """
    d = np.asarray(series, dtype=float)
    if d.size == 0 or not np.any(d > 0):
        return EtaEstimate(None, None, converged_at_start=True)
    ok = (d[:-1] > 0) & (d[1:] > 0)
    if not np.any(ok):
        return EtaEstimate(None, None, ratios_used=0)
    logs = np.log(d[1:][ok] / d[:-1][ok])
    eta = 1.0 - float(np.exp(logs.mean()))
    pos = d > 0
    t = np.arange(d.size)[pos]
    y = np.log(d[pos])
    r2 = linear_r2(t, y) if t.size >= 3 else 1.0
    return EtaEstimate(eta, r2, ratios_used=int(ok.sum()))


def linear_r2(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        return 1.0
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return r_squared(y, A @ coef)


def r_squared(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


# -- logistic fit ----------------------------------------------------------------

@dataclass
class BetaFit:
    beta_hat: Optional[float]
    r_squared: Optional[float]
    uninformed: list = field(default_factory=list)
    monotone: bool = True
    degenerate: bool = False


def logistic(t, beta, n, i0=1.0):
    return n / (1.0 + (n / i0 - 1.0) * np.exp(-beta * t))


def fit_beta(curve: Sequence[float], n: int) -> BetaFit:
    """Least-squares logistic fit of informed counts against rounds.

    ``curve[0]`` is the informed count at t = 0 (at least 1). Non-monotone
    curves are fitted on their running maximum and flagged.
    """
    y = np.asarray(curve, dtype=float)
    if y.size == 0 or y[0] < 1:
        raise ValueError("curve must start with at least one informed agent")
    env = np.maximum.accumulate(y)
    monotone = bool(np.all(env == y))
    unf = list(1.0 - env / n)
    if n <= 1 or y.size < 3 or y[0] >= n:
        return BetaFit(None, None, unf, monotone, degenerate=True)
    t = np.arange(y.size, dtype=float)
    i0 = float(env[0])
    (beta,), _ = curve_fit(lambda tt, b: logistic(tt, b, n, i0), t, env, p0=[1.0],
                           bounds=(1e-6, 50.0))
    r2 = r_squared(env, logistic(t, beta, n, i0))
    return BetaFit(float(beta), r2, unf, monotone)


def epidemic_curve(trace: Sequence[dict], key: str) -> list[int]:
    """Informed counts with a leading 1 for the instant of injection."""
    return [1] + [n for _, n, _ in informed_counts(trace, key)]


def uninformed_tail_r2(curve: Sequence[float], n: int, lo: float = 0.1,
                       hi: float = 0.9) -> Optional[float]:
    """R² of a line through ``log(1 - I/N)`` over the mid-phase of coverage."""
    y = np.asarray(curve, dtype=float) / n
    idx = [i for i, c in enumerate(y) if lo <= c <= hi]
    if len(idx) < 2:
        return None
    if len(idx) == 2:
        return 1.0
    return linear_r2(idx, np.log(1.0 - y[idx]))


def unimodal_increments(curve: Sequence[float], window: int = 3) -> bool:
    """Increments (moving-averaged) rise then fall, at most one peak."""
    inc = np.diff(np.asarray(curve, dtype=float))
    if inc.size < 2:
        return True
    w = min(window, inc.size)
    sm = np.convolve(inc, np.ones(w) / w, mode="valid")
    d = np.sign(np.round(np.diff(sm), 9))
    d = d[d != 0]
    return int(np.sum(d[1:] != d[:-1])) <= 1 and (d.size == 0 or d[0] > 0 or np.all(d < 0))


# -- traffic ---------------------------------------------------------------------

def redundancy_overhead(trace: Sequence[dict], key: str) -> Optional[float]:
    """Envelope transmissions carrying ``key`` per informed agent beyond the first."""
    sends = sum(r.get("tk", {}).get(key, 0) for r in trace if r["type"] == "send")
    counts = informed_counts(trace, key)
    informed = counts[-1][1] if counts else 0
    if informed < 2:
        return None
    return sends / (informed - 1)


GOSSIP_KIND_NAMES = frozenset({"rumor", "digest_request", "delta", "push_pull", "feedback"})


def mpar(trace: Sequence[dict], round_len: int) -> list[dict]:
    """Messages per alive agent per round, initiations and replies apart."""
    alive = {s["r"]: len(s["alive"]) for s in rounds(trace)}
    per: dict[int, dict] = {}
    for rec in trace:
        if rec["type"] != "send":
            continue
        r = rec["t"] // round_len
        p = per.setdefault(r, {"init": 0, "reply": 0, "gossip_init": {}})
        if rec["init"]:
            p["init"] += 1
            if rec["kind"] in GOSSIP_KIND_NAMES:
                g = p["gossip_init"]
                g[rec["src"]] = g.get(rec["src"], 0) + 1
        else:
            p["reply"] += 1
    out = []
    for r in sorted(alive):
        p = per.get(r, {"init": 0, "reply": 0, "gossip_init": {}})
        n = alive[r] or 1
        out.append({"r": r, "init": p["init"] / n, "reply": p["reply"] / n,
                    "max_gossip_init": max(p["gossip_init"].values(), default=0)})
    return out


def total_bytes(trace: Sequence[dict]) -> int:
    return sum(r["bytes"] for r in trace if r["type"] == "send")


def count(trace: Sequence[dict], kind: str, **match) -> int:
    return sum(1 for r in trace if r["type"] == kind
               and all(r.get(k) == v for k, v in match.items()))


def critical_overflow(trace: Sequence[dict]) -> int:
    return sum(r.get("ovf", 0) for r in trace if r["type"] == "send")


def gossip_message_count(trace: Sequence[dict]) -> int:
    return sum(1 for r in trace if r["type"] == "send" and r["kind"] in GOSSIP_KIND_NAMES)


# -- staleness, failures, churn, partitions --------------------------------------

def staleness_index(trace: Sequence[dict]) -> Optional[float]:
    ages = [r["staleness"] for r in trace if r["type"] == "decision"]
    return float(np.mean(ages)) if ages else None


@dataclass
class FpdStats:
    crashed: int
    crash_tick: int
    observers: int
    detected: int
    false_confirmations: int
    mean_rounds: Optional[float]
    max_rounds: Optional[float]

    @property
    def detection_rate(self) -> float:
        return self.detected / self.observers if self.observers else 1.0


def failure_propagation_delay(trace: Sequence[dict], crashed: int, round_len: int) -> FpdStats:
    """Per-observer delay (rounds) from the crash until it confirms the failure."""
    crash = next((r for r in trace if r["type"] == "crash" and r["agent"] == crashed), None)
    if crash is None:
        raise ValueError(f"agent {crashed} never crashed")
    snaps = rounds(trace)
    alive_end = set(snaps[-1]["alive"]) if snaps else set()
    first: dict[int, int] = {}
    crashes = {r["agent"]: r["t"] for r in trace if r["type"] == "crash"}
    false = 0
    for r in trace:
        if r["type"] != "failure_detected":
            continue
        peer = r["peer"]
        if peer not in crashes or crashes[peer] > r["t"]:
            false += 1
        elif peer == crashed and r["agent"] not in first:
            first[r["agent"]] = r["t"]
    observers = sorted(a for a in alive_end if a != crashed)
    delays = [(first[a] - crash["t"]) / round_len for a in observers if a in first]
    return FpdStats(crashed, crash["t"], len(observers), len(delays), false,
                    float(np.mean(delays)) if delays else None,
                    float(max(delays)) if delays else None)


def _knowledge(trace: Sequence[dict]) -> dict[tuple, dict[int, int]]:
    """``(origin, seq) -> {agent: first tick known}`` from injections and learns."""
    known: dict[tuple, dict[int, int]] = {}
    for r in trace:
        if r["type"] == "inject":
            known.setdefault((r["origin"], r["seq"]), {}).setdefault(r["agent"], r["t"])
        elif r["type"] == "learn":
            known.setdefault((r["origin"], r["seq"]), {}).setdefault(r["agent"], r["t"])
    return known


def availability_under_churn(trace: Sequence[dict]) -> Optional[float]:
    """Fraction of injected updates that reached every agent alive at the end."""
    injected = [(r["origin"], r["seq"]) for r in trace if r["type"] == "inject"]
    snaps = rounds(trace)
    if not injected or not snaps:
        return None
    alive = set(snaps[-1]["alive"])
    known = _knowledge(trace)
    ok = sum(1 for i in injected if alive <= set(known.get(i, {})))
    return ok / len(injected)


def partition_resilience(trace: Sequence[dict], start: int, end: int,
                         by_tick: Optional[int] = None) -> Optional[float]:
    """NPR: share of updates injected in ``[start, end)`` known to all alive agents.

    ``by_tick`` bounds the evaluation instant (default: end of trace).
    """
    ids = [(r["origin"], r["seq"]) for r in trace
           if r["type"] == "inject" and start <= r["t"] < end]
    if not ids:
        return None
    snaps = rounds(trace)
    if by_tick is not None:
        snaps = [s for s in snaps if s["t"] <= by_tick] or snaps[:1]
    alive = set(snaps[-1]["alive"])
    limit = by_tick if by_tick is not None else math.inf
    known = _knowledge(trace)
    ok = 0
    for i in ids:
        when = known.get(i, {})
        if all(a in when and when[a] <= limit for a in alive):
            ok += 1
    return ok / len(ids)


def known_by_all_round(trace: Sequence[dict], origin: int, seq: int,
                       round_len: int) -> Optional[int]:
    """Round in which the last agent alive at the end learned ``(origin, seq)``."""
    snaps = rounds(trace)
    if not snaps:
        return None
    when = _knowledge(trace).get((origin, seq), {})
    alive = snaps[-1]["alive"]
    if not all(a in when for a in alive):
        return None
    return max(when[a] for a in alive) // round_len


def task_redistribution_efficiency(var_after: float, var_before: float) -> Optional[float]:
    """Queue-length variance some rounds after a load shock over the variance at the shock."""
    if var_before <= 0.0:
        return None
    return var_after / var_before
