"""Identifiers, priorities, values, version vectors and the envelope codec."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Union

AgentId = int
Tick = int
EnvelopeId = tuple[int, int]
VersionVector = dict[int, int]


class Priority(IntEnum):
    """Event salience. Compares Critical > High > Routine > Low."""

    LOW = 0
    ROUTINE = 1
    HIGH = 2
    CRITICAL = 3

    @property
    def wire_code(self) -> int:
        # declaration order Critical, High, Routine, Low
        return 3 - int(self)

    @classmethod
    def parse(cls, name: Union[str, "Priority"]) -> "Priority":
        if isinstance(name, Priority):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown priority {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.capitalize()


@dataclass(frozen=True, slots=True)
class Scalar:
    x: float


@dataclass(frozen=True, slots=True)
class Fact:
    subject: str
    obj: str
    qualifier: str

    def __post_init__(self):
        if not (self.subject and self.obj and self.qualifier):
            raise ValueError("fact symbols must be non-empty")


@dataclass(frozen=True, slots=True)
class Vector:
    xs: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.xs)


@dataclass(frozen=True, slots=True)
class Counter:
    n: int

    def __post_init__(self):
        if not 0 <= self.n < 1 << 64:
            raise ValueError("counter must fit an unsigned 64-bit integer")


Value = Union[Scalar, Fact, Vector, Counter]

VALUE_TAGS = {Scalar: 0, Fact: 1, Vector: 2, Counter: 3}


def value_token(v: Value):
    """JSON-ready representation used in traces and snapshots."""
    if isinstance(v, Scalar):
        return ["S", v.x]
    if isinstance(v, Fact):
        return ["F", v.subject, v.obj, v.qualifier]
    if isinstance(v, Vector):
        return ["V", list(v.xs)]
    if isinstance(v, Counter):
        return ["C", v.n]
    raise TypeError(f"not a value: {v!r}")


def value_from_token(tok) -> Value:
    tag = tok[0]
    if tag == "S":
        return Scalar(float(tok[1]))
    if tag == "F":
        return Fact(tok[1], tok[2], tok[3])
    if tag == "V":
        return Vector(tuple(float(x) for x in tok[1]))
    if tag == "C":
        return Counter(int(tok[1]))
    raise ValueError(f"bad value token {tok!r}")


@dataclass(frozen=True, slots=True)
class Envelope:
    """A signed, versioned, priority-tagged state update."""

    origin: AgentId
    seq: int
    key: str
    value: Value
    priority: Priority
    created_tick: Tick
    ttl_rounds: int
    hop_count: int = 0
    signature: bytes | None = None

    @property
    def id(self) -> EnvelopeId:
        return (self.origin, self.seq)

    def forwarded(self) -> "Envelope":
        # positional construction; dataclasses.replace is slow on hot paths
        return Envelope(self.origin, self.seq, self.key, self.value, self.priority,
                        self.created_tick, self.ttl_rounds, self.hop_count + 1, self.signature)


# -- version vectors ---------------------------------------------------------

def vv_merge(a: Mapping[int, int], b: Mapping[int, int]) -> VersionVector:
    """Pointwise maximum of two version vectors."""
    out = dict(a)
    for origin, seq in b.items():
        if seq > out.get(origin, 0):
            out[origin] = seq
    return out


def vv_missing(local: Mapping[int, int], remote: Mapping[int, int]) -> list[tuple[int, int]]:
    """Origins where ``remote`` is ahead, with local's seq as exclusive lower bound."""
    return sorted(
        (origin, local.get(origin, 0))
        for origin, seq in remote.items()
        if seq > local.get(origin, 0)
    )


def vv_leq(a: Mapping[int, int], b: Mapping[int, int]) -> bool:
    return all(seq <= b.get(origin, 0) for origin, seq in a.items())


# -- canonical encoding ------------------------------------------------------

_U64 = struct.Struct(">Q")
_U32 = struct.Struct(">I")
_F64 = struct.Struct(">d")


def _str_bytes(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def _value_bytes(v: Value) -> bytes:
    tag = bytes([VALUE_TAGS[type(v)]])
    if isinstance(v, Scalar):
        return tag + _F64.pack(v.x)
    if isinstance(v, Fact):
        return tag + _str_bytes(v.subject) + _str_bytes(v.obj) + _str_bytes(v.qualifier)
    if isinstance(v, Vector):
        return tag + _U32.pack(len(v.xs)) + b"".join(_F64.pack(x) for x in v.xs)
    return tag + _U64.pack(v.n)


def canonical_bytes(env: Envelope) -> bytes:
    """Deterministic big-endian encoding; the signature is not included."""
    return b"".join((
        _U64.pack(env.origin),
        _U64.pack(env.seq),
        _str_bytes(env.key),
        _value_bytes(env.value),
        _U64.pack(env.priority.wire_code),
        _U64.pack(env.created_tick),
        _U64.pack(env.ttl_rounds),
        _U64.pack(env.hop_count),
    ))


def _utf8_len(s: str) -> int:
    return len(s) if s.isascii() else len(s.encode("utf-8"))


def value_size(v: Value) -> int:
    if isinstance(v, Scalar):
        return 9
    if isinstance(v, Fact):
        return 13 + _utf8_len(v.subject) + _utf8_len(v.obj) + _utf8_len(v.qualifier)
    if isinstance(v, Vector):
        return 5 + 8 * len(v.xs)
    return 9


def encoded_size(env: Envelope) -> int:
    """``len(canonical_bytes(env))`` plus the signature, without encoding."""
    n = 8 + 8 + 4 + _utf8_len(env.key) + value_size(env.value) + 8 * 4
    if env.signature is not None:
        n += len(env.signature)
    return n


def cosine_distance(a: Vector, b: Vector) -> float:
    """``1 - cos(a, b)``; zero vectors count as maximally distant unless both are zero."""
    dot = sum(x * y for x, y in zip(a.xs, b.xs))
    na = math.sqrt(sum(x * x for x in a.xs))
    nb = math.sqrt(sum(y * y for y in b.xs))
    if na == 0.0 or nb == 0.0:
        return 0.0 if na == nb else 1.0
    return max(0.0, 1.0 - dot / (na * nb))
