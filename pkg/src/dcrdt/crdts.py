"""Delta-state datatypes: grow-only counter, two add-wins OR-Sets, MV-register.

Every state is an immutable value. Delta-mutators return states of the same
type (a delta is just a small state), so joins, equality and encoding are the
same code paths for states and deltas.

Elements and register values are byte strings. Within a dot store each dot
tags exactly one payload, so the tagged set ``{(dot, payload)}`` is kept as a
dict keyed by dot.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from typing import ClassVar, TypeVar

from dcrdt import codec
from dcrdt.lattice import EMPTY_CONTEXT, CausalContext, Dot, ReplicaId

TAG_GCOUNTER = 0x01
TAG_AWORSET_TOMB = 0x02
TAG_AWORSET = 0x03
TAG_MVREG = 0x04

T = TypeVar("T")


class _Encoded:
    """Mixin: cached canonical encoding, used for hashing and size metrics."""

    @cached_property
    def encoded(self) -> bytes:
        return bytes([self.TYPE_TAG]) + self._encode_body()

    def __hash__(self) -> int:
        return hash(self.encoded)

    @property
    def nbytes(self) -> int:
        return len(self.encoded)


# -- grow-only counter -------------------------------------------------------


@dataclass(frozen=True, eq=True)
class GCounter(_Encoded):
    entries: Mapping[ReplicaId, int] = field(default_factory=dict)

    TYPE_TAG: ClassVar[int] = TAG_GCOUNTER

    def __post_init__(self) -> None:
        if any(n <= 0 for n in self.entries.values()):
            if any(n < 0 for n in self.entries.values()):
                raise ValueError("counter entries must be non-negative")
            object.__setattr__(self, "entries", {r: n for r, n in self.entries.items() if n})

    __hash__ = _Encoded.__hash__

    @classmethod
    def bottom(cls) -> GCounter:
        return cls()

    def join(self, other: GCounter) -> GCounter:
        if not other.entries:
            return self
        if not self.entries:
            return other
        merged = dict(self.entries)
        for r, n in other.entries.items():
            if n > merged.get(r, 0):
                merged[r] = n
        return GCounter(merged)

    def value(self) -> int:
        return sum(self.entries.values())

    def _encode_body(self) -> bytes:
        parts = [codec.u64(len(self.entries))]
        for r in sorted(self.entries):
            parts.append(codec.rid(r))
            parts.append(codec.u64(self.entries[r]))
        return b"".join(parts)


def gc_inc_full(i: ReplicaId, m: GCounter) -> GCounter:
    entries = dict(m.entries)
    entries[i] = entries.get(i, 0) + 1
    return GCounter(entries)


def gc_inc_delta(i: ReplicaId, m: GCounter) -> GCounter:
    return GCounter({i: m.entries.get(i, 0) + 1})


def gc_value(m: GCounter) -> int:
    return m.value()


# -- tagged payloads ---------------------------------------------------------


def _encode_tagged(s: Mapping[Dot, bytes]) -> bytes:
    parts = [codec.u64(len(s))]
    for d, payload in sorted(s.items()):
        parts.append(codec.rid(d.replica))
        parts.append(codec.u64(d.counter))
        parts.append(codec.blob(payload))
    return b"".join(parts)


def _decode_tagged(reader: codec.Reader) -> dict[Dot, bytes]:
    out = {}
    for _ in range(reader.u64()):
        d = Dot(reader.rid(), reader.u64())
        out[d] = reader.blob()
    return out


# -- add-wins OR-Set with tombstones ------------------------------------------


@dataclass(frozen=True, eq=True)
class AWORSetTomb(_Encoded):
    s: Mapping[Dot, bytes] = field(default_factory=dict)
    t: frozenset[Dot] = frozenset()

    TYPE_TAG: ClassVar[int] = TAG_AWORSET_TOMB

    __hash__ = _Encoded.__hash__

    @classmethod
    def bottom(cls) -> AWORSetTomb:
        return cls()

    def join(self, other: AWORSetTomb) -> AWORSetTomb:
        if not other.s and not other.t:
            return self
        if not self.s and not self.t:
            return other
        return AWORSetTomb({**self.s, **other.s}, self.t | other.t)

    def elements(self) -> frozenset[bytes]:
        return frozenset(e for d, e in self.s.items() if d not in self.t)

    def _encode_body(self) -> bytes:
        parts = [_encode_tagged(self.s), codec.u64(len(self.t))]
        parts.extend(d.encode() for d in sorted(self.t))
        return b"".join(parts)


def orsett_add_delta(i: ReplicaId, e: bytes, X: AWORSetTomb) -> AWORSetTomb:
    # Tags come from s, which only grows under this join, so they never repeat.
    n = max((d.counter for d in X.s if d.replica == i), default=0)
    return AWORSetTomb({Dot(i, n + 1): e})


def orsett_rmv_delta(e: bytes, X: AWORSetTomb) -> AWORSetTomb:
    return AWORSetTomb({}, frozenset(d for d, v in X.s.items() if v == e))


def orsett_elements(X: AWORSetTomb) -> frozenset[bytes]:
    return X.elements()


def orsett_join(a: AWORSetTomb, b: AWORSetTomb) -> AWORSetTomb:
    return a.join(b)


# -- causal dot stores: optimized OR-Set and MV-register -------------------------


@dataclass(frozen=True, eq=True)
class _DotStore(_Encoded):
    s: Mapping[Dot, bytes] = field(default_factory=dict)
    c: CausalContext = EMPTY_CONTEXT

    __hash__ = _Encoded.__hash__

    def __post_init__(self) -> None:
        for d in self.s:
            if d not in self.c:
                raise ValueError(f"tag {d!r} is not covered by the causal context")

    @classmethod
    def bottom(cls: type[T]) -> T:
        return cls()

    @classmethod
    def _trusted(cls: type[T], s: dict[Dot, bytes], c: CausalContext) -> T:
        obj = object.__new__(cls)
        object.__setattr__(obj, "s", s)
        object.__setattr__(obj, "c", c)
        return obj

    def join(self: T, other: T) -> T:
        if not other.s and not other.c:
            return self
        if not self.s and not self.c:
            return other
        oc, sc = other.c, self.c
        os_ = other.s
        s = {d: v for d, v in self.s.items() if d in os_ or d not in oc}
        for d, v in os_.items():
            if d not in sc:
                s[d] = v
        return type(self)._trusted(s, sc.union(oc))

    def payloads(self) -> frozenset[bytes]:
        return frozenset(self.s.values())

    def _encode_body(self) -> bytes:
        return _encode_tagged(self.s) + self.c.encode()


class AWORSet(_DotStore):
    """Add-wins OR-Set without tombstones; removed tags live on in ``c``."""

    TYPE_TAG: ClassVar[int] = TAG_AWORSET

    def elements(self) -> frozenset[bytes]:
        return self.payloads()


class MVReg(_DotStore):
    """Multi-value register tagging each value with a single dot."""

    TYPE_TAG: ClassVar[int] = TAG_MVREG

    def read(self) -> frozenset[bytes]:
        return self.payloads()


def orset_add_delta(i: ReplicaId, e: bytes, X: AWORSet) -> AWORSet:
    d = X.c.next_dot(i)
    return AWORSet._trusted({d: e}, CausalContext({}, frozenset([d])))


def orset_rmv_delta(e: bytes, X: AWORSet) -> AWORSet:
    return AWORSet._trusted({}, CausalContext.from_dots(d for d, v in X.s.items() if v == e))


def orset_elements(X: AWORSet) -> frozenset[bytes]:
    return X.elements()


def orset_join(a: AWORSet, b: AWORSet) -> AWORSet:
    return a.join(b)


def mvreg_wr_delta(i: ReplicaId, v: bytes, X: MVReg) -> MVReg:
    d = X.c.next_dot(i)
    return MVReg._trusted({d: v}, CausalContext.from_dots([d, *X.s]))


def mvreg_rd(X: MVReg) -> frozenset[bytes]:
    return X.read()


def mvreg_join(a: MVReg, b: MVReg) -> MVReg:
    return a.join(b)


# -- mutator plumbing ----------------------------------------------------------

DeltaMutator = Callable[[T], T]


def to_full_mutator(mutator: DeltaMutator) -> DeltaMutator:
    """Turn a delta-mutator into the standard mutator ``X -> X ⊔ m(X)``."""

    def full(X):
        return X.join(mutator(X))

    full.__name__ = f"full_{getattr(mutator, '__name__', 'mutator')}"
    return full


STATE_TYPES = {cls.TYPE_TAG: cls for cls in (GCounter, AWORSetTomb, AWORSet, MVReg)}


def encode_state(x) -> bytes:
    return x.encoded


def decode_state(data: bytes):
    reader = codec.Reader(data)
    state = read_state(reader)
    reader.expect_end()
    return state


def read_state(reader: codec.Reader):
    tag = reader.byte()
    cls = STATE_TYPES.get(tag)
    if cls is None:
        raise codec.DecodeError(f"unknown state type tag 0x{tag:02x}")
    if cls is GCounter:
        entries = {}
        for _ in range(reader.u64()):
            r = reader.rid()
            entries[r] = reader.u64()
        return GCounter(entries)
    s = _decode_tagged(reader)
    if cls is AWORSetTomb:
        t = frozenset(Dot(reader.rid(), reader.u64()) for _ in range(reader.u64()))
        return AWORSetTomb(s, t)
    return cls(s, CausalContext.decode_from(reader))
