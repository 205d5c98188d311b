"""Join-semilattice contract, dots and compressed causal contexts."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import reduce
from typing import NamedTuple, Protocol, TypeVar

from dcrdt import codec

ReplicaId = str
"""Replica identifiers are opaque strings, ordered by code point."""

VersionVector = Mapping[ReplicaId, int]
"""Replica id to highest contiguous counter; zero entries are never stored."""

S = TypeVar("S", bound="Lattice")


class Lattice(Protocol):
    """What every replicated state type provides."""

    @classmethod
    def bottom(cls: type[S]) -> S: ...

    def join(self: S, other: S) -> S: ...


def join(a: S, b: S) -> S:
    """Least upper bound of two states of the same type."""
    return a.join(b)


def leq(a: S, b: S) -> bool:
    """Lattice order, derived from join: ``a <= b`` iff ``a ⊔ b == b``."""
    return a.join(b) == b


def join_all(states: Iterable[S], bottom: S) -> S:
    return reduce(join, states, bottom)


class _DotFields(NamedTuple):
    replica: ReplicaId
    counter: int


class Dot(_DotFields):
    """A globally unique event tag: the ``counter``-th event of ``replica``."""

    __slots__ = ()

    def __new__(cls, replica: ReplicaId, counter: int) -> Dot:
        if counter < 1:
            raise ValueError(f"dot counter must be >= 1, got {counter}")
        return super().__new__(cls, replica, counter)

    def __repr__(self) -> str:
        return f"({self.replica},{self.counter})"

    def encode(self) -> bytes:
        return codec.rid(self.replica) + codec.u64(self.counter)


def _compact(vv: Mapping[ReplicaId, int], cloud: Iterable[Dot]) -> tuple[dict, frozenset]:
    compact = {r: n for r, n in vv.items() if n}
    rest = []
    # Ascending order per replica lets a single pass absorb whole runs.
    for d in sorted(cloud):
        cur = compact.get(d.replica, 0)
        if d.counter <= cur:
            continue
        if d.counter == cur + 1:
            compact[d.replica] = d.counter
        else:
            rest.append(d)
    return compact, frozenset(rest)


@dataclass(frozen=True)
class CausalContext:
    """A set of dots stored as a version vector plus a cloud of stragglers.

    The representation is always compacted: every dot in ``cloud`` lies above
    the frontier for its replica and is not the next contiguous one, so two
    contexts with the same membership compare equal.
    """

    compact: Mapping[ReplicaId, int] = field(default_factory=dict)
    cloud: frozenset[Dot] = frozenset()

    def __post_init__(self) -> None:
        if self.cloud or any(n == 0 for n in self.compact.values()):
            compact, cloud = _compact(self.compact, self.cloud)
            object.__setattr__(self, "compact", compact)
            object.__setattr__(self, "cloud", cloud)

    def __hash__(self) -> int:
        return hash(self.encode())

    @classmethod
    def from_dots(cls, dots: Iterable[Dot]) -> CausalContext:
        return cls({}, frozenset(dots))

    def __contains__(self, d: Dot) -> bool:
        return d.counter <= self.compact.get(d.replica, 0) or d in self.cloud

    def __bool__(self) -> bool:
        return bool(self.compact) or bool(self.cloud)

    def __len__(self) -> int:
        return sum(self.compact.values()) + len(self.cloud)

    def dots(self) -> Iterable[Dot]:
        for r in sorted(self.compact):
            for k in range(1, self.compact[r] + 1):
                yield Dot(r, k)
        yield from sorted(self.cloud)

    def insert(self, d: Dot) -> CausalContext:
        if d in self:
            return self
        return CausalContext(self.compact, self.cloud | {d})

    def union(self, other: CausalContext) -> CausalContext:
        if not other:
            return self
        if not self:
            return other
        vv = dict(self.compact)
        for r, n in other.compact.items():
            if n > vv.get(r, 0):
                vv[r] = n
        cloud = self.cloud | other.cloud
        if not cloud:
            return CausalContext(vv)
        return CausalContext(vv, cloud)

    def max(self, replica: ReplicaId) -> int:
        top = self.compact.get(replica, 0)
        for d in self.cloud:
            if d.replica == replica and d.counter > top:
                top = d.counter
        return top

    def next_dot(self, replica: ReplicaId) -> Dot:
        return Dot(replica, self.max(replica) + 1)

    def encode(self) -> bytes:
        parts = [codec.u64(len(self.compact))]
        for r in sorted(self.compact):
            parts.append(codec.rid(r))
            parts.append(codec.u64(self.compact[r]))
        parts.append(codec.u64(len(self.cloud)))
        parts.extend(d.encode() for d in sorted(self.cloud))
        return b"".join(parts)

    @classmethod
    def decode_from(cls, reader: codec.Reader) -> CausalContext:
        vv = {}
        for _ in range(reader.u64()):
            r = reader.rid()
            vv[r] = reader.u64()
        cloud = [Dot(reader.rid(), reader.u64()) for _ in range(reader.u64())]
        return cls(vv, frozenset(cloud))


EMPTY_CONTEXT = CausalContext()


def cc_contains(c: CausalContext, d: Dot) -> bool:
    return d in c


def cc_insert(c: CausalContext, d: Dot) -> CausalContext:
    return c.insert(d)


def cc_union(c1: CausalContext, c2: CausalContext) -> CausalContext:
    return c1.union(c2)


def cc_max(c: CausalContext, replica: ReplicaId) -> int:
    return c.max(replica)
