"""Per-node anti-entropy state machines.

``BasicNode`` buffers deltas into a single delta-group and broadcasts either
that group or the full state on every ship period; it only guarantees
convergence. ``CausalNode`` numbers every joined delta, tracks what each
neighbor has acknowledged and ships delta-intervals that the receiver can
join without breaking causal consistency.

Both nodes keep their durable part in a :class:`DurableStore` and write it
once per state transition; if the write fails the transition is abandoned.
"""

from __future__ import annotations

import enum
import os
import re
import tempfile
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol

from dcrdt import codec
from dcrdt.crdts import read_state

State = Any
DeltaMutator = Callable[[State], State]


class StorageError(RuntimeError):
    """A durable write did not complete."""


class DurableStore(Protocol):
    def put_atomic(self, X: State, c: int) -> None: ...

    def get(self) -> tuple[State, int]: ...


class MemoryStore:
    """In-process store; states are immutable so no copy is needed."""

    def __init__(self, X: State, c: int = 0):
        self._X = X
        self._c = c
        self.writes = 0

    def put_atomic(self, X: State, c: int) -> None:
        self._X, self._c = X, c
        self.writes += 1

    def get(self) -> tuple[State, int]:
        return self._X, self._c


class FileStore:
    """One file holding ``c`` then the encoded state, replaced by rename."""

    def __init__(self, path: str | os.PathLike, bottom: State):
        self.path = Path(path)
        self._bottom = bottom

    def put_atomic(self, X: State, c: int) -> None:
        data = codec.u64(c) + X.encoded
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name + ".")
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
        except OSError as exc:
            raise StorageError(str(exc)) from exc

    def get(self) -> tuple[State, int]:
        if not self.path.exists():
            return self._bottom, 0
        reader = codec.Reader(self.path.read_bytes())
        c = reader.u64()
        X = read_state(reader)
        reader.expect_end()
        return X, c


# -- wire format ---------------------------------------------------------------


class MessageKind(enum.IntEnum):
    BASIC = 0x10
    DELTA = 0x11
    ACK = 0x12


@dataclass(frozen=True)
class WireMessage:
    kind: MessageKind
    payload: State | None = None
    n: int = 0

    def __post_init__(self) -> None:
        if self.kind is MessageKind.ACK:
            if self.payload is not None:
                raise ValueError("ack messages carry no payload")
        elif self.payload is None:
            raise ValueError(f"{self.kind.name} message needs a payload")

    def encode(self) -> bytes:
        parts = [bytes([self.kind])]
        if self.kind is not MessageKind.ACK:
            parts.append(self.payload.encoded)
        if self.kind is not MessageKind.BASIC:
            parts.append(codec.u64(self.n))
        return b"".join(parts)

    @property
    def nbytes(self) -> int:
        size = 1
        if self.payload is not None:
            size += self.payload.nbytes
        if self.kind is not MessageKind.BASIC:
            size += 8
        return size

    @classmethod
    def decode(cls, data: bytes) -> WireMessage:
        reader = codec.Reader(data)
        try:
            kind = MessageKind(reader.byte())
        except ValueError as exc:
            raise codec.DecodeError("unknown message kind") from exc
        payload = None if kind is MessageKind.ACK else read_state(reader)
        n = 0 if kind is MessageKind.BASIC else reader.u64()
        reader.expect_end()
        return cls(kind, payload, n)


# -- basic anti-entropy ----------------------------------------------------------


@dataclass(frozen=True)
class ChoosePolicy:
    """Decides, per ship period, between the delta-group and the full state.

    ``full_every=None`` with ``always_full=False`` always ships deltas;
    ``full_every=N`` ships the full state on every N-th period.
    """

    always_full: bool = False
    full_every: int | None = None

    @classmethod
    def parse(cls, text: str) -> ChoosePolicy:
        if text == "delta":
            return cls()
        if text == "full":
            return cls(always_full=True)
        m = re.fullmatch(r"full-every-(\d+)", text)
        if m and int(m.group(1)) >= 1:
            return cls(full_every=int(m.group(1)))
        raise ValueError(f"unknown choose policy {text!r}")

    def ship_full(self, period: int) -> bool:
        """``period`` counts ship periods from 1."""
        if self.always_full:
            return True
        return self.full_every is not None and period % self.full_every == 0

    def __str__(self) -> str:
        if self.always_full:
            return "full"
        if self.full_every is None:
            return "delta"
        return f"full-every-{self.full_every}"


DEFAULT_CHOOSE = ChoosePolicy(full_every=10)


class BasicNode:
    """Convergence-only anti-entropy with an optional transitive mode."""

    def __init__(
        self,
        replica: str,
        bottom: State,
        neighbors: Iterable[str],
        *,
        transitive: bool = False,
        choose: ChoosePolicy = DEFAULT_CHOOSE,
        store: DurableStore | None = None,
    ):
        self.replica = replica
        self.bottom = bottom
        self.neighbors = sorted(neighbors)
        self.transitive = transitive
        self.choose = choose
        self.store = store if store is not None else MemoryStore(bottom)
        self.X, _ = self.store.get()
        self.D = bottom
        self.periods = 0
        self.up = True
        self.last_ship_full = False

    def on_operation(self, mutator: DeltaMutator) -> State:
        d = mutator(self.X)
        X = self.X.join(d)
        self.store.put_atomic(X, 0)
        self.X = X
        self.D = self.D.join(d)
        return d

    def periodic_ship(self) -> list[tuple[str, WireMessage]]:
        self.periods += 1
        full = self.choose.ship_full(self.periods)
        payload = self.X if full else self.D
        self.D = self.bottom
        self.last_ship_full = full
        if payload == self.bottom:
            return []
        msg = WireMessage(MessageKind.BASIC, payload)
        return [(j, msg) for j in self.neighbors]

    def on_receive(self, d: State) -> None:
        X = self.X.join(d)
        if X != self.X:
            self.store.put_atomic(X, 0)
            self.X = X
        if self.transitive:
            self.D = self.D.join(d)

    def crash(self) -> None:
        self.up = False
        self.D = self.bottom
        self.X = None

    def recover(self) -> None:
        self.X, _ = self.store.get()
        self.D = self.bottom
        self.up = True


# -- causal anti-entropy -----------------------------------------------------------


class CausalNode:
    """Delta-interval anti-entropy that respects the causal merging condition.

    ``X`` and ``c`` are durable; ``D`` (index -> delta) and ``A`` (neighbor ->
    highest acked index) are volatile and vanish on :meth:`crash`.
    """

    def __init__(
        self,
        replica: str,
        bottom: State,
        neighbors: Iterable[str],
        *,
        store: DurableStore | None = None,
    ):
        self.replica = replica
        self.bottom = bottom
        self.neighbors = sorted(neighbors)
        self.store = store if store is not None else MemoryStore(bottom)
        self.X, self.c = self.store.get()
        self.D: dict[int, State] = {}
        self.A: dict[str, int] = {}
        self.up = True
        self.last_interval: tuple[int, int] | None = None
        self.last_ship_full = False

    @classmethod
    def recover_from(cls, replica: str, bottom: State, neighbors: Iterable[str], store: DurableStore) -> CausalNode:
        return cls(replica, bottom, neighbors, store=store)

    def _append(self, X: State, d: State) -> None:
        self.store.put_atomic(X, self.c + 1)
        self.X = X
        self.D[self.c] = d
        self.c += 1

    def on_operation(self, mutator: DeltaMutator) -> State:
        d = mutator(self.X)
        self._append(self.X.join(d), d)
        return d

    def on_receive_delta(self, sender: str, d: State, n: int) -> WireMessage:
        X = self.X.join(d)
        # d is subsumed exactly when joining it changes nothing.
        if X != self.X:
            self._append(X, d)
        return WireMessage(MessageKind.ACK, None, n)

    def on_receive_ack(self, sender: str, n: int) -> None:
        if n > self.A.get(sender, 0):
            self.A[sender] = n

    def interval(self, start: int) -> State:
        out = self.bottom
        for l in range(start, self.c):
            out = out.join(self.D[l])
        return out

    def periodic_ship(self, target: str) -> WireMessage | None:
        acked = self.A.get(target, 0)
        if acked >= self.c:
            self.last_interval = None
            return None
        self.last_ship_full = not self.D or min(self.D) > acked
        if self.last_ship_full:
            payload, start = self.X, 0
        else:
            payload, start = self.interval(acked), acked
        self.last_interval = (start, self.c)
        return WireMessage(MessageKind.DELTA, payload, self.c)

    def gc_floor(self) -> int:
        # Neighbors that never acked count as 0, so nothing they lack is dropped.
        return min((self.A.get(j, 0) for j in self.neighbors), default=0)

    def periodic_gc(self) -> None:
        floor = self.gc_floor()
        if self.D and min(self.D) < floor:
            self.D = {k: v for k, v in self.D.items() if k >= floor}

    def crash(self) -> None:
        self.up = False
        self.D = {}
        self.A = {}
        self.X = self.c = None

    def recover(self) -> None:
        self.X, self.c = self.store.get()
        self.D = {}
        self.A = {}
        self.up = True
