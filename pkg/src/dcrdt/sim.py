"""Deterministic discrete-event simulation of an unreliable network.

Time is an integer tick. Messages may be dropped, duplicated and delayed by a
uniform number of ticks per copy (which is what reorders them); partitions cut
links for a bounded window; nodes crash, losing volatile state, and recover
from their durable store. All randomness comes from one seeded
:class:`~dcrdt.rng.XorShift64Star`, and events at the same tick run in
scheduling order, so a (scenario, seed) pair always yields the same trace.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import os
import shlex
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field, fields, replace
from typing import Any, NamedTuple

from dcrdt.antientropy import (
    DEFAULT_CHOOSE,
    BasicNode,
    CausalNode,
    ChoosePolicy,
    MemoryStore,
    MessageKind,
    WireMessage,
)
from dcrdt.datatypes import Datatype
from dcrdt.rng import XorShift64Star

DEFAULT_MAX_TICKS = 1_000_000


class ScenarioError(ValueError):
    """Invalid scenario script or configuration."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SimulationAborted(RuntimeError):
    """The run exceeded its tick guard."""


class Algorithm(str, enum.Enum):
    BASIC_DIRECT = "basic-direct"
    BASIC_TRANSITIVE = "basic-transitive"
    CAUSAL = "causal"
    FULL_STATE = "full-state-reference"


@dataclass(frozen=True)
class Partition:
    start: int
    end: int
    side_a: frozenset[str]
    side_b: frozenset[str]

    def cuts(self, tick: int, src: str, dst: str) -> bool:
        if not self.start <= tick < self.end:
            return False
        return (src in self.side_a and dst in self.side_b) or (src in self.side_b and dst in self.side_a)


@dataclass
class SimConfig:
    drop_prob: float = 0.0
    dup_prob: float = 0.0
    delay_min: int = 1
    delay_max: int = 1
    seed: int = 0
    ship_period: int = 5
    gc_period: int = 20
    horizon_periods: int = 50
    partitions: list[Partition] = field(default_factory=list)

    def validate(self) -> None:
        if not 0.0 <= self.drop_prob < 1.0:
            raise ScenarioError(f"drop_prob must be in [0, 1), got {self.drop_prob}")
        if not 0.0 <= self.dup_prob < 1.0:
            raise ScenarioError(f"dup_prob must be in [0, 1), got {self.dup_prob}")
        if not 0 <= self.delay_min <= self.delay_max:
            raise ScenarioError("need 0 <= delay_min <= delay_max")
        if self.ship_period < 1 or self.gc_period < 1:
            raise ScenarioError("periods must be positive")
        if self.horizon_periods < 0:
            raise ScenarioError("horizon_periods must be non-negative")
        for p in self.partitions:
            if p.end <= p.start:
                raise ScenarioError(f"partition window [{p.start}, {p.end}) is empty")


_SETTABLE = {f.name: f.type for f in fields(SimConfig) if f.name != "partitions"}
_SET_ALIASES = {"horizon": "horizon_periods"}


@dataclass(frozen=True)
class ScriptOp:
    tick: int
    node: str
    name: str
    args: tuple[bytes, ...] = ()


@dataclass
class Scenario:
    nodes: list[str] = field(default_factory=list)
    links: set[frozenset[str]] = field(default_factory=set)
    ops: list[ScriptOp] = field(default_factory=list)
    crashes: list[tuple[int, str]] = field(default_factory=list)
    recoveries: list[tuple[int, str]] = field(default_factory=list)
    config: SimConfig = field(default_factory=SimConfig)

    def neighbors(self, node: str) -> list[str]:
        if not self.links:
            return [n for n in self.nodes if n != node]
        return sorted(next(iter(link - {node})) for link in self.links if node in link)

    def validate(self) -> None:
        self.config.validate()
        known = set(self.nodes)
        if len(known) != len(self.nodes):
            raise ScenarioError("duplicate node id")
        for link in self.links:
            if not link <= known:
                raise ScenarioError(f"link mentions unknown node: {sorted(link)}")
        for op in self.ops:
            if op.node not in known:
                raise ScenarioError(f"op at unknown node {op.node!r}")
        for tick, node in (*self.crashes, *self.recoveries):
            if node not in known:
                raise ScenarioError(f"crash/recover of unknown node {node!r}")
        for tick, node in self.recoveries:
            if not any(ct < tick for ct, cn in self.crashes if cn == node):
                raise ScenarioError(f"recover of {node} at {tick} has no earlier crash")

    def last_activity(self) -> int:
        ticks = [op.tick for op in self.ops]
        ticks += [t for t, _ in self.crashes] + [t for t, _ in self.recoveries]
        ticks += [p.end for p in self.config.partitions]
        return max(ticks, default=0)

    def to_script(self) -> str:
        cfg = self.config
        lines = [f"node {n}" for n in self.nodes]
        lines += [f"link {' '.join(sorted(link))}" for link in sorted(self.links, key=sorted)]
        for name in _SETTABLE:
            lines.append(f"set {name} {getattr(cfg, name)}")
        for p in cfg.partitions:
            lines.append(f"partition {p.start} {p.end} {','.join(sorted(p.side_a))}|{','.join(sorted(p.side_b))}")
        for op in self.ops:
            args = " ".join(shlex.quote(a.decode("utf-8")) for a in op.args)
            lines.append(f"op {op.tick} {op.node} {op.name} {args}".rstrip())
        lines += [f"crash {t} {n}" for t, n in self.crashes]
        lines += [f"recover {t} {n}" for t, n in self.recoveries]
        return "\n".join(lines) + "\n"


def _int(tok: str, line: int) -> int:
    try:
        value = int(tok)
    except ValueError:
        raise ScenarioError(f"expected an integer, got {tok!r}", line) from None
    if value < 0:
        raise ScenarioError(f"expected a non-negative integer, got {tok!r}", line)
    return value


def parse_scenario(text: str) -> Scenario:
    """Parse the line-oriented scenario format.

    Directives: ``node <id>``, ``link <a> <b>``, ``op <tick> <node> <op> [args]``,
    ``crash <tick> <node>``, ``recover <tick> <node>``,
    ``partition <start> <end> <ids>|<ids>`` (ids comma separated) and
    ``set <key> <value>``. Blank lines and lines starting with ``#`` are skipped.
    """
    sc = Scenario()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            toks = shlex.split(line)
        except ValueError as exc:
            raise ScenarioError(str(exc), lineno) from None
        head, rest = toks[0], toks[1:]
        if head == "node" and len(rest) == 1:
            sc.nodes.append(rest[0])
        elif head == "link" and len(rest) == 2 and rest[0] != rest[1]:
            sc.links.add(frozenset(rest))
        elif head == "op" and len(rest) >= 3:
            sc.ops.append(ScriptOp(_int(rest[0], lineno), rest[1], rest[2], tuple(a.encode() for a in rest[3:])))
        elif head in ("crash", "recover") and len(rest) == 2:
            entry = (_int(rest[0], lineno), rest[1])
            (sc.crashes if head == "crash" else sc.recoveries).append(entry)
        elif head == "partition" and len(rest) == 3 and rest[2].count("|") == 1:
            a, b = rest[2].split("|")
            side_a = frozenset(x for x in a.split(",") if x)
            side_b = frozenset(x for x in b.split(",") if x)
            if not side_a or not side_b:
                raise ScenarioError("partition needs two non-empty sides", lineno)
            sc.config.partitions.append(Partition(_int(rest[0], lineno), _int(rest[1], lineno), side_a, side_b))
        elif head == "set" and len(rest) == 2:
            key = _SET_ALIASES.get(rest[0], rest[0])
            if key not in _SETTABLE:
                raise ScenarioError(f"unknown setting {rest[0]!r}", lineno)
            try:
                value = float(rest[1]) if "prob" in key else int(rest[1])
            except ValueError:
                raise ScenarioError(f"bad value for {key}: {rest[1]!r}", lineno) from None
            setattr(sc.config, key, value)
        else:
            raise ScenarioError(f"cannot parse directive: {line!r}", lineno)
    try:
        sc.validate()
    except ScenarioError as exc:
        raise ScenarioError(str(exc)) from None
    return sc


# -- trace ---------------------------------------------------------------------


class TraceEvent(NamedTuple):
    tick: int
    kind: str
    node: str
    peer: str = ""
    msg_id: int = -1
    msg_kind: str = ""
    n: int = 0
    nbytes: int = 0
    entries: int = 0
    full: bool = False
    copies: int = 0
    note: str = ""

    def line(self) -> str:
        return ",".join(str(int(v) if isinstance(v, bool) else v) for v in self)


@dataclass
class Trace:
    events: list[TraceEvent] = field(default_factory=list)
    messages: dict[int, WireMessage] = field(default_factory=dict)

    def digest(self) -> str:
        h = hashlib.sha256()
        for ev in self.events:
            h.update(ev.line().encode())
            h.update(b"\n")
        return h.hexdigest()

    def sends(self) -> list[TraceEvent]:
        return [ev for ev in self.events if ev.kind == "send"]


def payload_entries(state) -> int:
    """Number of map entries or tagged items a state carries."""
    if hasattr(state, "entries"):
        return len(state.entries)
    if hasattr(state, "t"):
        return len(state.s) + len(state.t)
    return len(state.s)


# -- network --------------------------------------------------------------------


def sim_send(cfg: SimConfig, rng: XorShift64Star, tick: int, src: str, dst: str) -> list[int]:
    """Delivery ticks for one transmission (empty when the copy is lost)."""
    for p in cfg.partitions:
        if p.cuts(tick, src, dst):
            return []
    if rng.random() < cfg.drop_prob:
        return []
    copies = 2 if rng.random() < cfg.dup_prob else 1
    return [tick + rng.randint(cfg.delay_min, cfg.delay_max) for _ in range(copies)]


class SimObserver:
    """Callbacks invoked synchronously by :class:`Simulation`; all optional."""

    def on_op(self, sim: Simulation, node: str, mutator, delta, tick: int) -> None: ...

    def on_send(self, sim: Simulation, src: str, dst: str, msg: WireMessage, msg_id: int, tick: int) -> None: ...

    def before_deliver(self, sim: Simulation, dst: str, src: str, msg: WireMessage, msg_id: int, tick: int) -> None: ...

    def after_deliver(self, sim: Simulation, dst: str, src: str, msg: WireMessage, msg_id: int, tick: int) -> None: ...

    def on_crash(self, sim: Simulation, node: str, tick: int) -> None: ...

    def on_recover(self, sim: Simulation, node: str, tick: int) -> None: ...


@dataclass
class SimResult:
    states: dict[str, Any]
    trace: Trace
    end_tick: int
    converged: bool
    convergence_tick: int
    nodes: dict[str, Any]


_OP, _CRASH, _RECOVER, _SHIP, _GC, _DELIVER = range(6)


def max_ticks_from_env(default: int = DEFAULT_MAX_TICKS) -> int:
    raw = os.environ.get("DCRDT_MAX_TICKS")
    return int(raw) if raw else default


class Simulation:
    def __init__(
        self,
        scenario: Scenario,
        datatype: Datatype,
        algorithm: Algorithm | str = Algorithm.CAUSAL,
        *,
        choose: ChoosePolicy = DEFAULT_CHOOSE,
        observer: SimObserver | None = None,
        node_factory: Callable[..., Any] | None = None,
        max_ticks: int | None = None,
    ):
        scenario.validate()
        self.scenario = scenario
        self.cfg = scenario.config
        self.datatype = datatype
        self.algorithm = Algorithm(algorithm)
        self.observer = observer or SimObserver()
        self.max_ticks = max_ticks if max_ticks is not None else max_ticks_from_env()
        self.rng = XorShift64Star(self.cfg.seed)
        self.trace = Trace()
        self.tick = 0
        self._queue: list[tuple] = []
        self._seq = 0
        self._msg_ids = 0
        self.last_change: dict[str, int] = {}

        bottom = datatype.bottom()
        if self.algorithm is Algorithm.CAUSAL:
            factory = node_factory or CausalNode
            self.nodes = {
                n: factory(n, bottom, scenario.neighbors(n), store=MemoryStore(bottom)) for n in scenario.nodes
            }
        else:
            if self.algorithm is Algorithm.FULL_STATE:
                choose = ChoosePolicy(always_full=True)
            transitive = self.algorithm is Algorithm.BASIC_TRANSITIVE
            factory = node_factory or BasicNode
            self.nodes = {
                n: factory(
                    n, bottom, scenario.neighbors(n), transitive=transitive, choose=choose, store=MemoryStore(bottom)
                )
                for n in scenario.nodes
            }
        for n in scenario.nodes:
            self.last_change[n] = 0

    # scheduling -----------------------------------------------------------------

    def _push(self, tick: int, kind: int, *data) -> None:
        heapq.heappush(self._queue, (tick, self._seq, kind, data))
        self._seq += 1

    def _record(self, ev: TraceEvent) -> None:
        self.trace.events.append(ev)

    def _schedule_script(self) -> None:
        sc = self.scenario
        for op in sorted(sc.ops, key=lambda o: o.tick):
            self._push(op.tick, _OP, op)
        for tick, node in sorted(sc.crashes):
            self._push(tick, _CRASH, node)
        for tick, node in sorted(sc.recoveries):
            self._push(tick, _RECOVER, node)

    # actions ---------------------------------------------------------------------

    def _touch(self, node: str, before) -> None:
        if self.nodes[node].X is not before and self.nodes[node].X != before:
            self.last_change[node] = self.tick

    def _transmit(self, src: str, dst: str, msg: WireMessage, *, full: bool = False) -> None:
        msg_id = self._msg_ids
        self._msg_ids += 1
        self.trace.messages[msg_id] = msg
        self.observer.on_send(self, src, dst, msg, msg_id, self.tick)
        ticks = sim_send(self.cfg, self.rng, self.tick, src, dst)
        entries = payload_entries(msg.payload) if msg.payload is not None else 0
        self._record(
            TraceEvent(
                self.tick, "send", src, dst, msg_id, msg.kind.name, msg.n, msg.nbytes, entries, full, len(ticks)
            )
        )
        for t in ticks:
            self._push(t, _DELIVER, src, dst, msg_id)

    def _do_op(self, op: ScriptOp) -> None:
        node = self.nodes[op.node]
        note = " ".join([op.name, *(a.decode("utf-8", "replace") for a in op.args)])
        if not node.up:
            self._record(TraceEvent(self.tick, "op-skipped", op.node, note=note))
            return
        mutator = self.datatype.mutator(op.name, op.node, op.args)
        before = node.X
        delta = node.on_operation(mutator)
        self._touch(op.node, before)
        self._record(TraceEvent(self.tick, "op", op.node, note=note))
        self.observer.on_op(self, op.node, mutator, delta, self.tick)

    def _do_ship(self, name: str) -> None:
        node = self.nodes[name]
        if not node.up:
            return
        if self.algorithm is Algorithm.CAUSAL:
            if not node.neighbors:
                return
            target = self.rng.choice(node.neighbors)
            self._record(TraceEvent(self.tick, "ship", name, target))
            msg = node.periodic_ship(target)
            if msg is not None:
                self._transmit(name, target, msg, full=node.last_ship_full)
        else:
            self._record(TraceEvent(self.tick, "ship", name))
            out = node.periodic_ship()
            for dst, msg in out:
                self._transmit(name, dst, msg, full=node.last_ship_full)

    def _do_gc(self, name: str) -> None:
        node = self.nodes[name]
        if node.up:
            node.periodic_gc()
            self._record(TraceEvent(self.tick, "gc", name))

    def _do_deliver(self, src: str, dst: str, msg_id: int) -> None:
        node = self.nodes[dst]
        msg = self.trace.messages[msg_id]
        if not node.up:
            self._record(TraceEvent(self.tick, "drop-crashed", dst, src, msg_id, msg.kind.name, msg.n))
            return
        self._record(TraceEvent(self.tick, "deliver", dst, src, msg_id, msg.kind.name, msg.n))
        self.observer.before_deliver(self, dst, src, msg, msg_id, self.tick)
        before = node.X
        if msg.kind is MessageKind.BASIC:
            node.on_receive(msg.payload)
        elif msg.kind is MessageKind.DELTA:
            ack = node.on_receive_delta(src, msg.payload, msg.n)
            self._transmit(dst, src, ack)
        else:
            node.on_receive_ack(src, msg.n)
        self._touch(dst, before)
        self.observer.after_deliver(self, dst, src, msg, msg_id, self.tick)

    def _do_crash(self, name: str) -> None:
        node = self.nodes[name]
        if not node.up:
            self._record(TraceEvent(self.tick, "crash-ignored", name))
            return
        node.crash()
        self._record(TraceEvent(self.tick, "crash", name))
        self.observer.on_crash(self, name, self.tick)

    def _do_recover(self, name: str) -> None:
        node = self.nodes[name]
        if node.up:
            self._record(TraceEvent(self.tick, "recover-ignored", name))
            return
        node.recover()
        self._record(TraceEvent(self.tick, "recover", name))
        self.observer.on_recover(self, name, self.tick)

    # main loop ---------------------------------------------------------------------

    def run(self) -> SimResult:
        cfg = self.cfg
        end = self.scenario.last_activity() + cfg.horizon_periods * cfg.ship_period
        if end > self.max_ticks:
            raise SimulationAborted(
                f"horizon tick {end} exceeds the guard of {self.max_ticks} ticks (DCRDT_MAX_TICKS)"
            )
        self._schedule_script()
        # Timers for the whole horizon go in up front, after the script events,
        # so within one tick: script events, then timers, then deliveries.
        for tick in range(cfg.ship_period, end + 1, cfg.ship_period):
            for n in self.scenario.nodes:
                self._push(tick, _SHIP, n)
        if self.algorithm is Algorithm.CAUSAL:
            for tick in range(cfg.gc_period, end + 1, cfg.gc_period):
                for n in self.scenario.nodes:
                    self._push(tick, _GC, n)

        handlers = {
            _DELIVER: self._do_deliver,
            _OP: self._do_op,
            _SHIP: self._do_ship,
            _GC: self._do_gc,
            _CRASH: self._do_crash,
            _RECOVER: self._do_recover,
        }
        queue = self._queue
        while queue:
            tick, _, kind, data = heapq.heappop(queue)
            if tick > self.max_ticks:
                raise SimulationAborted(f"event at tick {tick} exceeds the guard of {self.max_ticks} ticks")
            self.tick = tick
            handlers[kind](*data)

        states = {n: node.X for n, node in self.nodes.items()}
        alive = [s for s in states.values() if s is not None]
        converged = len(alive) == len(states) and all(s == alive[0] for s in alive)
        return SimResult(
            states=states,
            trace=self.trace,
            end_tick=self.tick,
            converged=converged,
            convergence_tick=max(self.last_change.values(), default=0),
            nodes=self.nodes,
        )


def run_simulation(scenario: Scenario, datatype: Datatype, algorithm: Algorithm | str, **kwargs) -> SimResult:
    return Simulation(scenario, datatype, algorithm, **kwargs).run()


def replay(scenario: Scenario, datatype: Datatype, algorithm: Algorithm | str, trace: Trace, **kwargs) -> dict[str, Any]:
    """Re-execute a recorded trace event by event and return the final states.

    Network randomness is not consulted: deliveries happen exactly where the
    trace put them, carrying the recorded messages.
    """
    sim = Simulation(scenario, datatype, algorithm, **kwargs)
    ops = {}
    for op in scenario.ops:
        ops.setdefault((op.tick, op.node), []).append(op)
    for ev in trace.events:
        node = sim.nodes.get(ev.node)
        sim.tick = ev.tick
        if ev.kind == "op":
            op = ops[(ev.tick, ev.node)].pop(0)
            node.on_operation(datatype.mutator(op.name, op.node, op.args))
        elif ev.kind == "op-skipped":
            ops[(ev.tick, ev.node)].pop(0)
        elif ev.kind == "ship":
            if sim.algorithm is Algorithm.CAUSAL:
                node.periodic_ship(ev.peer)
            else:
                node.periodic_ship()
        elif ev.kind == "gc":
            node.periodic_gc()
        elif ev.kind == "deliver":
            msg = trace.messages[ev.msg_id]
            if msg.kind is MessageKind.BASIC:
                node.on_receive(msg.payload)
            elif msg.kind is MessageKind.DELTA:
                node.on_receive_delta(ev.peer, msg.payload, msg.n)
            else:
                node.on_receive_ack(ev.peer, msg.n)
        elif ev.kind == "crash":
            node.crash()
        elif ev.kind == "recover":
            node.recover()
    return {n: node.X for n, node in sim.nodes.items()}


def with_config(scenario: Scenario, **changes) -> Scenario:
    """Copy of ``scenario`` with some :class:`SimConfig` fields replaced."""
    return replace(scenario, config=replace(scenario.config, **changes))


def complete_links(nodes: Iterable[str]) -> set[frozenset[str]]:
    nodes = list(nodes)
    return {frozenset((a, b)) for i, a in enumerate(nodes) for b in nodes[i + 1:]}


def ring_links(nodes: Iterable[str]) -> set[frozenset[str]]:
    nodes = list(nodes)
    if len(nodes) < 2:
        return set()
    return {frozenset((nodes[i], nodes[(i + 1) % len(nodes)])) for i in range(len(nodes))}
