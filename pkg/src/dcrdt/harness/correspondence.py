"""Executable check that causal delta anti-entropy matches a full-state run.

The delta run is observed in lockstep with a reference execution on the very
same schedule. In the reference, operations apply full mutators and a
delivered interval is replaced by the state the sender held when it shipped
that interval. After every transition the two states at the affected node
must be equal, and before every delivery of an interval starting at index
``a`` the receiver must already include the sender's state at index ``a``
(the condition under which joining just the interval is as good as joining
the sender's whole state).
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

from dcrdt.antientropy import MessageKind, WireMessage
from dcrdt.crdts import to_full_mutator
from dcrdt.datatypes import Datatype, get_datatype
from dcrdt.lattice import leq
from dcrdt.sim import Algorithm, Scenario, SimObserver, Simulation


@dataclass
class CorrespondenceVerdict:
    passed: bool
    transitions: int = 0
    deliveries: int = 0
    failure: str = ""

    def __str__(self) -> str:
        if self.passed:
            return f"PASS ({self.transitions} transitions, {self.deliveries} interval deliveries)"
        return f"FAIL {self.failure}"


class _Diverged(Exception):
    pass


def _show(X) -> str:
    return "<crashed>" if X is None else X.encoded.hex()


class CorrespondenceObserver(SimObserver):
    def __init__(self, datatype: Datatype, nodes: list[str]):
        bottom = datatype.bottom()
        self.reference = {n: bottom for n in nodes}
        # history[n][k] is the state of n while its counter equalled k
        self.history: dict[str, list[Any]] = {n: [bottom] for n in nodes}
        self.shipped: dict[int, tuple[Any, int, int]] = {}
        self.verdict = CorrespondenceVerdict(passed=True)

    def _fail(self, message: str) -> None:
        self.verdict.passed = False
        self.verdict.failure = message
        raise _Diverged(message)

    def _record_history(self, node, name: str) -> None:
        hist = self.history[name]
        if node.c < len(hist) - 1:
            # The counter went backwards: entries past it will be rewritten.
            del hist[node.c + 1 :]
        while len(hist) <= node.c:
            hist.append(node.X)
        hist[node.c] = node.X

    def _compare(self, sim: Simulation, name: str, tick: int, what: str) -> None:
        self.verdict.transitions += 1
        X = sim.nodes[name].X
        Y = self.reference[name]
        if X != Y:
            self._fail(f"tick {tick} {what} at {name}: delta state {_show(X)} != reference state {_show(Y)}")

    def on_op(self, sim, node, mutator, delta, tick):
        self.reference[node] = to_full_mutator(mutator)(self.reference[node])
        self._record_history(sim.nodes[node], node)
        self._compare(sim, node, tick, f"operation {mutator.__name__}")

    def on_send(self, sim, src, dst, msg: WireMessage, msg_id, tick):
        if msg.kind is not MessageKind.DELTA:
            return
        start, _ = sim.nodes[src].last_interval
        # Both states are captured now: a later recovery may rewrite history.
        self.shipped[msg_id] = (self.reference[src], start, self.history[src][start])

    def before_deliver(self, sim, dst, src, msg, msg_id, tick):
        if msg.kind is not MessageKind.DELTA:
            return
        self.verdict.deliveries += 1
        _, start, base = self.shipped[msg_id]
        X = sim.nodes[dst].X
        if not leq(base, X):
            self._fail(
                f"tick {tick} delivery of msg {msg_id} {src}->{dst}: interval starts at {start} but "
                f"{dst} lacks {src}'s state at that index: {_show(base)} not <= {_show(X)}"
            )

    def after_deliver(self, sim, dst, src, msg, msg_id, tick):
        if msg.kind is not MessageKind.DELTA:
            return
        snapshot, _, _ = self.shipped[msg_id]
        self.reference[dst] = self.reference[dst].join(snapshot)
        self._record_history(sim.nodes[dst], dst)
        self._compare(sim, dst, tick, f"delivery of msg {msg_id} from {src}")

    def on_recover(self, sim, node, tick):
        self._record_history(sim.nodes[node], node)
        self._compare(sim, node, tick, "recovery")


def check_correspondence(
    scenario: Scenario,
    datatype: str | Datatype,
    *,
    node_factory: Callable[..., Any] | None = None,
    max_ticks: int | None = None,
) -> CorrespondenceVerdict:
    """Run the causal algorithm on ``scenario`` under the lockstep observer.

    ``node_factory`` substitutes the node class, which is how tests plug in a
    deliberately broken shipper as a negative control.
    """
    dt = get_datatype(datatype) if isinstance(datatype, str) else datatype
    observer = CorrespondenceObserver(dt, scenario.nodes)
    sim = Simulation(
        scenario, dt, Algorithm.CAUSAL, observer=observer, node_factory=node_factory, max_ticks=max_ticks
    )
    try:
        sim.run()
    except _Diverged:
        pass
    return observer.verdict


class InvariantViolation(AssertionError):
    pass


class CausalInvariantObserver(SimObserver):
    """Asserts node-local invariants of causal runs after every transition.

    Always checked: the state's causal context (for dot-store types) has an
    empty cloud, acked indices never exceed the node's counter, and the
    buffered indices form a contiguous run ending just below the counter.
    ``monotone=True`` also checks that the state only ever grows.
    """

    def __init__(self, monotone: bool = False):
        self.monotone = monotone
        self.checks = 0
        self._last: dict[str, Any] = {}

    def _check(self, sim: Simulation, name: str, tick: int) -> None:
        node = sim.nodes[name]
        X = node.X
        self.checks += 1
        ctx = getattr(X, "c", None)
        if ctx is not None and ctx.cloud:
            raise InvariantViolation(f"tick {tick} {name}: context cloud not empty: {sorted(ctx.cloud)}")
        if any(a > node.c for a in node.A.values()):
            raise InvariantViolation(f"tick {tick} {name}: ack beyond counter {node.c}: {node.A}")
        if node.D and sorted(node.D) != list(range(min(node.D), node.c)):
            raise InvariantViolation(f"tick {tick} {name}: buffer indices {sorted(node.D)} not contiguous to {node.c}")
        if self.monotone:
            prev = self._last.get(name)
            if prev is not None and not leq(prev, X):
                raise InvariantViolation(f"tick {tick} {name}: state shrank")
            self._last[name] = X

    def on_op(self, sim, node, mutator, delta, tick):
        self._check(sim, node, tick)

    def after_deliver(self, sim, dst, src, msg, msg_id, tick):
        self._check(sim, dst, tick)

    def on_recover(self, sim, node, tick):
        self._check(sim, node, tick)
