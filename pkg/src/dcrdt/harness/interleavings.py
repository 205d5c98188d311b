"""Exhaustive exploration of small replicated executions.

A mini-scenario gives each replica a short list of operations. The explorer
walks every global schedule built from two kinds of steps: a replica runs its
next operation (producing a delta), or a produced delta is delivered to
another replica. Each delta is delivered ``copies`` times to every other
replica, so duplicates and every reordering are covered. Configurations are
memoized on their full contents (replica states, generated deltas, pending
deliveries and what every operation had observed), which merges schedules
that reach the same configuration without assuming anything about joins.

At every terminal configuration all replicas must hold equal states, and the
query result must match an oracle computed only from the causal history:
which operations each operation had observed when it ran.
"""

from __future__ import annotations

import itertools
import sys
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

from dcrdt.datatypes import Datatype, get_datatype

REPLICA_NAMES = "pqrstu"

OpId = tuple[int, int]  # (replica index, position in that replica's script)
MiniScript = Sequence[Sequence[tuple[str, bytes]]]
Oracle = Callable[[MiniScript, dict[OpId, frozenset]], frozenset]


def orset_oracle(script: MiniScript, observed: dict[OpId, frozenset]) -> frozenset:
    """Add-wins: an add survives unless some remove of its element saw it."""
    ops = {(r, k): op for r, ops in enumerate(script) for k, op in enumerate(ops)}
    present = set()
    for oid, (name, elem) in ops.items():
        if name != "add":
            continue
        removed = any(
            rname == "rmv" and relem == elem and oid in observed[rid] for rid, (rname, relem) in ops.items()
        )
        if not removed:
            present.add(elem)
    return frozenset(present)


def mvreg_oracle(script: MiniScript, observed: dict[OpId, frozenset]) -> frozenset:
    """Values whose write no other write had observed."""
    writes = {(r, k): v for r, ops in enumerate(script) for k, (_, v) in enumerate(ops)}
    return frozenset(
        v for oid, v in writes.items() if not any(oid in observed[o] for o in writes if o != oid)
    )


@dataclass
class InterleavingVerdict:
    passed: bool
    scenarios: int = 0
    configurations: int = 0
    terminals: int = 0
    failure: str = ""
    results: dict = field(default_factory=dict)

    def merge(self, other: InterleavingVerdict) -> None:
        self.scenarios += other.scenarios
        self.configurations += other.configurations
        self.terminals += other.terminals
        if not other.passed and self.passed:
            self.passed = False
            self.failure = other.failure
        self.results.update(other.results)


class _Interner:
    """Numbers distinct states so configurations hash and compare as ints.

    Joins and mutator results are cached per pair of numbers, so each
    distinct join is computed once.
    """

    def __init__(self):
        self.ids: dict = {}
        self.states: list = []
        self._joins: dict[tuple[int, int], int] = {}

    def intern(self, state) -> int:
        sid = self.ids.get(state)
        if sid is None:
            sid = self.ids[state] = len(self.states)
            self.states.append(state)
        return sid

    def join(self, a: int, b: int) -> int:
        out = self._joins.get((a, b))
        if out is None:
            out = self._joins[(a, b)] = self.intern(self.states[a].join(self.states[b]))
        return out


def explore(datatype: Datatype, script: MiniScript, oracle: Oracle, *, copies: int = 2) -> InterleavingVerdict:
    """Check every schedule of one mini-scenario.

    A delivery to replica r only touches r's state, so it commutes with every
    step at other replicas except the one that produced the delivered delta.
    Every schedule is therefore equivalent to one in which deliveries to r
    come in a batch right before r's next operation, or after r has run its
    whole script. The search uses that form: once a delivery to r starts a
    batch, only more deliveries to r or r's operation may follow. Deliveries
    to a replica that is done are drained last, per replica, in every order,
    memoized on its state and pending multiset.
    """
    nreps = len(script)
    names = REPLICA_NAMES[:nreps]
    mutators = [
        [datatype.mutator(name, names[r], (arg,)) for name, arg in ops] for r, ops in enumerate(script)
    ]
    lengths = tuple(len(ops) for ops in script)
    pool = _Interner()
    bottom = pool.intern(datatype.bottom())
    generated: dict[tuple[int, int, int], int] = {}
    expectations: dict[tuple, frozenset] = {}
    verdict = InterleavingVerdict(passed=True, scenarios=1)
    outcomes: set[tuple] = set()
    seen_configs: set = set()
    drained: dict[tuple, frozenset] = {}
    path: list[str] = []

    def drain(state, pending):
        key = (state, pending)
        hit = drained.get(key)
        if hit is not None:
            return hit
        if not pending:
            out = frozenset([state])
        else:
            out = frozenset()
            for pos, (d, left) in enumerate(pending):
                rest = pending[:pos] + (((d, left - 1),) if left > 1 else ()) + pending[pos + 1 :]
                out |= drain(pool.join(state, d), rest)
        drained[key] = out
        return out

    def finish(states, deltas, pending):
        verdict.terminals += 1
        observed = tuple((oid, obs) for oid, _, obs in deltas)
        expected = expectations.get(observed)
        if expected is None:
            expected = expectations[observed] = oracle(script, dict(observed))
        by_oid = {oid: d for oid, d, _ in deltas}
        finals: set = set()
        for r in range(nreps):
            mine = tuple(sorted((by_oid[oid], left) for (oid, dst), left in pending if dst == r and left))
            finals |= drain(states[r], mine)
        if len(finals) != 1:
            verdict.passed = False
            verdict.failure = f"replicas can end in {len(finals)} different states after {' '.join(path)}"
            return
        got = datatype.query(pool.states[next(iter(finals))])
        if got != expected:
            verdict.passed = False
            verdict.failure = (
                f"{datatype.name}: got {sorted(got)} expected {sorted(expected)} after {' '.join(path)}"
            )
        outcomes.add((tuple(sorted(observed)), got))

    def visit(idx, states, seen, deltas, pending, focus):
        key = (idx, states, seen, deltas, pending, focus)
        if key in seen_configs:
            return
        seen_configs.add(key)
        moved = False
        for r in range(nreps):
            k = idx[r]
            if k == lengths[r] or focus not in (None, r):
                continue
            moved = True
            oid = (r, k)
            d = generated.get((r, k, states[r]))
            if d is None:
                d = generated[(r, k, states[r])] = pool.intern(mutators[r][k](pool.states[states[r]]))
            new_states = states[:r] + (pool.join(states[r], d),) + states[r + 1 :]
            # A finished replica's observations feed no later operation.
            mine = seen[r] | {oid} if k + 1 < lengths[r] else frozenset()
            new_seen = seen[:r] + (mine,) + seen[r + 1 :]
            new_deltas = deltas + ((oid, d, seen[r]),)
            new_pending = tuple(
                sorted(pending + tuple(((oid, dst), copies) for dst in range(nreps) if dst != r))
            )
            path.append(f"{names[r]}:{script[r][k][0]}({script[r][k][1].decode()})")
            visit(idx[:r] + (k + 1,) + idx[r + 1 :], new_states, new_seen, new_deltas, new_pending, None)
            path.pop()
            if not verdict.passed:
                return
        for pos, ((oid, dst), left) in enumerate(pending):
            # Leftovers for replicas that are done wait for the drain phase.
            if not left or idx[dst] == lengths[dst] or focus not in (None, dst):
                continue
            moved = True
            d = next(delta for o, delta, _ in deltas if o == oid)
            new_states = states[:dst] + (pool.join(states[dst], d),) + states[dst + 1 :]
            new_seen = seen[:dst] + (seen[dst] | {oid},) + seen[dst + 1 :]
            new_pending = pending[:pos] + (((oid, dst), left - 1),) + pending[pos + 1 :]
            path.append(f"{names[oid[0]]}#{oid[1]}->{names[dst]}")
            visit(idx, new_states, new_seen, deltas, new_pending, dst)
            path.pop()
            if not verdict.passed:
                return
        if not moved:
            finish(states, deltas, pending)

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 10_000))
    try:
        visit((0,) * nreps, (bottom,) * nreps, (frozenset(),) * nreps, (), (), None)
    finally:
        sys.setrecursionlimit(limit)
    verdict.configurations = len(seen_configs) + len(drained)
    verdict.results[tuple(tuple(ops) for ops in script)] = frozenset(outcomes)
    return verdict


def orset_scripts(max_ops: int = 3, elements: Iterable[bytes] = (b"e",), replicas: int = 2) -> list[MiniScript]:
    alphabet = [(name, e) for e in elements for name in ("add", "rmv")]
    per_replica = [seq for n in range(max_ops + 1) for seq in itertools.product(alphabet, repeat=n)]
    return [list(combo) for combo in itertools.product(per_replica, repeat=replicas)]


def mvreg_scripts(max_writes: int = 4, replicas: int = 3) -> list[MiniScript]:
    scripts = []
    for counts in itertools.product(range(max_writes + 1), repeat=replicas):
        if sum(counts) > max_writes:
            continue
        values = iter(f"v{i}".encode() for i in itertools.count(1))
        scripts.append([[("wr", next(values)) for _ in range(c)] for c in counts])
    return scripts


def enumerate_interleavings(
    datatype: str | Datatype, scripts: Iterable[MiniScript] | None = None, *, copies: int = 2
) -> InterleavingVerdict:
    """Run :func:`explore` over a family of mini-scenarios.

    Defaults: all 2-replica scripts of up to 3 add/remove operations per
    replica for the OR-Sets, all 3-replica scripts of up to 4 writes for the
    register.
    """
    dt = get_datatype(datatype) if isinstance(datatype, str) else datatype
    if dt.name == "mvreg":
        oracle = mvreg_oracle
        scripts = mvreg_scripts() if scripts is None else scripts
    elif dt.name in ("aworset", "aworset-tomb"):
        oracle = orset_oracle
        scripts = orset_scripts() if scripts is None else scripts
    else:
        raise ValueError(f"no interleaving oracle for {dt.name}")
    total = InterleavingVerdict(passed=True)
    for script in scripts:
        total.merge(explore(dt, script, oracle, copies=copies))
        if not total.passed:
            break
    return total
