"""Random workloads shared by the test modules."""

from __future__ import annotations

import random

from dcrdt.antientropy import CausalNode, MessageKind, WireMessage
from dcrdt.datatypes import get_datatype

REPLICAS = ("i", "j", "k")
ELEMENTS = tuple(f"e{n}".encode() for n in range(5))
DATATYPE_NAMES = ("gcounter", "aworset", "aworset-tomb", "mvreg")

# one PASS/FAIL line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def random_mutator(name: str, rng: random.Random, replica: str | None = None):
    dt = get_datatype(name)
    replica = replica or rng.choice(REPLICAS)
    if name == "gcounter":
        return dt.mutator("inc", replica)
    if name == "mvreg":
        return dt.mutator("wr", replica, (f"v{rng.randrange(8)}".encode(),))
    op = "add" if rng.random() < 0.55 else "rmv"
    return dt.mutator(op, replica, (rng.choice(ELEMENTS),))


def random_world(name: str, rng: random.Random, steps: int | None = None) -> list:
    """Every state and delta seen in one random execution.

    A few replicas mutate and occasionally merge, which covers concurrent
    tags, observed removes and causal contexts with gaps (a replica can join
    a peer's delta without the deltas before it). States from one world can
    be joined freely: a dot always tags the same payload, as in any real run.
    Independent worlds would reuse dots for different payloads.
    """
    dt = get_datatype(name)
    states = {r: dt.bottom() for r in REPLICAS}
    seen = [dt.bottom()]
    deltas = []
    for _ in range(steps if steps is not None else rng.randrange(0, 16)):
        r = rng.choice(REPLICAS)
        roll = rng.random()
        if roll < 0.6:
            d = random_mutator(name, rng, r)(states[r])
            deltas.append(d)
            seen.append(d)
            states[r] = states[r].join(d)
        elif roll < 0.8 and deltas:
            states[r] = states[r].join(rng.choice(deltas))
        else:
            states[r] = states[r].join(states[rng.choice(REPLICAS)])
        seen.append(states[r])
    return seen


def random_state(name: str, rng: random.Random):
    return rng.choice(random_world(name, rng))


def random_triple(name: str, rng: random.Random) -> tuple:
    world = random_world(name, rng)
    return rng.choice(world), rng.choice(world), rng.choice(world)


class SkipFirstDelta(CausalNode):
    """Broken shipper: intervals start one index past the neighbor's ack."""

    def periodic_ship(self, target):
        acked = self.A.get(target, 0)
        if self.D and min(self.D) <= acked and acked + 1 < self.c:
            self.last_ship_full = False
            self.last_interval = (acked + 1, self.c)
            return WireMessage(MessageKind.DELTA, self.interval(acked + 1), self.c)
        return super().periodic_ship(target)
