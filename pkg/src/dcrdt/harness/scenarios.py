"""Seeded generation of random workloads for the simulator."""

from __future__ import annotations

from dcrdt.rng import XorShift64Star
from dcrdt.sim import Scenario, ScriptOp, SimConfig, complete_links, ring_links

ELEMENT_POOL = 16
ADD_BIAS = 0.6
# Salt for the workload stream, so op choices never consume network draws.
_WORKLOAD_SALT = 0x6F7073


def replica_ids(count: int) -> list[str]:
    # Zero padded so every id encodes to the same number of bytes.
    width = max(2, len(str(count - 1)))
    return [f"r{i:0{width}d}" for i in range(count)]


def random_op(datatype: str, node: str, serial: int, rng: XorShift64Star) -> tuple[str, tuple[bytes, ...]]:
    if datatype == "gcounter":
        return "inc", ()
    if datatype in ("aworset", "aworset-tomb"):
        elem = f"e{rng.randint(0, ELEMENT_POOL - 1)}".encode()
        return ("add" if rng.random() < ADD_BIAS else "rmv"), (elem,)
    if datatype == "mvreg":
        return "wr", (f"{node}_{serial}".encode(),)
    raise ValueError(f"unknown datatype {datatype!r}")


def generate_scenario(
    datatype: str,
    *,
    replicas: int = 5,
    ops: int = 200,
    seed: int = 0,
    topology: str = "complete",
    drop: float = 0.0,
    dup: float = 0.0,
    delay_max: int = 1,
    ship_period: int = 5,
    gc_period: int = 20,
    horizon_periods: int = 50,
    crash: bool = False,
) -> Scenario:
    """Every replica runs ``ops`` operations, one per tick from tick 1.

    With ``crash=True`` one replica crashes on the tick right after one of
    its ship timers fires (so its deltas and acks are still in flight) and
    recovers one ship period later.
    """
    if replicas < 1:
        raise ValueError("need at least one replica")
    nodes = replica_ids(replicas)
    if topology == "complete":
        links = complete_links(nodes)
    elif topology == "ring":
        links = ring_links(nodes)
    else:
        raise ValueError(f"unknown topology {topology!r}")
    rng = XorShift64Star(seed).fork(_WORKLOAD_SALT)
    script = []
    for node in nodes:
        for j in range(ops):
            name, args = random_op(datatype, node, j, rng)
            script.append(ScriptOp(1 + j, node, name, args))
    script.sort(key=lambda op: op.tick)
    config = SimConfig(
        drop_prob=drop,
        dup_prob=dup,
        delay_min=1,
        delay_max=delay_max,
        seed=seed,
        ship_period=ship_period,
        gc_period=gc_period,
        horizon_periods=horizon_periods,
    )
    sc = Scenario(nodes=nodes, links=links, ops=script, config=config)
    if crash:
        victim = rng.choice(nodes)
        last_ship = max(ship_period, (max(ops, 1) // ship_period) * ship_period)
        ship_tick = ship_period * rng.randint(1, last_ship // ship_period)
        sc.crashes.append((ship_tick + 1, victim))
        sc.recoveries.append((ship_tick + 1 + ship_period, victim))
    sc.validate()
    return sc
