"""Message and state size measurements for the three datatypes.

Sizes are always taken from the canonical encoding; entry counts come from
the payload itself (map entries for the counter, tagged items otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from dcrdt import crdts
from dcrdt.antientropy import ChoosePolicy
from dcrdt.datatypes import get_datatype
from dcrdt.harness.scenarios import replica_ids
from dcrdt.sim import Algorithm, Scenario, ScriptOp, SimConfig, SimObserver, Simulation, complete_links

DELTA_ONLY = ChoosePolicy()


def _quiet_config(ship_period: int, horizon_periods: int = 5) -> SimConfig:
    return SimConfig(ship_period=ship_period, horizon_periods=horizon_periods)


# -- counter -------------------------------------------------------------------


@dataclass
class CounterReport:
    replicas: int
    delta_entries: list[int]
    full_entries: list[int]
    steady_ratio: Fraction

    @property
    def max_full_entries(self) -> int:
        return max(self.full_entries, default=0)


def counter_bursts(replicas: int = 10, rounds: int = 3, burst: int = 4, ship_period: int = 5) -> Scenario:
    """Each ship period one replica, in turn, increments ``burst`` times."""
    nodes = replica_ids(replicas)
    ops = []
    for period in range(rounds * replicas):
        writer = nodes[period % replicas]
        base = period * ship_period + 1
        ops += [ScriptOp(base + k, writer, "inc") for k in range(burst)]
    return Scenario(nodes=nodes, links=complete_links(nodes), ops=ops, config=_quiet_config(ship_period))


def measure_counter(replicas: int = 10, rounds: int = 3, burst: int = 4) -> CounterReport:
    """Entries per message for delta shipping vs. the full-state reference.

    The steady state starts once every replica has written once, since
    before that the full state has fewer than ``replicas`` entries.
    """
    sc = counter_bursts(replicas, rounds, burst)
    dt = get_datatype("gcounter")
    delta = Simulation(sc, dt, Algorithm.BASIC_DIRECT, choose=DELTA_ONLY).run()
    full = Simulation(sc, dt, Algorithm.FULL_STATE).run()
    steady_from = sc.config.ship_period * replicas + 1
    d_steady = [ev.entries for ev in delta.trace.sends() if ev.tick >= steady_from]
    f_steady = [ev.entries for ev in full.trace.sends() if ev.tick >= steady_from]
    ratio = Fraction(sum(d_steady), len(d_steady)) / Fraction(sum(f_steady), len(f_steady))
    return CounterReport(
        replicas=replicas,
        delta_entries=[ev.entries for ev in delta.trace.sends()],
        full_entries=[ev.entries for ev in full.trace.sends()],
        steady_ratio=ratio,
    )


# -- optimized OR-Set --------------------------------------------------------------


@dataclass
class SetReport:
    resident: int
    ops_per_period: int
    mean_delta_bytes: Fraction
    full_state_bytes: int

    @property
    def ratio(self) -> Fraction:
        return self.mean_delta_bytes / self.full_state_bytes


def set_workload(
    resident: int = 100, ops_per_period: int = 5, periods: int = 20, replicas: int = 3, ship_period: int = 5
) -> tuple[Scenario, int]:
    """Load ``resident`` elements, let them spread, then churn a few per period.

    The churn removes and re-adds resident elements, so the set stays at
    ``resident`` elements. Returns the scenario and the tick at which the
    churn starts.
    """
    nodes = replica_ids(replicas)
    width = len(str(resident - 1))
    elems = [f"e{i:0{width}d}".encode() for i in range(resident)]
    ops = [ScriptOp(1, nodes[i % replicas], "add", (e,)) for i, e in enumerate(elems)]
    churn_start = 4 * ship_period + 1
    k = 0
    for p in range(periods):
        writer = nodes[p % replicas]
        tick = churn_start + p * ship_period
        for j in range(ops_per_period):
            e = elems[(k // 2) % resident]
            ops.append(ScriptOp(tick + j % ship_period, writer, "rmv" if k % 2 == 0 else "add", (e,)))
            k += 1
    sc = Scenario(nodes=nodes, links=complete_links(nodes), ops=ops, config=_quiet_config(ship_period))
    return sc, churn_start


def measure_set(resident: int = 100, ops_per_period: int = 5, periods: int = 20) -> SetReport:
    sc, churn_start = set_workload(resident, ops_per_period, periods)
    res = Simulation(sc, get_datatype("aworset"), Algorithm.BASIC_DIRECT, choose=DELTA_ONLY).run()
    sizes = [ev.nbytes for ev in res.trace.sends() if ev.tick >= churn_start]
    final = next(iter(res.states.values()))
    return SetReport(
        resident=len(final.elements()),
        ops_per_period=ops_per_period,
        mean_delta_bytes=Fraction(sum(sizes), len(sizes)),
        full_state_bytes=final.nbytes,
    )


# -- multi-value register -------------------------------------------------------------


class _MaxBytes(SimObserver):
    def __init__(self):
        self.max_bytes = 0

    def _see(self, sim, node):
        X = sim.nodes[node].X
        if X is not None and X.nbytes > self.max_bytes:
            self.max_bytes = X.nbytes

    def on_op(self, sim, node, mutator, delta, tick):
        self._see(sim, node)

    def after_deliver(self, sim, dst, src, msg, msg_id, tick):
        self._see(sim, dst)


@dataclass
class RegisterReport:
    writers: list[int]
    max_state_bytes: list[int]
    linear_coef: tuple[float, float]
    quadratic_coef: tuple[float, float, float]
    linear_max_residual: float
    quadratic_contribution: float = field(init=False)

    def __post_init__(self) -> None:
        self.quadratic_contribution = abs(self.quadratic_coef[0]) * max(self.writers) ** 2

    @property
    def linear(self) -> bool:
        """The quadratic term explains no more than the linear fit leaves over.

        With exactly linear data both numbers are floating-point noise, so a
        noise floor of 1e-9 of the largest size is allowed for either.
        """
        noise = 1e-9 * max(self.max_state_bytes)
        return self.quadratic_contribution <= max(self.linear_max_residual, noise)


def measure_register(writers: tuple[int, ...] = (2, 4, 8, 16)) -> RegisterReport:
    """All ``n`` replicas write once at the same tick, then converge."""
    dt = get_datatype("mvreg")
    sizes = []
    for n in writers:
        nodes = replica_ids(max(writers))[:n]
        ops = [ScriptOp(1, node, "wr", (f"v_{node}".encode(),)) for node in nodes]
        config = _quiet_config(5, horizon_periods=50)
        sc = Scenario(nodes=nodes, links=complete_links(nodes), ops=ops, config=config)
        obs = _MaxBytes()
        res = Simulation(sc, dt, Algorithm.CAUSAL, observer=obs).run()
        if not res.converged or len(dt.query(next(iter(res.states.values())))) != n:
            raise RuntimeError(f"register run with {n} writers did not keep all {n} concurrent values")
        sizes.append(obs.max_bytes)
    return fit_growth(list(writers), sizes)


def fit_growth(writers: list[int], sizes: list[int]) -> RegisterReport:
    """Fit sizes against writer counts with degree 1 and degree 2 polynomials."""
    x = np.array(writers, dtype=float)
    y = np.array(sizes, dtype=float)
    lin = np.polyfit(x, y, 1)
    quad = np.polyfit(x, y, 2)
    residual = float(np.max(np.abs(np.polyval(lin, x) - y)))
    return RegisterReport(
        writers=list(writers),
        max_state_bytes=list(sizes),
        linear_coef=(float(lin[0]), float(lin[1])),
        quadratic_coef=(float(quad[0]), float(quad[1]), float(quad[2])),
        linear_max_residual=residual,
    )


# -- state size under churn -------------------------------------------------------------


def add_remove_cycles(k: int, element: bytes = b"e", replica: str = "r00") -> tuple[int, int, int]:
    """Add then remove one element ``k`` times at a single replica.

    Returns ``(|s| optimized, cloud size optimized, |s| tombstone)`` where
    for the tombstone variant ``s`` counts add tags (tombstones live in ``t``).
    """
    opt = crdts.AWORSet.bottom()
    tomb = crdts.AWORSetTomb.bottom()
    for _ in range(k):
        opt = opt.join(crdts.orset_add_delta(replica, element, opt))
        opt = opt.join(crdts.orset_rmv_delta(element, opt))
        tomb = tomb.join(crdts.orsett_add_delta(replica, element, tomb))
        tomb = tomb.join(crdts.orsett_rmv_delta(element, tomb))
    return len(opt.s), len(opt.c.cloud), len(tomb.s)
