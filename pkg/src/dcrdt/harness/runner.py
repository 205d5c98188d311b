"""Run one scenario and turn its trace into metrics and CSV rows."""

from __future__ import annotations

import csv
import io
import re
from collections.abc import Iterable
from dataclasses import astuple, dataclass, fields
from typing import TextIO

from dcrdt.antientropy import DEFAULT_CHOOSE, ChoosePolicy, MessageKind
from dcrdt.datatypes import Datatype, get_datatype
from dcrdt.sim import Algorithm, Scenario, SimObserver, SimResult, Simulation

_ID = re.compile(r"[A-Za-z0-9_]+")


@dataclass(frozen=True)
class MetricsRecord:
    scenario_id: str
    algorithm: str
    datatype: str
    total_messages: int
    total_payload_bytes: int
    mean_delta_message_bytes: int
    full_state_bytes: int
    convergence_tick: int
    max_message_entries: int

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class RunOutcome:
    record: MetricsRecord
    result: SimResult

    @property
    def converged(self) -> bool:
        return self.result.converged


def scenario_id_for(datatype: str, algorithm: str, seed: int) -> str:
    return re.sub(r"[^A-Za-z0-9_]", "_", f"{datatype}_{algorithm}_s{seed}")


def metrics(scenario_id: str, algorithm: str, datatype: str, result: SimResult) -> MetricsRecord:
    if not _ID.fullmatch(scenario_id):
        raise ValueError(f"scenario id {scenario_id!r} must match [A-Za-z0-9_]+")
    sends = result.trace.sends()
    payload_sends = [ev for ev in sends if ev.msg_kind != MessageKind.ACK.name]
    deltas = [ev.nbytes for ev in payload_sends if not ev.full]
    alive = [s for s in result.states.values() if s is not None]
    return MetricsRecord(
        scenario_id=scenario_id,
        algorithm=algorithm,
        datatype=datatype,
        total_messages=len(sends),
        total_payload_bytes=sum(ev.nbytes for ev in sends),
        mean_delta_message_bytes=sum(deltas) // len(deltas) if deltas else 0,
        full_state_bytes=max((s.nbytes for s in alive), default=0),
        convergence_tick=result.convergence_tick,
        max_message_entries=max((ev.entries for ev in payload_sends), default=0),
    )


def run_scenario(
    scenario: Scenario,
    datatype: str | Datatype,
    algorithm: Algorithm | str,
    *,
    choose: ChoosePolicy = DEFAULT_CHOOSE,
    scenario_id: str | None = None,
    observer: SimObserver | None = None,
    max_ticks: int | None = None,
) -> RunOutcome:
    dt = get_datatype(datatype) if isinstance(datatype, str) else datatype
    algo = Algorithm(algorithm)
    sim = Simulation(scenario, dt, algo, choose=choose, observer=observer, max_ticks=max_ticks)
    result = sim.run()
    sid = scenario_id or scenario_id_for(dt.name, algo.value, scenario.config.seed)
    return RunOutcome(metrics(sid, algo.value, dt.name, result), result)


def _writer(out: TextIO):
    return csv.writer(out, quoting=csv.QUOTE_NONE, lineterminator="\n")


def write_records(records: Iterable[MetricsRecord], out: TextIO) -> None:
    w = _writer(out)
    w.writerow(MetricsRecord.header())
    for rec in records:
        w.writerow(astuple(rec))


PER_MESSAGE_HEADER = ["msg_id", "tick", "src", "dst", "kind", "n", "bytes", "entries", "full", "copies"]


def write_per_message(result: SimResult, out: TextIO) -> None:
    w = _writer(out)
    w.writerow(PER_MESSAGE_HEADER)
    for ev in result.trace.sends():
        w.writerow([ev.msg_id, ev.tick, ev.node, ev.peer, ev.msg_kind, ev.n, ev.nbytes, ev.entries, int(ev.full), ev.copies])


def records_csv(records: Iterable[MetricsRecord]) -> str:
    buf = io.StringIO()
    write_records(records, buf)
    return buf.getvalue()


def state_diff(result: SimResult, datatype: Datatype) -> str:
    """Human-readable per-replica dump, used when a run did not converge."""
    lines = []
    for node, X in sorted(result.states.items()):
        if X is None:
            lines.append(f"{node}: crashed")
        else:
            lines.append(f"{node}: value={datatype.show(X)} bytes={X.nbytes} state={X.encoded.hex()}")
    return "\n".join(lines)
