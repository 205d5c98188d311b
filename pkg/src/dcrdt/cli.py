"""Command-line entry point: run one scenario, write CSV, optionally check it.

Exit status: 0 when every replica converged (and a requested check passed),
1 on non-convergence or a failed check, 2 on bad input, 3 when the run hit
the tick guard.
"""

from __future__ import annotations

import argparse
import re
import sys
from dataclasses import replace
from pathlib import Path

from dcrdt.antientropy import DEFAULT_CHOOSE, ChoosePolicy
from dcrdt.datatypes import DATATYPES, get_datatype
from dcrdt.harness.correspondence import check_correspondence
from dcrdt.harness.interleavings import enumerate_interleavings
from dcrdt.harness.runner import run_scenario, scenario_id_for, state_diff, write_per_message, write_records
from dcrdt.harness.scenarios import generate_scenario
from dcrdt.sim import Algorithm, Scenario, ScenarioError, SimulationAborted, max_ticks_from_env, parse_scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORTED = 0, 1, 2, 3


def _choose(text: str) -> ChoosePolicy:
    try:
        return ChoosePolicy.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"probability must be in [0, 1), got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcrdt", description="Simulate delta-state CRDT anti-entropy.")
    p.add_argument("--scenario", type=Path, help="scenario script; without it a random workload is generated")
    p.add_argument("--datatype", choices=sorted(DATATYPES), default="gcounter")
    p.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=Algorithm.CAUSAL.value)
    p.add_argument("--choose", type=_choose, default=DEFAULT_CHOOSE, help="delta | full | full-every-N")
    p.add_argument("--replicas", type=int, default=3)
    p.add_argument("--topology", choices=["complete", "ring"], default="complete")
    p.add_argument("--ops", type=int, default=30, help="operations per replica")
    # Network settings default to None so a scenario file's own values stay
    # in force unless a flag overrides them.
    p.add_argument("--drop", type=_probability)
    p.add_argument("--dup", type=_probability)
    p.add_argument("--delay-max", type=int)
    p.add_argument("--ship-period", type=int)
    p.add_argument("--gc-period", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="metrics CSV (default: stdout)")
    p.add_argument("--per-message", type=Path, help="per-message CSV")
    p.add_argument("--check", choices=["correspondence", "interleavings", "none"], default="none")
    return p


def _overrides(args: argparse.Namespace) -> dict:
    pairs = {
        "drop_prob": args.drop,
        "dup_prob": args.dup,
        "delay_max": args.delay_max,
        "ship_period": args.ship_period,
        "gc_period": args.gc_period,
        "seed": args.seed,
    }
    return {k: v for k, v in pairs.items() if v is not None}


def load_scenario(args: argparse.Namespace) -> tuple[Scenario, str]:
    if args.scenario is not None:
        sc = parse_scenario(args.scenario.read_text(encoding="utf-8"))
        sc = replace(sc, config=replace(sc.config, **_overrides(args)))
        sc.validate()
        sid = re.sub(r"[^A-Za-z0-9_]", "_", args.scenario.stem) or "scenario"
        return sc, sid
    sc = generate_scenario(
        args.datatype,
        replicas=args.replicas,
        ops=args.ops,
        seed=args.seed or 0,
        topology=args.topology,
        drop=args.drop or 0.0,
        dup=args.dup or 0.0,
        delay_max=args.delay_max or 1,
        ship_period=args.ship_period or 5,
        gc_period=args.gc_period or 20,
    )
    return sc, scenario_id_for(args.datatype, args.algorithm, sc.config.seed)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    err = sys.stderr

    if args.check == "interleavings":
        try:
            verdict = enumerate_interleavings(args.datatype)
        except ValueError as exc:
            print(f"error: {exc}", file=err)
            return EXIT_USAGE
        status = "PASS" if verdict.passed else f"FAIL {verdict.failure}"
        print(f"interleavings {args.datatype}: {status} ({verdict.scenarios} scenarios, {verdict.terminals} terminal schedules)")
        return EXIT_OK if verdict.passed else EXIT_FAIL

    if args.check == "correspondence" and args.algorithm != Algorithm.CAUSAL.value:
        print("error: --check correspondence needs --algorithm causal", file=err)
        return EXIT_USAGE

    try:
        scenario, sid = load_scenario(args)
    except ScenarioError as exc:
        where = f"{args.scenario}: " if args.scenario else ""
        print(f"error: {where}{exc}", file=err)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE

    max_ticks = max_ticks_from_env()
    dt = get_datatype(args.datatype)
    try:
        outcome = run_scenario(scenario, dt, args.algorithm, choose=args.choose, scenario_id=sid, max_ticks=max_ticks)
    except SimulationAborted as exc:
        print(f"error: {exc}", file=err)
        return EXIT_ABORTED
    except ValueError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE

    if args.out is not None:
        with args.out.open("w", encoding="utf-8", newline="") as fh:
            write_records([outcome.record], fh)
    else:
        write_records([outcome.record], sys.stdout)
    if args.per_message is not None:
        with args.per_message.open("w", encoding="utf-8", newline="") as fh:
            write_per_message(outcome.result, fh)

    code = EXIT_OK
    if not outcome.converged:
        print(f"not converged by tick {outcome.result.end_tick}:", file=err)
        print(state_diff(outcome.result, dt), file=err)
        code = EXIT_FAIL
    if args.check == "correspondence":
        verdict = check_correspondence(scenario, dt, max_ticks=max_ticks)
        print(f"correspondence: {verdict}", file=err)
        if not verdict.passed:
            code = EXIT_FAIL
    return code


if __name__ == "__main__":
    sys.exit(main())
