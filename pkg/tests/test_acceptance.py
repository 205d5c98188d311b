"""The ten acceptance criteria, each at its stated size and tolerance.

Every test records one PASS/FAIL line, printed together at the end of the
pytest run, then asserts the same condition.
"""

import random
import time
from fractions import Fraction

import pytest

from dcrdt.crdts import gc_inc_delta, gc_inc_full, to_full_mutator
from dcrdt.datatypes import get_datatype
from dcrdt.harness.complexity import add_remove_cycles, measure_counter, measure_register, measure_set
from dcrdt.harness.correspondence import CausalInvariantObserver, InvariantViolation, check_correspondence
from dcrdt.harness.interleavings import enumerate_interleavings
from dcrdt.harness.scenarios import generate_scenario
from dcrdt.sim import Algorithm, Simulation
from helpers import ACCEPTANCE_LINES, DATATYPE_NAMES, REPLICAS, SkipFirstDelta, random_mutator, random_state, random_triple


def verdict(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_01_lattice_laws():
    start = time.perf_counter()
    bad = []
    for name in DATATYPE_NAMES:
        bottom = get_datatype(name).bottom()
        for seed in range(10_000):
            a, b, c = random_triple(name, random.Random(seed))
            if not (
                a.join(b) == b.join(a)
                and a.join(b).join(c) == a.join(b.join(c))
                and a.join(a) == a
                and bottom.join(a) == a == a.join(bottom)
            ):
                bad.append((name, seed))
    elapsed = time.perf_counter() - start
    verdict(1, not bad and elapsed < 30, f"40000 triples, {len(bad)} violations, {elapsed:.1f}s (budget 30s)")


def test_02_counter_decomposition():
    rng = random.Random(2)
    bad = 0
    for _ in range(1000):
        X = random_state("gcounter", rng)
        i = rng.choice(REPLICAS)
        bad += gc_inc_full(i, X) != to_full_mutator(lambda Y, i=i: gc_inc_delta(i, Y))(X)
    verdict(2, bad == 0, f"1000 states, {bad} mismatches")


def test_03_delta_group_equivalence():
    rng = random.Random(3)
    bad = 0
    for n in range(1000):
        name = DATATYPE_NAMES[n % len(DATATYPE_NAMES)]
        X = X0 = random_state(name, rng)
        replica = rng.choice(REPLICAS)
        group = get_datatype(name).bottom()
        for _ in range(rng.randint(0, 20)):
            d = random_mutator(name, rng, replica)(X)
            X = X.join(d)
            group = group.join(d)
        bad += X0.join(group) != X
    verdict(3, bad == 0, f"1000 sequences, {bad} mismatches")


@pytest.fixture(scope="module")
def convergence_runs():
    """Every run of the convergence grid, with invariant checks on causal runs."""
    start = time.perf_counter()
    failures, violations, causal_checks = [], [], 0
    for name in DATATYPE_NAMES:
        dt = get_datatype(name)
        for seed in range(20):
            sc = generate_scenario(name, replicas=5, ops=200, seed=seed, drop=0.3, dup=0.2, delay_max=10)
            for algorithm in Algorithm:
                observer = CausalInvariantObserver() if algorithm is Algorithm.CAUSAL else None
                try:
                    res = Simulation(sc, dt, algorithm, observer=observer).run()
                except InvariantViolation as exc:
                    violations.append(f"{name}/{algorithm.value}/s{seed}: {exc}")
                    continue
                if observer is not None:
                    causal_checks += observer.checks
                if not res.converged:
                    failures.append(f"{name}/{algorithm.value}/s{seed}")
    return failures, violations, causal_checks, time.perf_counter() - start


def test_04_convergence(convergence_runs):
    failures, violations, _, elapsed = convergence_runs
    runs = len(DATATYPE_NAMES) * len(Algorithm) * 20
    ok = not failures and not violations and elapsed < 120
    verdict(4, ok, f"{runs} runs, {len(failures)} not converged, {elapsed:.1f}s (budget 120s)" + (f" e.g. {failures[:3]}" if failures else ""))


def test_05_correspondence():
    failed = []
    for name in DATATYPE_NAMES:
        for seed in range(100):
            sc = generate_scenario(name, replicas=4, ops=50, seed=seed, drop=0.3, crash=seed < 20)
            v = check_correspondence(sc, name)
            if not v.passed:
                failed.append(f"{name}/s{seed}: {v.failure}")
    caught = 0
    for seed in range(100):
        sc = generate_scenario("aworset", replicas=4, ops=50, seed=seed, drop=0.3, crash=seed < 20)
        caught += not check_correspondence(sc, "aworset", node_factory=SkipFirstDelta).passed
    ok = not failed and caught >= 1
    verdict(5, ok, f"400 runs (80 with a crash), {len(failed)} failures; broken shipper caught on {caught}/100 seeds")


def test_06_interleavings():
    results, lines = {}, []
    ok = True
    for name in ("aworset", "aworset-tomb", "mvreg"):
        v = enumerate_interleavings(name)
        results[name] = v.results
        ok &= v.passed
        lines.append(f"{name} {v.scenarios} scripts/{v.terminals} schedules{'' if v.passed else ' ' + v.failure}")
    agree = results["aworset"] == results["aworset-tomb"]
    verdict(6, ok and agree, "; ".join(lines) + f"; set variants agree: {agree}")


def test_07_counter_messages():
    r = measure_counter(replicas=10)
    ok = set(r.delta_entries) == {1} and r.max_full_entries == 10 and r.steady_ratio == Fraction(1, 10)
    verdict(7, ok, f"delta entries {sorted(set(r.delta_entries))}, full up to {r.max_full_entries}, ratio {r.steady_ratio}")


def test_08_set_messages():
    r = measure_set(resident=100, ops_per_period=5)
    ok = r.resident == 100 and r.ratio < Fraction(1, 4)
    verdict(8, ok, f"mean delta {float(r.mean_delta_bytes):.1f}B vs state {r.full_state_bytes}B, ratio {float(r.ratio):.4f} (< 0.25)")


def test_09_register_growth():
    r = measure_register((2, 4, 8, 16))
    verdict(
        9,
        r.linear,
        f"max bytes {r.max_state_bytes}, linear residual {r.linear_max_residual:.3g}, "
        f"quadratic contribution {r.quadratic_contribution:.3g}",
    )


def test_10_context_compression(convergence_runs):
    _, violations, checks, _ = convergence_runs
    live, cloud, tomb = add_remove_cycles(100)
    ok = not violations and checks > 0 and live <= 1 and cloud == 0 and tomb == 100
    verdict(10, ok, f"{checks} post-join checks, {len(violations)} violations; 100 cycles: |s| {live} vs tombstone {tomb}")
