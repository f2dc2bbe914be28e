"""Acceptance criteria, one test each, at their stated tolerances.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from conftest import GENERATORS, random_trajectory

from geoqsl import bounds, dynamics, harness, linalg, metric
from geoqsl.dynamics import Schedule
from geoqsl.metric import AlternativeFunction

SEED = 0


def random_f(gen: np.random.Generator, n: int, states) -> AlternativeFunction:
    """A random valid alternative function for the given state set."""
    kind = int(gen.integers(0, 5))
    pmax = float(np.max(metric.purity(states)))
    if kind == 0:
        return AlternativeFunction.constant(float(gen.uniform(1.0, 3.0)))
    if kind == 1:
        return AlternativeFunction.purity_plus_inv_n()
    if kind == 2:
        return AlternativeFunction.frozen_max_purity(pmax + float(gen.uniform(0.0, 0.5)))
    if kind == 3:
        a = float(gen.uniform(0.2, 0.9))
        return AlternativeFunction.custom(lambda x: x**a, lambda x: a * x ** (a - 1), name=f"x^{a:.3f}")
    c = float(gen.uniform(0.01, 1.0))
    return AlternativeFunction.custom(lambda x: x + c, lambda x: np.ones_like(x), name=f"x+{c:.3f}")


def test_criterion_1_metric_axioms(criterion):
    start = time.perf_counter()
    rep = harness.verify_metric(seed=SEED, trials=10_000, dims=(2, 3, 4), fd_probes=20)
    elapsed = time.perf_counter() - start
    wanted = {"triangle inequality", "symmetry", "identity of indiscernibles"}
    suites = {s.name: s for s in rep.suites if s.name in wanted}
    ok = all(s.passed for s in suites.values()) and elapsed < 30.0
    detail = ", ".join(f"{s.name} {s.violations}/{s.checks}" for s in suites.values()) + f", {elapsed:.1f}s"
    assert criterion(1, "metric axioms on 1e4 triples per N and f-kind", ok, detail)


def test_criterion_2_embedding_invariants(criterion):
    gen = linalg.RngStream(SEED, 2).generator()
    worst_norm = worst_lat = 0.0
    pairs = 0
    for n in (2, 3, 4):
        rhos = linalg.random_densities(n, 10_000, gen)
        for chunk in np.array_split(rhos, 50):
            f = random_f(gen, n, chunk)
            emb = metric.embed_many(chunk, f)
            worst_norm = max(worst_norm, float(np.max(np.abs(linalg.hs_inner(emb, emb) - 1.0))))
            lat = np.trace(emb, axis1=1, axis2=2).real / n
            closed = metric.latitude_closed_form(metric.purity(chunk), f, n)
            worst_lat = max(worst_lat, float(np.max(np.abs(lat - closed))))
            pairs += len(chunk)
    ok = worst_norm <= 1e-10 and worst_lat <= 1e-10
    assert criterion(2, "unit norm and latitude of the embedding", ok,
                     f"{pairs} pairs, norm err {worst_norm:.2e}, latitude err {worst_lat:.2e}")


def test_criterion_3_speed_distance_consistency(criterion):
    res = harness.verify_speed_consistency(seed=SEED, probes=20, min_ratio=3.5)
    assert criterion(3, "residual shrink factor when h halves", res.passed,
                     f"{res.checks} probes, smallest ratio {res.worst:.3f} (need >= 3.5)")


def test_criterion_4_oracle_equivalence(criterion):
    gen = linalg.RngStream(SEED, 4).generator()
    worst = {"const": 0.0, "f2": 0.0, "f3": 0.0, "limit": 0.0}
    for kind in GENERATORS:
        for _ in range(10):
            traj = random_trajectory(kind, gen)
            pmax, _ = bounds.max_purity(traj)
            a2 = float(gen.uniform(pmax, 3.0))
            worst["const"] = max(worst["const"], abs(
                bounds.tau_general(traj, AlternativeFunction.constant(a2)) - bounds.tau_const_alpha(traj, a2)))
            worst["f2"] = max(worst["f2"], abs(
                bounds.tau_general(traj, AlternativeFunction.purity_plus_inv_n()) - bounds.tau_f2(traj)))
            worst["f3"] = max(worst["f3"], abs(
                bounds.tau_general(traj, AlternativeFunction.frozen_max_purity(pmax)) - bounds.tau_f3(traj)))
            t1 = bounds.tau_f1(traj)
            worst["limit"] = max(worst["limit"], abs(bounds.tau_const_alpha(traj, 1e6) - t1) / max(t1, 1e-300))
    ok = worst["const"] <= 1e-10 and worst["f2"] <= 1e-8 and worst["f3"] <= 1e-8 and worst["limit"] <= 1e-3
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    assert criterion(4, "general bound reproduces the specialised ones", ok, detail)


def test_criterion_5_bound_validity(criterion):
    gen = linalg.RngStream(SEED, 5).generator()
    worst = -math.inf
    count = 0
    for kind in GENERATORS:
        for _ in range(1000):
            traj = random_trajectory(kind, gen)
            t1, t2, t3 = bounds.tau_f1(traj), bounds.tau_f2(traj), bounds.tau_f3(traj)
            tc, _ = bounds.tau_combined(traj)
            worst = max(worst, max(t1, t2, t3, tc) / traj.tau - 1.0)
            count += 1
    ok = worst <= 1e-6
    assert criterion(5, "every bound <= tau(1 + 1e-6)", ok, f"{count} trajectories, max excess {worst:.2e}")


def test_criterion_6_depolarizing_saturation(criterion):
    gen = linalg.RngStream(SEED, 6).generator()
    lo, hi, worst_len = math.inf, -math.inf, 0.0
    for n in (2, 3, 4):
        for _ in range(20):
            rho0 = linalg.random_density(n, gen)
            tau = float(gen.uniform(0.5, 2.0))
            traj = dynamics.depolarize(rho0, Schedule.linear(tau, 1.0, 0.0), tau)
            r = bounds.tau_f3(traj) / tau
            lo, hi = min(lo, r), max(hi, r)
            end = float(gen.uniform(0.0, 1.0))
            part = dynamics.depolarize(rho0, Schedule.linear(tau, 1.0, end), tau)
            f = AlternativeFunction.frozen_max_purity(metric.purity(rho0))
            worst_len = max(worst_len, abs(bounds.integrate_speed(part, f) - math.acos(end)))
    ok = lo >= 0.999 and hi <= 1 + 1e-6 and worst_len <= 1e-6
    assert criterion(6, "depolarizing saturation and closed-form path length", ok,
                     f"ratio in [{lo:.12f}, {hi:.12f}], path length err {worst_len:.2e}")


def test_criterion_7_unitary_saturation(criterion):
    gen = linalg.RngStream(SEED, 7).generator()
    worst_sat = worst_agree = 0.0
    for _ in range(100):
        lam = float(gen.uniform(0.5, 1.0))
        if abs(lam - 0.5) < 1e-3:
            lam += 0.01
        traj = dynamics.qubit_mixture_unitary(lam, float(gen.uniform(0, 2 * math.pi)), float(gen.uniform(0.05, math.pi / 2)))
        tu = bounds.tau_uni_p0(traj)
        worst_sat = max(worst_sat, abs(tu / traj.tau - 1.0))
        worst_agree = max(worst_agree, abs(bounds.tau_f3(traj) - tu))
    ok = worst_sat <= 1e-3 and worst_agree <= 1e-6
    assert criterion(7, "qubit unitary saturation", ok,
                     f"max |ratio - 1| {worst_sat:.2e}, max |tauF3 - tauUniP0| {worst_agree:.2e}")


@pytest.fixture(scope="module")
def fig_run():
    cfg = harness.ExperimentConfig(samples=1000, seed=SEED, tau=1.0)
    start = time.perf_counter()
    records, summary = harness.run_random_experiment(cfg)
    return cfg, records, summary, time.perf_counter() - start


def test_criterion_8_label_fractions(criterion, fig_run):
    _, _, summary, elapsed = fig_run
    fr = summary.fractions
    ok = (
        0.50 <= fr["F3"] <= 0.85
        and 0.10 <= fr["F2"] <= 0.45
        and 0.00 <= fr["F1"] <= 0.10
        and fr["F3"] > fr["F2"] > fr["F1"]
        and elapsed < 60.0
    )
    detail = f"F1={fr['F1']:.3f} F2={fr['F2']:.3f} F3={fr['F3']:.3f}, {elapsed:.1f}s single-threaded"
    assert criterion(8, "label fractions of the random composite-qubit experiment", ok, detail)


def test_criterion_9_determinism(criterion, fig_run):
    cfg, records, _, _ = fig_run
    first = harness.records_csv(records).encode()
    again, _ = harness.run_random_experiment(cfg)
    second = harness.records_csv(again).encode()
    ok = first == second
    assert criterion(9, "same seed gives byte-identical CSV", ok, f"{len(first)} bytes")
