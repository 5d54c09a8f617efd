"""Acceptance criteria; each test records one PASS/FAIL line for the terminal summary."""

import math
import time

import numpy as np
import pytest

from mcbell import blockfile, chshn
from mcbell.correlations import check_behavior, chsh_optimal_single_copy, tensor_power
from mcbell.efficiency import EfficiencyModel, Policy, deflate, from_collins_gisin, to_collins_gisin
from mcbell.gilbert import GilbertConfig, gilbert_distance, symmetrize
from mcbell.local import BellFunctional, evaluate, local_bound_exact, local_bound_heuristic
from mcbell.reproduce import reproduce
from mcbell.separation import SeparationProblem, Status, separate
from mcbell.thresholds import profile
from conftest import ACCEPTANCE, DATA

SQ2 = math.sqrt(2)


def record(label, ok, detail):
    ACCEPTANCE.append((label, bool(ok), detail))
    assert ok, f"{label}: {detail}"


def summarize(report):
    return "; ".join(f"{c['name']}={c['value']}" for c in report["checks"])


def test_criterion_1_chsh_closed_forms():
    t = time.perf_counter()
    report = reproduce("chsh")
    elapsed = time.perf_counter() - t
    record("criterion 1: CHSH closed forms", report["ok"] and elapsed < 1, f"{summarize(report)}; {elapsed:.2f}s")


@pytest.mark.slow
def test_criterion_2_iterated_local_bounds():
    t = time.perf_counter()
    small = [local_bound_exact(chshn.build(n))[0] for n in (1, 2)]
    t_small = time.perf_counter() - t
    t = time.perf_counter()
    L3, _ = local_bound_exact(chshn.build(3))
    t3 = time.perf_counter() - t
    ok = small == [3, 10] and t_small < 1 and L3 == 31 and t3 < 600
    record("criterion 2: iterated local bounds", ok, f"L1,L2={small} in {t_small:.2f}s; L3={L3} in {t3:.1f}s")


def test_criterion_3_quantum_values():
    errs = []
    for n in range(1, 5):
        value = evaluate(chshn.build(n), tensor_power(chsh_optimal_single_copy(), n))
        errs.append(abs(value - (2 + SQ2) ** n))
    record("criterion 3: quantum values n=1..4", max(errs) <= 1e-9, f"max error {max(errs):.1e}")


def test_criterion_4_table1():
    report = reproduce("table1")
    misses = [c["name"] for c in report["checks"] if not c["pass"]]
    detail = f"{len(report['checks'])} cells checked, excluded n={report['excluded']}, misses {misses or 'none'}"
    record("criterion 4: CHSH_n threshold table", report["ok"], detail)


@pytest.mark.slow
def test_criterion_5_lp_symmetric():
    report = reproduce("lp-n2-sym")
    two = tensor_power(chsh_optimal_single_copy(), 2)
    t = time.perf_counter()
    full = separate(SeparationProblem(deflate(two, EfficiencyModel.symmetric(0.81)), "full"))
    elapsed = time.perf_counter() - t
    rowgen = separate(SeparationProblem(deflate(two, EfficiencyModel.symmetric(0.81)), "rowgen"))
    agree = full.status is rowgen.status is Status.SEPARATED and abs(full.objective - rowgen.objective) < 1e-7
    ok = report["ok"] and elapsed < 300 and agree
    record("criterion 5: LP n=2 symmetric", ok, f"{summarize(report)}; full enumeration {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_6_lp_asymmetric():
    report = reproduce("lp-n2-asym")
    record("criterion 6: LP n=2 asymmetric", report["ok"], summarize(report))


@pytest.mark.slow
def test_criterion_7_lp_extra_outcome():
    report = reproduce("lp-n2-extra")
    record("criterion 7: LP n=2 extra outcome", report["ok"], summarize(report))


def test_criterion_8_reference_matrix():
    C = blockfile.load(DATA / "csym_n2.txt")
    rep = profile(C, tensor_power(chsh_optimal_single_copy(), 2), Policy.LAST)
    ok = (
        abs(rep.Q - 4 * (SQ2 - 1)) <= 1e-12
        and rep.M_A == rep.M_B == -3.5
        and rep.L == 0
        and rep.L_provenance == "exact"
        and rep.X == 0
    )
    record("criterion 8: reference matrix cross-check", ok, f"Q={rep.Q:.12f} M_A={rep.M_A} M_B={rep.M_B} L={rep.L} X={rep.X}")


@pytest.mark.slow
def test_criterion_9_gilbert_n2():
    report = reproduce("gilbert-n2")
    record("criterion 9: Gilbert n=2", report["ok"], f"{summarize(report)}; {report['iterations']} iterations")


@pytest.mark.slow
def test_criterion_10_gilbert_n3():
    report = reproduce("gilbert-n3")
    record("criterion 10a: Gilbert n=3", report["ok"], f"{summarize(report)}; distance {report['distance']:.4g}")


@pytest.mark.slow
def test_criterion_10_gilbert_n4_properties():
    report = reproduce("gilbert-n4")
    record("criterion 10b: Gilbert n=4 properties", report["ok"], summarize(report))


def test_criterion_11_property_suites():
    results = {}
    single = chsh_optimal_single_copy()

    ok = True
    for n in (1, 2, 3):
        dist = tensor_power(single, n)
        try:
            check_behavior(dist.table, 1e-12)
            check_behavior(deflate(dist, EfficiencyModel.symmetric(0.7)).table, 1e-12)
        except ValueError:
            ok = False
    results["distribution invariants"] = ok

    point = deflate(tensor_power(single, 2), EfficiencyModel.symmetric(0.8))
    back = from_collins_gisin(to_collins_gisin(point))
    results["CG roundtrip"] = bool(np.allclose(back.table, point.table, atol=1e-12))

    cfg = GilbertConfig(memory=20, max_iterations=30, symmetrize=True, party_exchange=True)
    w, _ = gilbert_distance(deflate(tensor_power(single, 2), EfficiencyModel.symmetric(0.85)), cfg, n=2)
    C = w.direction
    results["symmetrization"] = bool(
        np.allclose(symmetrize(symmetrize(C, 2, True), 2, True), symmetrize(C, 2, True))
        and np.allclose(symmetrize(C, 2, True), C, atol=1e-12)
    )

    ok = True
    for n in (1, 2):
        rng = np.random.default_rng(100 + n)
        for trial in range(50):
            F = BellFunctional(rng.integers(-3, 4, size=(2**n,) * 4))
            ok &= local_bound_heuristic(F, restarts=10, seed=trial)[0] <= local_bound_exact(F)[0]
    results["heuristic <= exact"] = bool(ok)

    agree = []
    for eta in (0.75, 2 * (SQ2 - 1) - 0.01, 2 * (SQ2 - 1) + 0.01, 0.9):
        target = deflate(single, EfficiencyModel.symmetric(eta))
        lp = separate(SeparationProblem(target)).status is Status.SEPARATED
        gw, _ = gilbert_distance(target, GilbertConfig(epsilon=1e-7, max_iterations=20000))
        agree.append(lp == gw.separated)
    results["LP vs Gilbert n=1"] = all(agree)

    failed = [k for k, v in results.items() if not v]
    record("criterion 11: property suites", not failed, f"{len(results)} suites, failed {failed or 'none'}")
