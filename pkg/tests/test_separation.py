import itertools
import math

import numpy as np
import pytest

from mcbell.chshn import build
from mcbell.correlations import tensor_power
from mcbell.efficiency import EfficiencyModel, Policy, assigned_point, deflate
from mcbell.local import BellFunctional, evaluate, local_bound_exact
from mcbell.separation import (
    RationalizationError,
    SeparationProblem,
    Status,
    rationalize,
    separate,
    separates,
    solve_lp,
    threshold_by_bisection,
)


def lp_by_vertices(c, A, b, lo, hi):
    """Maximum of c.z over {A z <= b, lo <= z <= hi} by enumerating basic solutions."""
    d = len(c)
    rows = [(A[i], b[i]) for i in range(len(b))]
    for j in range(d):
        e = np.eye(d)[j]
        rows += [(e, hi), (-e, -lo)]
    G = np.array([r[0] for r in rows])
    h = np.array([r[1] for r in rows])
    best = -math.inf
    for idx in itertools.combinations(range(len(rows)), d):
        M = G[list(idx)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        z = np.linalg.solve(M, h[list(idx)])
        if np.all(G @ z <= h + 1e-9):
            best = max(best, float(c @ z))
    return best


@pytest.mark.parametrize("seed", range(25))
def test_solve_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 4))
    k = int(rng.integers(1, 6))
    c = rng.normal(size=d)
    A = rng.normal(size=(k, d))
    b = rng.uniform(0.1, 2.0, size=k)  # z = 0 is feasible
    value, z = solve_lp(c, A, b, [(-2.0, 1.0)] * d)
    assert value == pytest.approx(lp_by_vertices(c, A, b, -2.0, 1.0), abs=1e-7)
    assert np.all(A @ z <= b + 1e-8)


def _point(single, eta, mode="sym", policy=Policy.LAST):
    model = EfficiencyModel.symmetric(eta, policy) if mode == "sym" else EfficiencyModel.asymmetric(eta, policy)
    return deflate(single, model)


@pytest.mark.parametrize("constraints", ["rowgen", "full"])
@pytest.mark.parametrize("representation", ["cg", "full"])
def test_single_copy_inside_and_outside(single, constraints, representation):
    # the single-copy threshold is 2(sqrt 2 - 1) = 0.8284
    out = separate(SeparationProblem(_point(single, 0.9), constraints, representation))
    assert out.status is Status.SEPARATED and out.objective > 1e-3
    inside = separate(SeparationProblem(_point(single, 0.8), constraints, representation))
    assert inside.status is Status.INSIDE


@pytest.mark.parametrize("homogeneous", [True, False])
def test_witness_is_a_valid_bell_inequality(single, homogeneous):
    target = _point(single, 0.9)
    res = separate(SeparationProblem(target, homogeneous=homogeneous))
    F = res.functional
    L, _ = local_bound_exact(F)
    assert L <= 1e-9
    assert evaluate(F, target) == pytest.approx(res.objective, abs=1e-9)


def test_rowgen_and_full_agree_on_two_copies(two_copies):
    target = deflate(two_copies, EfficiencyModel.symmetric(0.83))
    a = separate(SeparationProblem(target, "rowgen"))
    b = separate(SeparationProblem(target, "full"))
    assert a.objective == pytest.approx(b.objective, abs=1e-7)


@pytest.mark.parametrize("mode,expected", [("sym", 2 * (math.sqrt(2) - 1)), ("asym", 1 / math.sqrt(2))])
def test_single_copy_bisection(single, mode, expected):
    res = threshold_by_bisection(single, Policy.LAST, mode, width=1e-5)
    assert res.eta == pytest.approx(expected, abs=2e-5)
    assert res.eta >= expected - 1e-9  # the returned end is always on the separated side


def test_rationalize_keeps_direction():
    C = BellFunctional(np.array([0.5, -0.25, 1.0, 0.75] * 4).reshape(2, 2, 2, 2))
    R = rationalize(C)
    assert R.integer
    ratio = R.joint / C.joint
    assert np.allclose(ratio, ratio.flat[0]) and ratio.flat[0] > 0


def test_rationalize_rejects():
    C = BellFunctional(np.array([math.pi, 1.0] * 8).reshape(2, 2, 2, 2))
    with pytest.raises(RationalizationError):
        rationalize(C, max_denominator=10, check=lambda F: False)


def test_rationalized_lp_functional_separates(single):
    target = _point(single, 0.9)
    res = separate(SeparationProblem(target))
    F = rationalize(res.functional, check=lambda G: separates(G, target))
    assert F.integer and separates(F, target)


def test_chsh_is_not_separating_ideal_local_point():
    assert not separates(build(1), assigned_point(2, 2))


def test_full_enum_limit(single):
    target = deflate(tensor_power(single, 3), EfficiencyModel.symmetric(0.9))
    with pytest.raises(ValueError):
        separate(SeparationProblem(target, "full"))
