import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcbell.chshn import build
from mcbell.local import (
    BellFunctional,
    DeterministicStrategy,
    EnumerationCapError,
    best_response,
    evaluate,
    index_map,
    local_bound_exact,
    local_bound_heuristic,
    map_index,
    oracle_max_overlap,
    strategy_point,
)


def brute_force(C: BellFunctional):
    """Maximum over every (Alice map, Bob map) pair by direct evaluation."""
    best = -np.inf
    for a in itertools.product(range(C.o), repeat=C.m):
        for b in itertools.product(range(C.o), repeat=C.m):
            v = evaluate(C, strategy_point(DeterministicStrategy(a, b, C.o)))
            best = max(best, v)
    return best


def random_functional(rng, m, o, integer=True, marginals=False):
    draw = (lambda *s: rng.integers(-3, 4, size=s)) if integer else (lambda *s: rng.normal(size=s))
    joint = draw(o, o, m, m)
    if marginals:
        return BellFunctional(joint, draw(o, m), draw(o, m), float(rng.integers(-2, 3)))
    return BellFunctional(joint)


@pytest.mark.parametrize("m,o", [(2, 2), (2, 3), (3, 2), (3, 3)])
@pytest.mark.parametrize("integer", [True, False])
def test_exact_matches_brute_force(rng, m, o, integer):
    for _ in range(4):
        C = random_functional(rng, m, o, integer, marginals=True)
        value, s = local_bound_exact(C)
        assert value == pytest.approx(brute_force(C), abs=1e-9)
        # the returned strategy attains the value
        assert evaluate(C, strategy_point(s)) == pytest.approx(value, abs=1e-9)


def test_chsh_bounds():
    assert local_bound_exact(build(1))[0] == 3
    assert local_bound_exact(build(2))[0] == 10


def test_tie_break_smallest_alice_index():
    # the zero functional: every strategy is optimal
    C = BellFunctional(np.zeros((3, 3, 2, 2), dtype=int))
    value, s = local_bound_exact(C)
    assert value == 0 and s.alice == (0, 0) and s.bob == (0, 0)


def test_worker_count_does_not_change_result(rng):
    C = random_functional(rng, 4, 4)
    assert local_bound_exact(C, workers=1) == local_bound_exact(C, workers=3)


def test_cap():
    with pytest.raises(EnumerationCapError):
        local_bound_exact(build(2), cap=100)


@pytest.mark.parametrize("n", [1, 2])
def test_heuristic_below_exact_on_random_integer_functionals(n):
    rng = np.random.default_rng(n)
    d = 2**n
    for trial in range(50):
        C = random_functional(rng, d, d, marginals=bool(trial % 2))
        exact, _ = local_bound_exact(C)
        heur, s = local_bound_heuristic(C, restarts=20, seed=trial)
        assert heur <= exact
        assert evaluate(C, strategy_point(s)) == pytest.approx(heur)


def test_heuristic_finds_chsh2_bound():
    assert local_bound_heuristic(build(2), restarts=50)[0] == 10


def test_heuristic_is_seeded(rng):
    C = random_functional(rng, 4, 4, integer=False)
    a = local_bound_heuristic(C, restarts=30, seed=7)
    b = local_bound_heuristic(C, restarts=30, seed=7)
    assert a[0] == b[0] and a[1] == b[1]
    with pytest.raises(ValueError):
        local_bound_heuristic(C, restarts=0)


def test_best_response(rng):
    C = random_functional(rng, 3, 3, marginals=True)
    for alice in itertools.product(range(3), repeat=3):
        value, bob = best_response(C, alice)
        brute = max(
            evaluate(C, strategy_point(DeterministicStrategy(alice, b, 3)))
            for b in itertools.product(range(3), repeat=3)
        )
        assert value == pytest.approx(brute)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=5))
def test_map_index_roundtrip(resp):
    assert index_map(map_index(resp, 4), len(resp), 4) == tuple(resp)


def test_integer_flag():
    assert BellFunctional(np.ones((2, 2, 2, 2))).integer
    assert not BellFunctional(np.full((2, 2, 2, 2), 0.5)).integer
    assert not BellFunctional(np.ones((2, 2, 2, 2)), constant=0.5).integer


def test_evaluate_with_marginals(single, rng):
    C = random_functional(rng, 2, 2, integer=False, marginals=True)
    t = single.table
    explicit = sum(
        C.joint[a, b, x, y] * t[a, b, x, y] for a, b, x, y in itertools.product(range(2), repeat=4)
    )
    explicit += sum(C.marg_a[a, x] * t[a, :, x, 0].sum() for a in range(2) for x in range(2))
    explicit += sum(C.marg_b[b, y] * t[:, b, 0, y].sum() for b in range(2) for y in range(2))
    assert evaluate(C, single) == pytest.approx(explicit + C.constant)


def test_oracle_exact_and_heuristic_agree_on_small_instance(rng):
    C = random_functional(rng, 3, 3)
    s1, v1 = oracle_max_overlap(C, exact=True)
    s2, v2 = oracle_max_overlap(C, exact=False, restarts=200)
    assert v2 <= v1
    assert evaluate(C, strategy_point(s1)) == v1


def test_strategy_validation():
    with pytest.raises(ValueError):
        DeterministicStrategy((0, 3), (0, 0), 3)


def test_permute_outputs_preserves_bound(rng):
    C = random_functional(rng, 3, 3, marginals=True)
    P = C.permute_outputs([2, 0, 1], [1, 2, 0])
    assert local_bound_exact(P)[0] == local_bound_exact(C)[0]
