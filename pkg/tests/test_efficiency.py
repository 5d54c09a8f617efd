import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcbell.correlations import SignalingError, check_behavior, marginals
from mcbell.efficiency import (
    CollinsGisinPoint,
    EfficiencyModel,
    Policy,
    assigned_point,
    cg_index,
    collins_gisin_to_table,
    deflate,
    from_collins_gisin,
    to_collins_gisin,
)


def _deflate_by_events(table, ea, eb, policy):
    """Sum over the four click events explicitly."""
    o, m = table.shape[0], table.shape[2]
    size = o + 1 if policy is Policy.EXTRA else o
    silent = o if policy is Policy.EXTRA else o - 1
    out = np.zeros((size, size, m, m))
    for x, y in itertools.product(range(m), repeat=2):
        for a, b in itertools.product(range(o), repeat=2):
            p = table[a, b, x, y]
            out[a, b, x, y] += ea * eb * p
            out[a, silent, x, y] += ea * (1 - eb) * p
            out[silent, b, x, y] += (1 - ea) * eb * p
            out[silent, silent, x, y] += (1 - ea) * (1 - eb) * p
    return out


@pytest.mark.parametrize("policy", list(Policy))
@pytest.mark.parametrize("ea,eb", [(0.9, 0.9), (0.6, 1.0), (0.3, 0.7)])
def test_deflate_matches_event_sum(two_copies, policy, ea, eb):
    point = deflate(two_copies, EfficiencyModel(ea, eb, policy))
    assert np.allclose(point.table, _deflate_by_events(two_copies.table, ea, eb, policy), atol=1e-15)


def test_deflate_limits(two_copies):
    assert np.allclose(deflate(two_copies, EfficiencyModel.symmetric(1.0)).table, two_copies.table)
    assert np.allclose(deflate(two_copies, EfficiencyModel.symmetric(0.0)).table, assigned_point(4, 4))
    extra = deflate(two_copies, EfficiencyModel.symmetric(0.0, Policy.EXTRA))
    assert extra.o == 5 and extra.table[4, 4].min() == 1.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.sampled_from(list(Policy)))
def test_deflated_points_are_behaviors(single, ea, eb, policy):
    point = deflate(single, EfficiencyModel(ea, eb, policy))
    check_behavior(point.table, 1e-12)


def test_model_validation():
    with pytest.raises(ValueError):
        EfficiencyModel(1.2, 0.5)
    assert EfficiencyModel.asymmetric(0.5).eta_b == 1.0
    assert Policy.parse("extra-outcome") is Policy.EXTRA
    with pytest.raises(ValueError):
        Policy.parse("drop")


def test_cg_layout(single):
    cg = to_collins_gisin(single)
    assert cg.matrix.shape == (3, 3)
    pa, pb = marginals(single)
    assert cg.matrix[0, 0] == 1.0
    assert cg.matrix[cg_index(0, 1, 2), 0] == pa[0, 1]
    assert cg.matrix[cg_index(0, 1, 2), cg_index(0, 0, 2)] == single.table[0, 0, 1, 0]


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.sampled_from(list(Policy)))
def test_cg_roundtrip(two_copies, ea, eb, policy):
    point = deflate(two_copies, EfficiencyModel(ea, eb, policy))
    cg = to_collins_gisin(point)
    size = point.m * (point.o - 1) + 1
    assert cg.matrix.shape == (size, size)
    assert np.allclose(from_collins_gisin(cg).table, point.table, atol=1e-12)


def test_cg_dimensions(two_copies):
    assert to_collins_gisin(two_copies).matrix.shape == (13, 13)
    extra = deflate(two_copies, EfficiencyModel.symmetric(0.8, Policy.EXTRA))
    assert to_collins_gisin(extra).matrix.shape == (17, 17)


def test_cg_save_load(tmp_path, two_copies):
    cg = to_collins_gisin(deflate(two_copies, EfficiencyModel.symmetric(0.8)))
    cg.save(tmp_path / "cg.txt")
    back = CollinsGisinPoint.load(tmp_path / "cg.txt")
    assert back.m == 4 and back.o == 4 and back.policy is Policy.LAST
    assert np.array_equal(back.matrix, cg.matrix)


def test_cg_invalid(single):
    cg = to_collins_gisin(single)
    bad = CollinsGisinPoint(cg.matrix * 1.5, 2, 2)
    with pytest.raises(SignalingError):
        from_collins_gisin(bad)
    with pytest.raises(ValueError):
        from_collins_gisin(cg, m=3)
    with pytest.raises(ValueError):
        CollinsGisinPoint(np.zeros((4, 4)), 2, 2)


def test_cg_table_inverse_on_random_ns_points(rng):
    # local points are no-signaling; build random mixtures and round-trip them
    from mcbell.local import DeterministicStrategy, strategy_point

    o, m = 3, 3
    mix = np.zeros((o, o, m, m))
    weights = rng.dirichlet(np.ones(10))
    for w in weights:
        s = DeterministicStrategy(rng.integers(0, o, m), rng.integers(0, o, m), o)
        mix += w * strategy_point(s)
    assert np.allclose(collins_gisin_to_table(to_collins_gisin(mix)), mix, atol=1e-14)
