import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isac_rfid.bnb import (UnboundedMasterError, enumerate_binary_lp, solve_binary_lp,
                           tighten_row)
from isac_rfid.conic import Status


def test_single_optimality_cut_gives_all_ones():
    n = 5
    # omega >= -sum(y)  <=>  -sum(y) - omega <= 0
    res = solve_binary_lp(np.zeros(n), [1.0], -np.ones((1, n)), [[-1.0]], [0.0],
                          w_bounds=[(-n, None)])
    assert res.status is Status.OPTIMAL
    np.testing.assert_array_equal(res.y, np.ones(n))
    assert res.w[0] == pytest.approx(-n)


def test_no_optimality_cut_is_unbounded():
    with pytest.raises(UnboundedMasterError):
        solve_binary_lp(np.zeros(3), [1.0], np.zeros((1, 3)), [[0.0]], [1.0])


def test_infeasible_cut_system():
    # y1 + y2 >= 3 cannot hold for binaries
    res = solve_binary_lp([1.0, 1.0], [], [[-1.0, -1.0]], np.zeros((1, 0)), [-3.0])
    assert res.status is Status.INFEASIBLE


def random_master(rng, n, m):
    A_y = rng.integers(-3, 4, (m, n)).astype(float)
    A_w = -np.abs(rng.integers(0, 3, (m, 1))).astype(float)
    b = rng.integers(-2, 5, m).astype(float)
    # keep one optimality cut so the master is bounded
    A_y = np.vstack([A_y, -np.ones(n)])
    A_w = np.vstack([A_w, [[-1.0]]])
    b = np.append(b, 0.0)
    return rng.standard_normal(n), [1.0], A_y, A_w, b, [(-10.0 * n, None)]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_matches_enumeration(n, m, seed):
    args = random_master(np.random.default_rng(seed), n, m)
    bb, ex = solve_binary_lp(*args), enumerate_binary_lp(*args)
    assert bb.status is ex.status
    if ex.status is Status.OPTIMAL:
        assert bb.objective == pytest.approx(ex.objective, abs=1e-7)


def test_deterministic():
    args = random_master(np.random.default_rng(3), 10, 6)
    a, b = solve_binary_lp(*args), solve_binary_lp(*args)
    np.testing.assert_array_equal(a.y, b.y)
    assert a.objective == b.objective and a.nodes == b.nodes


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_tightening_keeps_binary_feasible_set(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(n) * 10 ** rng.uniform(0, 8, n)
    b = float(rng.standard_normal() * 5)
    e = -1.0
    lo, hi = -float(n), float(n)
    a2, b2 = tighten_row(a, e, b, lo, hi)
    for code in range(2 ** n):
        y = np.array([(code >> i) & 1 for i in range(n)], dtype=float)
        for w in np.linspace(lo, hi, 9):
            before = a @ y + e * w <= b + 1e-9 * (1 + abs(b))
            after = a2 @ y + e * w <= b2 + 1e-9 * (1 + abs(b2))
            assert before == after
