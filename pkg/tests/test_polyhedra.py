import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from pwa_certify.errors import UnboundedInitialSet
from pwa_certify.polyhedra import (
    coordinate_range,
    guards_disjoint,
    initial_cells,
    is_nonempty,
    max_sq_norm_box,
    vertices,
    x0_coordinate_bounds,
)
from pwa_certify.system import Polyhedron, make_system


def slack_oracle(Ts, cs, Tw, cw, d):
    """Nonempty iff max t s.t. Ts x + t <= cs, Tw x <= cw, t <= 1 is feasible with t > 0.

    A different LP from the alternative system used in the package.
    """
    A, b = [], []
    for t, c in zip(Ts, cs):
        A.append([*t, 1.0])
        b.append(c)
    for t, c in zip(Tw, cw):
        A.append([*t, 0.0])
        b.append(c)
    A.append([0.0] * d + [1.0])
    b.append(1.0)
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    res = linprog(cost, A_ub=np.array(A), b_ub=np.array(b),
                  bounds=[(None, None)] * (d + 1), method="highs")
    if res.status == 2:
        return False
    assert res.status == 0
    return -res.fun > 1e-9 if len(cs) else True


small = st.integers(-3, 3).map(float)


@st.composite
def blocks(draw):
    d = draw(st.integers(1, 3))
    ns, nw = draw(st.integers(0, 4)), draw(st.integers(0, 4))
    Ts = np.array([[draw(small) for _ in range(d)] for _ in range(ns)]).reshape(ns, d)
    Tw = np.array([[draw(small) for _ in range(d)] for _ in range(nw)]).reshape(nw, d)
    cs = np.array([draw(small) for _ in range(ns)])
    cw = np.array([draw(small) for _ in range(nw)])
    return d, Ts, cs, Tw, cw


@settings(max_examples=150, deadline=None)
@given(blocks())
def test_emptiness_agrees_with_slack_lp(case):
    d, Ts, cs, Tw, cw = case
    got = is_nonempty(d, [(Ts, cs)], [(Tw, cw)])
    assert got == slack_oracle(Ts, cs, Tw, cw, d)


def test_strictness_matters():
    # x < 0 and x >= 0 is empty; x <= 0 and x >= 0 is the point 0
    assert not is_nonempty(1, [(np.array([[1.0]]), np.array([0.0]))],
                           [(np.array([[-1.0]]), np.array([0.0]))])
    assert is_nonempty(1, [], [(np.array([[1.0], [-1.0]]), np.array([0.0, 0.0]))])
    # 0 < 0 with no variables involved
    assert not is_nonempty(2, [(np.zeros((1, 2)), np.array([0.0]))], [])


def test_quadrants_switch_pattern(ex1):
    S = [[1, 0, 1, 1], [1, 0, 0, 1], [0, 1, 1, 0], [1, 1, 0, 0]]
    assert ex1.sw.matrix(4) == S
    assert ex1.sw.in_set == frozenset({1, 2, 3, 4})


def test_affine2_switches(ex2):
    assert ex2.sw.sw_bar == frozenset({(1, 1), (1, 2), (2, 1), (2, 2)})
    assert ex2.sw.in_set == frozenset({2})
    assert initial_cells(ex2.sys) == frozenset({2})


def test_x0_bounds(ex1, ex2):
    assert ex1.x0b.coords == (1.0, 1.0)
    assert ex2.x0b.coords == (9.0, 4.0)
    np.testing.assert_array_equal(ex2.x0b.with_level(3.5).vector(), [9.0, 4.0, 3.5])
    with pytest.raises(ValueError):
        ex2.x0b.vector()
    assert max_sq_norm_box(ex2.sys.initial) == 13.0


def test_guards_disjoint(ex1, ex2):
    assert all(guards_disjoint(ex1.sys).values())
    assert guards_disjoint(ex2.sys) == {(1, 2): True}


def test_coordinate_range_and_unbounded():
    tri = Polyhedron.from_arrays([[-1, 0], [0, -1], [1, 1]], [0, 0, 2])
    assert coordinate_range(tri, 0) == (0.0, 2.0)
    half = Polyhedron.from_arrays([[1, 0]], [1])
    s = make_system(half, [("all", Polyhedron(2), np.eye(2) * 0.5, np.zeros(2))])
    with pytest.raises(UnboundedInitialSet):
        x0_coordinate_bounds(s)


def test_vertices_of_triangle():
    V = vertices(np.array([[-1, 0], [0, -1], [1, 1]]), np.array([0, 0, 2]))
    got = sorted(map(tuple, np.round(V, 12)))
    assert got == [(0.0, 0.0), (0.0, 2.0), (2.0, 0.0)]
    assert vertices(np.array([[1.0, 0.0]]), np.array([1.0])).shape == (0, 2)
