import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pwa_certify.lifting import (
    QuadForm,
    conjugate,
    coordinate_square,
    corner,
    hom,
    homogeneous_map,
    lift,
    lift_quadform,
    pair_polyhedron,
)
from pwa_certify.synthesis import successor_rows
from pwa_certify.system import AffineMap

D = 3
fl = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec = arrays(float, D, elements=fl)
mat = arrays(float, (D, D), elements=fl)


def one(x):
    return np.concatenate([[1.0], x])


@settings(max_examples=100)
@given(mat, vec, fl, vec)
def test_lift_evaluates_quadratic(A, b, c, x):
    z = one(x)
    want = x @ A @ x + b @ x + c
    assert np.isclose(z @ lift(A, b, c) @ z, want, rtol=1e-9, atol=1e-7)
    assert np.isclose(QuadForm(A, b, c)(x), want, rtol=1e-9, atol=1e-7)
    M = lift_quadform(QuadForm(A, b, c))
    np.testing.assert_allclose(M, M.T)


@settings(max_examples=100)
@given(mat, vec, vec)
def test_homogeneous_map_and_conjugate(A, b, x):
    f = AffineMap(A, b)
    np.testing.assert_allclose(homogeneous_map(f) @ one(x), one(f(x)), rtol=1e-12, atol=1e-9)
    Q = np.eye(D)
    y = f(x)
    assert np.isclose(one(x) @ conjugate(lift(Q, np.zeros(D), 0.0), f) @ one(x), y @ y,
                      rtol=1e-9, atol=1e-6)


@settings(max_examples=100)
@given(arrays(float, (4, D), elements=fl), arrays(float, 4, elements=fl), vec)
def test_hom_rows_are_slacks(P, c, x):
    E = hom(P, c)
    v = E @ one(x)
    assert v[0] == 1.0
    np.testing.assert_allclose(v[1:], c - P @ x, rtol=1e-12, atol=1e-9)
    inside = bool(np.all(P @ x <= c))
    assert inside == bool(np.all(v >= 0))


def test_templates():
    x = np.array([2.0, -3.0])
    z = one(x)
    assert z @ coordinate_square(2, 1) @ z == 9.0
    assert z @ corner(2) @ z == 1.0


def test_pair_polyhedron_matches_dynamics(ex2):
    rng = np.random.default_rng(5)
    X = rng.uniform(-8, 8, size=(2000, 2))
    for (i, j) in sorted(ex2.sw.sw_bar):
        T, c = pair_polyhedron(ex2.sys, i, j)
        f = ex2.sys.dynamics(i)
        Y = X @ f.A.T + f.b
        want = ex2.sys.guard(i).closure_mask(X) & ex2.sys.guard(j).closure_mask(Y)
        np.testing.assert_array_equal(np.all(X @ T.T <= c, axis=1), want)


def test_successor_row_selector(ex1, ex2):
    for fx in (ex1, ex2):
        L = fx.lifted
        for (i, j), E in L.E_pair.items():
            S = successor_rows(L, i, j)
            np.testing.assert_allclose(L.E[j] @ L.F[i], S @ E, atol=1e-12)
