import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pwa_certify import conic
from pwa_certify.conic import AffineSym, ConicBuilder, Status


def sym(n):
    return arrays(float, (n, n), elements=st.floats(-5, 5, allow_nan=False)).map(
        lambda M: (M + M.T) / 2)


@settings(max_examples=60)
@given(st.integers(1, 5).flatmap(lambda n: st.tuples(sym(n), sym(n))))
def test_svec_round_trip_and_inner_product(pair):
    A, B = pair
    np.testing.assert_allclose(conic.smat(conic.svec(A)), A, atol=1e-12)
    assert np.isclose(conic.svec(A) @ conic.svec(B), np.trace(A @ B), atol=1e-9)


def test_psd_check_examples():
    assert conic.psd_check(np.diag([1.0, 0.0]))
    assert not conic.psd_check(np.diag([1.0, -1e-3]))
    assert conic.psd_check(np.diag([1.0, -1e-7]), tol=1e-6)
    assert conic.psd_check(np.zeros((0, 0)))
    assert conic.psd_check(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert not conic.psd_check(np.array([[1.0, 2.0], [2.0, 1.0]]))


@settings(max_examples=40)
@given(st.integers(1, 4).flatmap(sym))
def test_project_psd_is_psd_and_idempotent(M):
    P = conic.project_psd(M)
    assert conic.min_eig(P) >= -1e-9
    np.testing.assert_allclose(conic.project_psd(P), P, atol=1e-9)


def _lp(rhs, sense=1.0):
    b = ConicBuilder()
    x = b.scalar("x")
    b.add_linear([{x: -1.0}], [rhs], "leq")   # x >= -rhs
    b.minimize({x: sense})
    return b.build()


def test_lp_outcomes():
    sol = conic.solve(_lp(-1.0))
    assert sol.status is Status.OPTIMAL and sol.x[0] == pytest.approx(1.0, abs=1e-12)
    assert conic.solve(_lp(-1.0, sense=-1.0)).status is Status.UNBOUNDED
    b = ConicBuilder()
    x = b.scalar("x", nonneg=True)
    b.add_linear([{x: 1.0}], [-1.0], "leq")
    b.minimize({x: 1.0})
    assert conic.solve(b.build()).status is Status.INFEASIBLE


def _lambda_max_sdp(M):
    n = len(M)
    b = ConicBuilder()
    t = b.scalar("t")
    b.add_psd(AffineSym(-M, {t: np.eye(n)}))   # t I - M >= 0
    b.minimize({t: 1.0})
    return conic.solve(b.build())


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4).flatmap(sym))
def test_sdp_lambda_max_matches_eigvalsh(M):
    sol = _lambda_max_sdp(M)
    assert sol.optimal
    assert sol.objective == pytest.approx(np.linalg.eigvalsh(M)[-1], abs=1e-6)


def test_sdp_infeasible_and_unbounded():
    # X psd with X[0,0] = -1
    b = ConicBuilder()
    X = b.symmetric("X", 2, "psd")
    b.add_linear([{X.index[0]: 1.0}], [-1.0], "eq")
    b.minimize({})
    assert conic.solve(b.build()).status is Status.INFEASIBLE
    # minimize -X[0,0] over psd X
    b = ConicBuilder()
    X = b.symmetric("X", 2, "psd")
    b.minimize({X.index[0]: -1.0})
    assert conic.solve(b.build()).status is Status.UNBOUNDED


def test_symvar_layout():
    b = ConicBuilder()
    X = b.symmetric("X", 3)
    x = np.arange(6, dtype=float)
    V = X.value(x)
    np.testing.assert_array_equal(V, V.T)
    assert [V[r, c] for r, c in conic.tri_indices(3)] == list(x)
    with pytest.raises(ValueError):
        b.symmetric("Y", 2, "weird")


def test_residual_scale_and_violation():
    p = _lp(-1.0)
    assert p.residual_scale(np.array([3.0])) == 4.0
    assert p.cone_violation(np.array([0.5])) == pytest.approx(0.5)
    assert p.cone_violation(np.array([2.0])) == 0.0


def test_tolerance_env_override(monkeypatch):
    assert conic.feasibility_tol() == conic.FEAS_TOL
    monkeypatch.setenv("PWA_CERTIFY_SOLVER_TOL", "1e-5")
    assert conic.feasibility_tol() == 1e-5


def test_inconsistent_problem_rejected():
    import scipy.sparse as sp
    with pytest.raises(ValueError):
        conic.ConicProblem(np.zeros(1), sp.csc_matrix((2, 1)), np.zeros(1), (conic.Nonneg(2),))
