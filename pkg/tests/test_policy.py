import dataclasses

import numpy as np
import pytest

from pwa_certify.errors import AlphaNonpositive, PolicyLpFailure
from pwa_certify.policy import (
    Policy,
    Termination,
    initial_bounds,
    policy_fixed_point,
    reachable_cells,
    switch_conclusion,
)
from pwa_certify.relaxed import eval_relaxed_combined


def test_initial_bounds(ex1, ex2):
    w0, x0b = initial_bounds(ex2.published, ex2.x0b)
    np.testing.assert_allclose(w0, [286.4932, 286.4932, 58.1165])
    np.testing.assert_allclose(x0b.vector(), [9.0, 4.0, 58.1165])
    with pytest.raises(AlphaNonpositive):
        initial_bounds(dataclasses.replace(ex1.published, alpha=0.0), ex1.x0b)


def test_policy_lp_with_constant_minorants():
    key = (1, 1, 1)
    pol = Policy({key: np.zeros(2)}, {key: 3.0})
    np.testing.assert_allclose(policy_fixed_point(pol, np.array([1.0, 2.0])), [3.0, 2.0])
    np.testing.assert_allclose(pol.apply([0.0, 0.0], np.array([1.0, 2.0])), [3.0, 2.0])


def test_policy_lp_contraction():
    # w1 >= 0.5 w2 + 1, w2 >= 0.5 w1, both >= 0: fixed point (4/3, 2/3)
    pol = Policy({(1, 1, 1): np.array([0.0, 0.5]), (1, 1, 2): np.array([0.5, 0.0])},
                 {(1, 1, 1): 1.0, (1, 1, 2): 0.0})
    np.testing.assert_allclose(policy_fixed_point(pol, np.zeros(2)), [4 / 3, 2 / 3], atol=1e-9)


def test_policy_lp_unbounded_growth_fails():
    pol = Policy({(1, 1, 1): np.array([1.0])}, {(1, 1, 1): 1.0})
    with pytest.raises(PolicyLpFailure):
        policy_fixed_point(pol, np.zeros(1))


def test_quadrants_trace(ex1_run):
    t = ex1_run.trace
    assert t.termination is Termination.FIXED_POINT
    np.testing.assert_allclose(t.records[1].omega, [1.1036, 1.2443, 2.0], atol=0.01)
    np.testing.assert_allclose(t.final, [1.0, 1.2443, 2.0], atol=0.01)
    assert t.iterations <= 4
    assert not t.pruned_at
    assert t.remaining == ex1_run.sw.sw_bar


def _check_trace_invariants(run):
    t = run.trace
    x0 = t.x0
    np.testing.assert_allclose(t.omega0, [run.cert.beta] * run.sys.d + [run.cert.alpha])
    for k, rec in enumerate(t.records):
        assert np.all(rec.omega >= x0 - 1e-9)
        assert np.all(rec.image <= rec.omega + 1e-6), (k, rec.image, rec.omega)
        if k:
            assert np.all(rec.omega <= t.records[k - 1].omega + 1e-7)


def test_trace_invariants_fixtures(ex1_run, ex2_run, ex2_published_trace, ex2):
    _check_trace_invariants(ex1_run)
    _check_trace_invariants(ex2_run)
    _check_trace_invariants(type(ex2_run)(ex2.sys, ex2.sw, ex2.lifted, ex2.published, ex2.x0b,
                                          ex2_published_trace))


def test_affine2_published_trace(ex2_published_trace):
    t = ex2_published_trace
    assert t.termination is Termination.FIXED_POINT
    np.testing.assert_allclose(t.final, [41.8956, 31.4449, 58.1165], rtol=1e-3)
    assert t.pruned_at[1, 1] == 0
    assert t.remaining == frozenset({(1, 2), (2, 2)})


def test_pair_bounds_are_pair_images(ex1_run):
    rec = ex1_run.trace.records[0]
    assert set(rec.pair_bounds) == set(ex1_run.sw.sw_bar)
    ev = eval_relaxed_combined(ex1_run.cert, ex1_run.lifted, ex1_run.sw.sw_bar,
                               ex1_run.x0b.with_level(ex1_run.cert.alpha),
                               ex1_run.trace.records[1].omega)
    for (i, j), v in rec.pair_bounds.items():
        for l in (1, 2, 3):
            assert v[l - 1] == pytest.approx(max(ev.table[i, j, l].value, 0.0), abs=1e-6)


def test_reachable_cells():
    assert reachable_cells({2}, {(1, 2), (2, 2)}) == frozenset({2})
    assert reachable_cells({1}, {(1, 2), (2, 3), (3, 1)}) == frozenset({1, 2, 3})
    assert reachable_cells(set(), {(1, 2)}) == frozenset()


def test_switch_conclusion(ex2, ex2_published_trace):
    msg = switch_conclusion(ex2.sw, ex2_published_trace)
    assert msg.startswith("only cell 2 is reachable")
