"""Property tests over the random two-cell family."""

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

import randsys
from pwa_certify.errors import NoPqlFound
from pwa_certify.polyhedra import vertices, x0_coordinate_bounds
from pwa_certify.relaxed import eval_relaxed
from pwa_certify.synthesis import RESIDUAL_TOL, worst_residual
from pwa_certify.system import step
from pwa_certify.validation import check_membership, simulate

seeds = st.integers(0, 10_000)
prop = settings(max_examples=12, deadline=None, derandomize=True,
                suppress_health_check=[HealthCheck.too_slow])


def _run(seed):
    try:
        return randsys.run(randsys.random_system(seed), homogeneous=seed % 2 == 0)
    except NoPqlFound:
        assume(False)


@prop
@given(seeds)
def test_x0_bounds_match_vertices(seed):
    s = randsys.random_system(seed)
    V = vertices(s.initial.T, s.initial.c)
    want = np.max(V ** 2, axis=0)
    np.testing.assert_allclose(x0_coordinate_bounds(s).coords, want, rtol=1e-12)


@prop
@given(seeds)
def test_iterates_nonnegative_and_decreasing(seed):
    t = _run(seed).trace
    for k, rec in enumerate(t.records):
        assert np.all(rec.omega >= 0)
        assert np.all(rec.omega >= t.x0 - 1e-9)
        if k:
            assert np.all(rec.omega <= t.records[k - 1].omega + 1e-7)


@prop
@given(seeds)
def test_policy_value_at_selection_point(seed):
    r = _run(seed)
    rec = r.trace.records[0]
    if rec.policy is None:
        return
    for key in list(rec.policy.lam)[:4]:
        assert np.all(rec.policy.lam[key] >= -1e-9)
        ev = eval_relaxed(r.cert, r.lifted, *key, rec.omega)
        assert abs(rec.policy.value(key, rec.omega) - ev.value) <= 1e-6 * (1 + abs(ev.value))


@prop
@given(seeds)
def test_samples_are_iterated_images(seed):
    s = randsys.random_system(seed)
    sample = simulate(s, grid_n=4, steps=3)
    n0 = int(np.sum(sample.generation == 0))
    for g in range(1, 4):
        prev = sample.points[sample.generation == g - 1]
        cur = sample.points[sample.generation == g]
        assert len(cur) == n0
        for x, y in zip(prev, cur):
            np.testing.assert_allclose(step(s, x)[1], y, rtol=1e-12, atol=1e-12)


@prop
@given(seeds)
def test_simulation_inside_refined_bounds(seed):
    r = _run(seed)
    # soundness is only claimed for certificates whose residuals pass
    assume(worst_residual(r.cert, r.lifted) >= -RESIDUAL_TOL)
    sample = simulate(r.sys, grid_n=15, steps=30)
    assert check_membership(sample, r.sys, r.cert, r.trace.final) == []
