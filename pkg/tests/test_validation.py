import numpy as np
import pytest

import randsys
from pwa_certify.polyhedra import x0_coordinate_bounds
from pwa_certify.system import Polyhedron, make_system
from pwa_certify.validation import (
    check_membership,
    partition_spot_check,
    seed_grid,
    simulate,
)


@pytest.mark.parametrize("seed", range(25))
def test_zero_steps_is_the_seed_grid(seed):
    s = randsys.random_system(seed)
    sample = simulate(s, grid_n=5, steps=0)
    assert len(sample) == 25   # X0 is a box, so no grid point is filtered
    assert np.all(sample.generation == 0)
    assert np.all(s.initial.closure_mask(sample.points, tol=1e-12))
    x0 = np.array(x0_coordinate_bounds(s).coords)
    assert np.all(sample.points ** 2 <= x0 + 1e-12)


def test_zero_dynamics_jump_to_offset():
    b = np.array([0.3, -0.2])
    s = make_system(Polyhedron.box([-1, -1], [1, 1]),
                    [("all", Polyhedron(2), np.zeros((2, 2)), b)])
    sample = simulate(s, grid_n=3, steps=2)
    later = sample.points[sample.generation >= 1]
    np.testing.assert_allclose(later, np.tile(b, (len(later), 1)))


def test_grid_respects_initial_set():
    tri = Polyhedron.from_arrays([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
    s = make_system(tri, [("all", Polyhedron(2), 0.5 * np.eye(2), np.zeros(2))])
    G = seed_grid(s, 3)
    assert len(G) == 6
    with pytest.raises(ValueError):
        seed_grid(s, 1)
    with pytest.raises(ValueError):
        simulate(s, 3, -1)


def test_quadrants_states_stay_in_the_ball(ex1):
    sample = simulate(ex1.sys, grid_n=21, steps=30)
    assert np.max(np.sum(sample.points ** 2, axis=1)) <= 2.0 + 1e-12
    assert np.all(np.diff(sample.generation) >= 0)
    assert sample.upto(0).points.shape == (21 * 21, 2)
    assert sample.upto(3).steps == 3


def test_membership_clean_and_dirty(ex1_run):
    r = ex1_run
    sample = simulate(r.sys, grid_n=11, steps=20)
    assert check_membership(sample, r.sys, r.cert, r.trace.final) == []
    bad = check_membership(sample, r.sys, r.cert, r.trace.final / 2)
    assert bad
    v = bad[0]
    assert v.value > v.limit
    assert set(v.to_dict()) == {"point", "generation", "bound", "value", "limit"}


def test_zero_steps_against_initial_bounds(ex2_run):
    r = ex2_run
    sample = simulate(r.sys, grid_n=9, steps=0)
    omega = r.trace.x0
    assert not [v for v in check_membership(sample, r.sys, r.cert, omega)
                if v.bound.startswith("x")]


def test_partition_spot_check(ex1, ex2):
    assert partition_spot_check(ex1.sys) == []
    assert partition_spot_check(ex2.sys) == []
    gap = make_system(Polyhedron.box([-1], [1]), [
        ("a", Polyhedron.from_arrays([[1]], [-0.5]), [[0.5]], [0]),
        ("b", Polyhedron.from_arrays([[-1]], [-0.5]), [[0.5]], [0]),
    ])
    bad = partition_spot_check(gap, samples=500)
    assert bad and all(b["cells"] == [] for b in bad)
    assert all(-0.5 < b["point"][0] < 0.5 for b in bad)
