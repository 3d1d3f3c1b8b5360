"""Emptiness tests for polyhedra with strict and weak inequalities.

``{x : T_s x < c_s, T_w x <= c_w}`` is empty iff the transposition system

    S' p_s + W' p_w = 0,   sum(p_s) = 1,   p_s >= 0,   p_w >= 0

is feasible, where ``S`` stacks the row ``(1, 0)`` on top of the lifted strict
rows ``(c_s, -T_s)`` and ``W`` holds the lifted weak rows ``(c_w, -T_w)``.
That system is a plain LP, solved through :mod:`pwa_certify.conic`.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .errors import AnalysisIndeterminate, UnboundedInitialSet
from .system import Polyhedron, PwaSystem

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SwitchSets:
    sw_bar: frozenset[tuple[int, int]]
    in_set: frozenset[int]

    def matrix(self, n_cells: int) -> list[list[int]]:
        return [
            [int((i, j) in self.sw_bar) for j in range(1, n_cells + 1)]
            for i in range(1, n_cells + 1)
        ]


@dataclass(frozen=True)
class X0Bounds:
    """Squared-coordinate suprema over the initial set; ``level`` is filled with alpha later."""

    coords: tuple[float, ...]
    level: float | None = None

    def with_level(self, alpha: float) -> "X0Bounds":
        return X0Bounds(self.coords, float(alpha))

    def vector(self) -> np.ndarray:
        if self.level is None:
            raise ValueError("level bound not set")
        return np.array([*self.coords, self.level])


def _lifted_rows(T: np.ndarray, c: np.ndarray, d: int) -> np.ndarray:
    T = np.asarray(T, dtype=float).reshape(len(c), d)
    return np.hstack([np.asarray(c, dtype=float).reshape(-1, 1), -T])


def is_nonempty(d: int, strict: list[tuple[np.ndarray, np.ndarray]],
                weak: list[tuple[np.ndarray, np.ndarray]], what: str = "") -> bool:
    """Decide nonemptiness of the intersection of the given ``(T, c)`` blocks."""
    S = np.vstack([np.eye(1, d + 1)] + [_lifted_rows(T, c, d) for T, c in strict])
    W = np.vstack([np.zeros((0, d + 1))] + [_lifted_rows(T, c, d) for T, c in weak])
    ns, nw = S.shape[0], W.shape[0]
    b = conic.ConicBuilder()
    ps = b.vector("p_s", ns, nonneg=True)
    pw = b.vector("p_w", nw, nonneg=True)
    rows = []
    for col in range(d + 1):
        row = {v: S[k, col] for k, v in enumerate(ps) if S[k, col] != 0.0}
        row.update({v: W[k, col] for k, v in enumerate(pw) if W[k, col] != 0.0})
        rows.append(row)
    rows.append({v: 1.0 for v in ps})
    b.add_linear(rows, [0.0] * (d + 1) + [1.0], "eq")
    b.minimize({})
    sol = conic.solve(b.build())
    if sol.status is conic.Status.OPTIMAL:
        return False
    if sol.status is conic.Status.INFEASIBLE:
        return True
    raise AnalysisIndeterminate(f"emptiness LP for {what or 'polyhedron'} inconclusive: {sol.detail}")


def _split(p: Polyhedron, A=None, b=None):
    """Strict and weak ``(T, c)`` blocks of ``p``, optionally pulled back through ``x -> A x + b``."""
    Ts, cs, Tw, cw = p.T_s, p.c_s, p.T_w, p.c_w
    if A is not None:
        cs, cw = cs - Ts @ b, cw - Tw @ b
        Ts, Tw = Ts @ A, Tw @ A
    return (Ts, cs), (Tw, cw)


def pair_nonempty(sys: PwaSystem, i: int, j: int) -> bool:
    """Whether some point of cell ``i`` is mapped into cell ``j``."""
    f = sys.dynamics(i)
    si, wi = _split(sys.guard(i))
    sj, wj = _split(sys.guard(j), f.A, f.b)
    return is_nonempty(sys.d, [si, sj], [wi, wj], f"pair ({i},{j})")


def meets_initial(sys: PwaSystem, i: int) -> bool:
    si, wi = _split(sys.guard(i))
    s0, w0 = _split(sys.initial)
    return is_nonempty(sys.d, [si, s0], [wi, w0], f"cell {i} and initial set")


def initial_cells(sys: PwaSystem) -> frozenset[int]:
    return frozenset(i for i in sys.indices if meets_initial(sys, i))


def switch_set(sys: PwaSystem) -> frozenset[tuple[int, int]]:
    return frozenset(
        (i, j) for i in sys.indices for j in sys.indices if pair_nonempty(sys, i, j)
    )


def switch_sets(sys: PwaSystem) -> SwitchSets:
    return SwitchSets(switch_set(sys), initial_cells(sys))


def guards_disjoint(sys: PwaSystem) -> dict[tuple[int, int], bool]:
    """Disjointness of every unordered pair of guards, keyed by ``(i, j)`` with ``i < j``."""
    out = {}
    for i, j in itertools.combinations(sys.indices, 2):
        si, wi = _split(sys.guard(i))
        sj, wj = _split(sys.guard(j))
        out[(i, j)] = not is_nonempty(sys.d, [si, sj], [wi, wj], f"guards ({i},{j})")
    return out


def coordinate_range(p: Polyhedron, k: int) -> tuple[float, float]:
    """``(inf x_k, sup x_k)`` over the closure of ``p``."""
    d = p.d
    T, c = p.T, p.c
    if p.n == 0:
        raise UnboundedInitialSet("initial set has no constraints")
    out = []
    for sign in (1.0, -1.0):
        b = conic.ConicBuilder()
        x = b.vector("x", d)
        b.add_linear([{x[m]: T[r, m] for m in range(d) if T[r, m] != 0.0} for r in range(p.n)],
                     c, "leq")
        b.minimize({x[k]: sign})
        sol = conic.solve(b.build())
        if sol.status is conic.Status.UNBOUNDED:
            raise UnboundedInitialSet(f"initial set is unbounded along coordinate {k + 1}")
        if sol.status is conic.Status.INFEASIBLE:
            raise AnalysisIndeterminate("initial set is empty")
        if not sol.optimal:
            raise AnalysisIndeterminate(f"coordinate bound LP inconclusive: {sol.detail}")
        out.append(sign * sol.objective)
    return out[0], out[1]


def x0_coordinate_bounds(sys: PwaSystem) -> X0Bounds:
    vals = []
    for k in range(sys.d):
        lo, hi = coordinate_range(sys.initial, k)
        vals.append(max(lo * lo, hi * hi))
    return X0Bounds(tuple(vals))


def max_sq_norm_box(p: Polyhedron) -> float:
    """Upper bound on ``|x|^2`` over ``p`` from its bounding box (exact for boxes)."""
    return float(sum(max(lo * lo, hi * hi) for lo, hi in
                     (coordinate_range(p, k) for k in range(p.d))))


def vertices(T: np.ndarray, c: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Vertices of ``{x : T x <= c}`` by enumerating ``d``-subsets of active rows.

    Meant for the handful of rows of an initial set; returns an empty array
    when the polyhedron has no vertex.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    c = np.asarray(c, dtype=float).reshape(-1)
    n, d = T.shape
    found = []
    for rows in itertools.combinations(range(n), d):
        sub = T[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, c[list(rows)])
        if np.all(T @ x <= c + tol * (1.0 + np.abs(c))):
            if not any(np.allclose(x, y, atol=1e-10) for y in found):
                found.append(x)
    return np.array(found).reshape(-1, d)
