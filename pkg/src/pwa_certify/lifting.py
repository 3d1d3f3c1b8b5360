"""Homogenized matrices for quadratic forms, affine maps and polyhedra.

Everything acts on the lifted vector ``(1, x)``.  A quadratic
``q(x) = x'A x + b'x + c`` lifts to ``[[c, b'/2], [b/2, A]]``; an affine map
``x -> A x + b`` lifts to ``[[1, 0], [b, A]]``; a polyhedron ``P x <= c``
lifts to ``[[1, 0], [c, -P]]`` whose product with ``(1, x)`` is entrywise
nonnegative on the polyhedron.  Strict rows are lifted exactly like weak
ones: the resulting certificates hold on closures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .polyhedra import SwitchSets
from .system import AffineMap, Polyhedron, PwaSystem


@dataclass(frozen=True, eq=False)
class QuadForm:
    """``x -> x' A x + b' x + c``."""

    A: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.A @ x + self.b @ x + self.c)


def lift(A, b, c) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    d = A.shape[0]
    M = np.empty((d + 1, d + 1))
    M[0, 0] = c
    M[0, 1:] = M[1:, 0] = b / 2.0
    M[1:, 1:] = 0.5 * (A + A.T)
    return M


def lift_quadform(q: QuadForm) -> np.ndarray:
    return lift(q.A, q.b, q.c)


def coordinate_square(d: int, k: int) -> np.ndarray:
    """Lift of ``x -> x_k**2`` for 0-based ``k``."""
    M = np.zeros((d + 1, d + 1))
    M[k + 1, k + 1] = 1.0
    return M


def corner(d: int) -> np.ndarray:
    """The matrix with a single 1 in its top-left entry."""
    N = np.zeros((d + 1, d + 1))
    N[0, 0] = 1.0
    return N


def homogeneous_map(m: AffineMap) -> np.ndarray:
    d = m.d
    F = np.zeros((d + 1, d + 1))
    F[0, 0] = 1.0
    F[1:, 0] = m.b
    F[1:, 1:] = m.A
    return F


def conjugate(q_lift: np.ndarray, m: AffineMap) -> np.ndarray:
    """Lift of ``x -> q(A x + b)`` given the lift of ``q``."""
    F = homogeneous_map(m)
    return F.T @ q_lift @ F


def hom(P, c) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    c = np.asarray(c, dtype=float).reshape(-1)
    n = len(c)
    m = P.shape[1] if P.ndim == 2 else 0
    P = P.reshape(n, m)
    E = np.zeros((n + 1, m + 1))
    E[0, 0] = 1.0
    E[1:, 0] = c
    E[1:, 1:] = -P
    return E


def hom_polyhedron(p: Polyhedron) -> np.ndarray:
    return hom(p.T, p.c)


def pair_polyhedron(sys: PwaSystem, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """``(T, c)`` of the closure of ``X^i`` intersected with the preimage of ``X^j``."""
    Xi, Xj, f = sys.guard(i), sys.guard(j), sys.dynamics(i)
    T = np.vstack([Xi.T, Xj.T @ f.A])
    c = np.concatenate([Xi.c, Xj.c - Xj.T @ f.b])
    return T, c


def initial_polyhedron(sys: PwaSystem, i: int) -> tuple[np.ndarray, np.ndarray]:
    Xi, X0 = sys.guard(i), sys.initial
    return np.vstack([Xi.T, X0.T]), np.concatenate([Xi.c, X0.c])


@dataclass(frozen=True, eq=False)
class LiftedSystem:
    d: int
    F: dict[int, np.ndarray]
    E: dict[int, np.ndarray]
    E_pair: dict[tuple[int, int], np.ndarray]
    E_init: dict[int, np.ndarray]
    M_coord: tuple[np.ndarray, ...] = field(default=())
    N: np.ndarray = field(default=None)

    def n_rows(self, i: int) -> int:
        """Row count of the cell's inequality matrix (lifted size minus one)."""
        return self.E[i].shape[0] - 1


def build_lifted(sys: PwaSystem, sw: SwitchSets) -> LiftedSystem:
    d = sys.d
    F = {i: homogeneous_map(sys.dynamics(i)) for i in sys.indices}
    E = {i: hom_polyhedron(sys.guard(i)) for i in sys.indices}
    E_pair = {(i, j): hom(*pair_polyhedron(sys, i, j)) for (i, j) in sorted(sw.sw_bar)}
    E_init = {i: hom(*initial_polyhedron(sys, i)) for i in sorted(sw.in_set)}
    M_coord = tuple(coordinate_square(d, k) for k in range(d))
    return LiftedSystem(d, F, E, E_pair, E_init, M_coord, corner(d))
