"""Relaxed one-step bound propagation over the sublevel abstraction.

For bounds ``w`` the abstract set is ``C(w) = {x : x_k^2 <= w_k, L(x) <= w_{d+1}}``.
The exact update asks, for each switch ``(i, j)`` and template ``l``, for the
supremum of the template at ``f_i(x)`` over ``x`` in ``C(w)`` and the pair
polyhedron.  Those are nonconvex quadratic programs; here each one is
replaced by its Lagrangian dual, an SDP in ``(eta, lam, Y, Z)``::

    minimize  eta
    s.t.      (eta - lam . w) N - Phi(lam, Y, Z) >= 0,   lam >= 0,  Y >= 0,  Z psd

    Phi = F_i' M_target F_i - sum_k lam_k M_k - lam_{d+1} M_L^i + E_ij' (Y + Z) E_ij

An unbounded dual certifies that the pair's feasible set is empty, so the
switch is refuted.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import conic
from .conic import AffineSym, ConicBuilder
from .errors import SelectionFailure
from .lifting import LiftedSystem, pair_polyhedron
from .polyhedra import X0Bounds
from .synthesis import PqlCertificate
from .system import PwaSystem

log = logging.getLogger(__name__)

Key = tuple[int, int, int]  # (i, j, l) with l 1-based


class MinusInfinity:
    """Value of a relaxed bound whose underlying problem is infeasible."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MinusInfinity"

    def __reduce__(self):
        return (MinusInfinity, ())


MINUS_INFINITY = MinusInfinity()


@dataclass(frozen=True, eq=False)
class RelaxedEval:
    value: float | MinusInfinity
    lam: np.ndarray | None = None
    eta: float | None = None
    Y: np.ndarray | None = None
    Z: np.ndarray | None = None
    omega: np.ndarray | None = None
    status: str = ""

    @property
    def finite(self) -> bool:
        return not isinstance(self.value, MinusInfinity)

    @property
    def constant(self) -> float:
        """Constant term of the affine minorant ``w -> lam . w + (eta - lam . omega)``."""
        return float(self.eta - self.lam @ self.omega)

    def affine(self, w) -> float:
        return float(self.lam @ np.asarray(w, dtype=float) + self.constant)


def target_lift(cert: PqlCertificate, lifted: LiftedSystem, j: int, l: int) -> np.ndarray:
    d = lifted.d
    if l <= d:
        return lifted.M_coord[l - 1]
    return cert.lift_L(j)


def phi(lifted: LiftedSystem, cert: PqlCertificate, i: int, j: int, l: int,
        lam, Y, Z) -> np.ndarray:
    d = lifted.d
    lam = np.asarray(lam, dtype=float)
    F, E = lifted.F[i], lifted.E_pair[i, j]
    out = F.T @ target_lift(cert, lifted, j, l) @ F
    for k in range(d):
        out = out - lam[k] * lifted.M_coord[k]
    out = out - lam[d] * cert.lift_L(i)
    return out + E.T @ (np.asarray(Y) + np.asarray(Z)) @ E


def relaxed_residual(lifted, cert, i, j, l, omega, ev: RelaxedEval) -> np.ndarray:
    """The matrix required to be PSD, at the values stored in ``ev``."""
    omega = np.asarray(omega, dtype=float)
    return ((ev.eta - ev.lam @ omega) * lifted.N
            - phi(lifted, cert, i, j, l, ev.lam, ev.Y, ev.Z))


def eval_relaxed(cert: PqlCertificate, lifted: LiftedSystem, i: int, j: int, l: int,
                 omega, tol: float | None = None) -> RelaxedEval:
    d = lifted.d
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (d + 1,):
        raise ValueError(f"bounds vector must have length {d + 1}")
    F, E = lifted.F[i], lifted.E_pair[i, j]
    n = E.shape[0]

    b = ConicBuilder()
    eta = b.scalar("eta")
    lam = b.vector("lam", d + 1, nonneg=True)
    Y = b.symmetric("Y", n, "nonneg")
    Z = b.symmetric("Z", n, "psd")

    terms = {eta: lifted.N}
    for k in range(d):
        terms[lam[k]] = -omega[k] * lifted.N + lifted.M_coord[k]
    terms[lam[d]] = -omega[d] * lifted.N + cert.lift_L(i)
    expr = AffineSym(-(F.T @ target_lift(cert, lifted, j, l) @ F), terms)
    expr = expr - (Y.expr() + Z.expr()).congruence(E)
    b.add_psd(expr)
    b.minimize({eta: 1.0})

    sol = conic.solve(b.build(), tol)
    if sol.status is conic.Status.UNBOUNDED:
        return RelaxedEval(MINUS_INFINITY, omega=omega, status="unbounded")
    if not sol.optimal:
        raise SelectionFailure(
            f"relaxed bound for pair ({i},{j}), template {l}: {sol.status.value} ({sol.detail})"
        )
    x = sol.x
    lam_v = np.maximum(x[lam], 0.0)
    Yv, Zv = np.maximum(Y.value(x), 0.0), conic.project_psd(Z.value(x))
    return RelaxedEval(float(x[eta]), lam_v, float(x[eta]), Yv, Zv,
                       omega.copy(), "optimal")


@dataclass
class CombinedEval:
    values: np.ndarray
    table: dict[Key, RelaxedEval]
    pruned: frozenset[tuple[int, int]] = field(default_factory=frozenset)


def eval_relaxed_combined(cert: PqlCertificate, lifted: LiftedSystem,
                          active: Iterable[tuple[int, int]], x0b: X0Bounds, omega,
                          tol: float | None = None, workers: int = 1) -> CombinedEval:
    """``F_l(w) = max(X0_l, max over active pairs of the relaxed bound)``.

    A pair is pruned when any of its templates comes back unbounded: the
    feasible set does not depend on ``l``, so one certificate of emptiness
    covers all of them, and the pair's other entries are dropped.
    """
    d = lifted.d
    omega = np.asarray(omega, dtype=float)
    active = sorted(active)
    keys = [(i, j, l) for i, j in active for l in range(1, d + 2)]

    def run(key):
        return eval_relaxed(cert, lifted, *key, omega, tol)

    if workers > 1 and len(keys) > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, keys))
    else:
        results = [run(k) for k in keys]
    table = dict(zip(keys, results))
    pruned = frozenset((i, j) for (i, j, _), ev in table.items() if not ev.finite)

    values = np.array(x0b.vector(), dtype=float)
    for (i, j, l), ev in table.items():
        if (i, j) in pruned:
            continue
        values[l - 1] = max(values[l - 1], ev.value)
    return CombinedEval(values, table, pruned)


def sharp_oracle(cert: PqlCertificate, sys: PwaSystem, i: int, j: int, l: int, omega,
                 samples: int = 10_000, seed: int = 0) -> float:
    """Sampling lower bound on the exact one-step bound; ``-inf`` if no sample is feasible.

    Samples are a regular grid plus uniform random points in the box
    ``prod [-sqrt(w_k), sqrt(w_k)]``, filtered by ``L_i(x) <= w_{d+1}`` and by
    the closure of the pair polyhedron.
    """
    d = sys.d
    omega = np.asarray(omega, dtype=float)
    r = np.sqrt(np.maximum(omega[:d], 0.0))
    per_axis = max(2, int(round((samples / 2) ** (1.0 / d))))
    axes = [np.linspace(-rk, rk, per_axis) for rk in r]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    rng = np.random.default_rng(seed)
    rand = rng.uniform(-r, r, size=(max(samples - len(grid), 0), d))
    X = np.vstack([grid, rand])

    T, c = pair_polyhedron(sys, i, j)
    keep = np.all(X @ T.T <= c, axis=1) if len(c) else np.ones(len(X), dtype=bool)
    X = X[keep]
    X = X[cert.L_many(i, X) <= omega[d]] if len(X) else X
    if not len(X):
        return -np.inf
    f = sys.dynamics(i)
    Y = X @ f.A.T + f.b
    if l <= d:
        vals = Y[:, l - 1] ** 2
    else:
        vals = cert.L_many(j, Y)
    return float(np.max(vals))
