"""Simulation-based evidence for computed invariants.

Seeds a regular grid over the closure of the initial set, runs the system
forward and checks every visited state against the bounds.  This is
testing, not proof: a clean run means no counterexample was found.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polyhedra import coordinate_range
from .synthesis import PqlCertificate
from .system import PwaSystem

BOUND_TOL = 1e-5


@dataclass(frozen=True, eq=False)
class ReachSample:
    points: np.ndarray       # (n, d)
    generation: np.ndarray   # (n,) step index of each point
    cells: np.ndarray        # (n,) cell containing each point, 0 when not stepped
    grid_n: int
    steps: int

    def __len__(self):
        return len(self.points)

    def upto(self, k: int) -> "ReachSample":
        keep = self.generation <= k
        return ReachSample(self.points[keep], self.generation[keep], self.cells[keep],
                           self.grid_n, min(k, self.steps))


def seed_grid(sys: PwaSystem, grid_n: int) -> np.ndarray:
    """``grid_n ** d`` points over the bounding box, filtered to the closure of the initial set."""
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    axes = [np.linspace(*coordinate_range(sys.initial, k), grid_n) for k in range(sys.d)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, sys.d)
    return G[sys.initial.closure_mask(G, tol=1e-12)]


def simulate(sys: PwaSystem, grid_n: int = 41, steps: int = 60) -> ReachSample:
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    X = seed_grid(sys, grid_n)
    pts, gens, cells = [X], [np.zeros(len(X), dtype=int)], []
    for k in range(1, steps + 1):
        idx = sys.locate_many(X) if len(X) else np.zeros(0, dtype=int)
        cells.append(idx)
        Y = np.empty_like(X)
        for i in np.unique(idx):
            m = idx == i
            f = sys.dynamics(int(i))
            Y[m] = X[m] @ f.A.T + f.b
        X = Y
        pts.append(X)
        gens.append(np.full(len(X), k, dtype=int))
    cells.append(np.zeros(len(X), dtype=int))
    return ReachSample(np.vstack(pts), np.concatenate(gens), np.concatenate(cells),
                       grid_n, steps)


@dataclass(frozen=True)
class Violation:
    point: tuple[float, ...]
    generation: int
    bound: str
    value: float
    limit: float

    def to_dict(self) -> dict:
        return {"point": list(self.point), "generation": self.generation, "bound": self.bound,
                "value": self.value, "limit": self.limit}


def level_values(sys: PwaSystem, cert: PqlCertificate, X: np.ndarray) -> np.ndarray:
    """``L`` at each row of ``X``, using the piece of the containing cell."""
    idx = sys.locate_many(X)
    out = np.empty(len(X))
    for i in np.unique(idx):
        m = idx == i
        out[m] = cert.L_many(int(i), X[m])
    return out


def check_membership(sample: ReachSample, sys: PwaSystem, cert: PqlCertificate, omega,
                     tol: float = BOUND_TOL) -> list[Violation]:
    """Every visited point against ``x_k^2 <= w_k``, ``L(x) <= w_{d+1}`` and ``L(x) <= alpha``."""
    d = sys.d
    omega = np.asarray(omega, dtype=float)
    X = sample.points
    if not len(X):
        return []
    L = level_values(sys, cert, X)
    out = []
    checks = [(f"x{k + 1}^2 <= w{k + 1}", X[:, k] ** 2, omega[k]) for k in range(d)]
    checks.append((f"L <= w{d + 1}", L, omega[d]))
    checks.append(("L <= alpha", L, cert.alpha))
    for name, vals, limit in checks:
        for n in np.flatnonzero(vals > limit + tol):
            out.append(Violation(tuple(map(float, X[n])), int(sample.generation[n]), name,
                                 float(vals[n]), float(limit)))
    return out


def partition_spot_check(sys: PwaSystem, samples: int = 4000, scale: float = 3.0,
                         seed: int = 0) -> list[dict]:
    """Points that lie in no cell or in several, among random samples around the initial set.

    Covering all of R^d is not decided exactly; this is a sampling check over
    the initial bounding box blown up by ``scale``, plus the origin.
    """
    rng = np.random.default_rng(seed)
    lo_hi = np.array([coordinate_range(sys.initial, k) for k in range(sys.d)])
    mid = lo_hi.mean(axis=1)
    half = np.maximum((lo_hi[:, 1] - lo_hi[:, 0]) / 2 * scale, 1.0)
    X = np.vstack([np.zeros(sys.d), rng.uniform(mid - half, mid + half, size=(samples, sys.d))])
    masks = np.array([sys.guard(i).membership_mask(X) for i in sys.indices])
    counts = masks.sum(axis=0)
    bad = []
    for n in np.flatnonzero(counts != 1):
        cells = [int(i) for i in np.flatnonzero(masks[:, n]) + 1]
        bad.append({"point": X[n].tolist(), "cells": cells})
    return bad
