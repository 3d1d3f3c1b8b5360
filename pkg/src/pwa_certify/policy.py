"""Policy iteration on the relaxed bound functional.

Start from ``w0 = (beta, ..., beta, alpha)``.  At each step every relaxed
bound is evaluated at the current ``w``; the attained multipliers ``lam``
give affine minorants ``w' -> lam . w' + (eta - lam . w)`` (a policy), whose
smallest common fixed point above the initial-set bounds is an LP.  The
iterates decrease and each is a sound bound vector for the reachable set.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import ConicBuilder
from .errors import AlphaNonpositive, PolicyLpFailure, SelectionFailure
from .lifting import LiftedSystem
from .polyhedra import SwitchSets, X0Bounds
from .relaxed import CombinedEval, Key, RelaxedEval, eval_relaxed_combined
from .synthesis import PqlCertificate

log = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 50
DEFAULT_TOL = 1e-6


class Termination(str, enum.Enum):
    FIXED_POINT = "FixedPoint"
    SELECTION_FAILURE = "SelectionFailure"
    MAX_ITERS = "MaxIters"
    STALLED = "Stalled"
    LP_FAILURE = "PolicyLpFailure"


def initial_bounds(cert: PqlCertificate, x0b: X0Bounds) -> tuple[np.ndarray, X0Bounds]:
    """``w0`` and the initial-set bounds completed with ``alpha`` as the level bound."""
    if not cert.alpha > 0:
        raise AlphaNonpositive(f"alpha = {cert.alpha:g}; refinement needs a positive level")
    d = len(x0b.coords)
    w0 = np.full(d + 1, cert.beta, dtype=float)
    w0[d] = cert.alpha
    return w0, x0b.with_level(cert.alpha)


@dataclass(frozen=True, eq=False)
class Policy:
    """Affine minorant ``w -> lam . w + const`` per active ``(i, j, l)``."""

    lam: dict[Key, np.ndarray]
    const: dict[Key, float]

    @classmethod
    def from_table(cls, table: dict[Key, RelaxedEval], active) -> "Policy":
        active = set(active)
        keys = [k for k in sorted(table) if k[:2] in active and table[k].finite]
        return cls({k: table[k].lam for k in keys}, {k: table[k].constant for k in keys})

    def value(self, key: Key, w) -> float:
        return float(self.lam[key] @ np.asarray(w, dtype=float) + self.const[key])

    def apply(self, w, x0: np.ndarray) -> np.ndarray:
        """``F_pi(w)``: the policy's bound update, floored at the initial-set bounds."""
        out = np.array(x0, dtype=float)
        for key in self.lam:
            l = key[2]
            out[l - 1] = max(out[l - 1], self.value(key, w))
        return out


def policy_fixed_point(policy: Policy, x0: np.ndarray) -> np.ndarray:
    """Smallest ``w`` with ``w >= x0`` and ``lam . w + c <= w_l`` for every policy entry."""
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    b = ConicBuilder()
    w = b.vector("w", n)
    rows, rhs = [], []
    for l in range(n):
        rows.append({w[l]: -1.0})
        rhs.append(-x0[l])
    for key, lam in policy.lam.items():
        row = {w[m]: float(lam[m]) for m in range(n) if lam[m] != 0.0}
        row[w[key[2] - 1]] = row.get(w[key[2] - 1], 0.0) - 1.0
        rows.append(row)
        rhs.append(-policy.const[key])
    b.add_linear(rows, rhs, "leq")
    b.minimize({v: 1.0 for v in w})
    sol = conic.solve(b.build())
    if not sol.optimal:
        raise PolicyLpFailure(f"policy LP: {sol.status.value} ({sol.detail})")
    return np.asarray(sol.x[w], dtype=float)


@dataclass
class IterationRecord:
    k: int
    omega: np.ndarray
    image: np.ndarray                      # relaxed functional at omega
    policy: Policy | None = None
    pruned: frozenset[tuple[int, int]] = frozenset()
    # relaxed bounds per pair at the next iterate: bounds on the image of the
    # part of the abstract set that moves from cell i to cell j
    pair_bounds: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)


@dataclass
class IterationTrace:
    records: list[IterationRecord] = field(default_factory=list)
    termination: Termination | None = None
    detail: str = ""
    omega0: np.ndarray | None = None
    x0: np.ndarray | None = None
    pruned_at: dict[tuple[int, int], int] = field(default_factory=dict)
    remaining: frozenset[tuple[int, int]] = frozenset()

    @property
    def final(self) -> np.ndarray:
        return self.records[-1].omega

    @property
    def iterations(self) -> int:
        """Number of policy LPs solved."""
        return sum(1 for r in self.records if r.policy is not None)

    def omegas(self) -> list[np.ndarray]:
        return [r.omega for r in self.records]


def _pair_bounds(ev: CombinedEval, d: int) -> dict[tuple[int, int], np.ndarray]:
    out: dict[tuple[int, int], np.ndarray] = {}
    for (i, j, l), r in ev.table.items():
        if (i, j) in ev.pruned:
            continue
        out.setdefault((i, j), np.zeros(d + 1))[l - 1] = max(r.value, 0.0)
    return out


def _is_fixed(image, omega, tol) -> bool:
    return bool(np.all(np.abs(image - omega) <= tol * (1.0 + np.abs(omega))))


def iterate(cert: PqlCertificate, lifted: LiftedSystem, sw: SwitchSets, x0b: X0Bounds,
            max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL,
            solver_tol: float | None = None, workers: int = 1) -> IterationTrace:
    d = lifted.d
    omega, x0b = initial_bounds(cert, x0b)
    x0 = x0b.vector()
    active = set(sw.sw_bar)
    trace = IterationTrace(omega0=omega.copy(), x0=x0)

    k = 0
    while True:
        try:
            ev = eval_relaxed_combined(cert, lifted, active, x0b, omega, solver_tol, workers)
        except SelectionFailure as exc:
            trace.records.append(IterationRecord(k, omega, np.full(d + 1, np.nan)))
            trace.termination, trace.detail = Termination.SELECTION_FAILURE, str(exc)
            break
        if trace.records:
            trace.records[-1].pair_bounds = _pair_bounds(ev, d)
        for pair in sorted(ev.pruned):
            trace.pruned_at[pair] = k
            log.info("switch %s refuted at iteration %d", pair, k)
        active -= ev.pruned
        rec = IterationRecord(k, omega, ev.values, pruned=ev.pruned)
        trace.records.append(rec)

        if _is_fixed(ev.values, omega, tol):
            trace.termination = Termination.FIXED_POINT
            break
        if k >= max_iters:
            trace.termination = Termination.MAX_ITERS
            break
        rec.policy = Policy.from_table(ev.table, active)
        try:
            new = policy_fixed_point(rec.policy, x0)
        except PolicyLpFailure as exc:
            trace.termination, trace.detail = Termination.LP_FAILURE, str(exc)
            break
        if not np.any(omega - new >= tol * (1.0 + np.abs(omega))):
            # no coordinate moved although the image differs: floating-point cycling
            rec.policy = None
            trace.termination = Termination.STALLED
            trace.detail = f"max |F(w) - w| = {np.max(np.abs(ev.values - omega)):.3g}"
            break
        omega = new
        k += 1

    trace.remaining = frozenset(active)
    return trace


def reachable_cells(in_set, pairs) -> frozenset[int]:
    """Cells reachable from ``in_set`` along the given switches."""
    seen = set(in_set)
    frontier = list(in_set)
    while frontier:
        i = frontier.pop()
        for a, b in pairs:
            if a == i and b not in seen:
                seen.add(b)
                frontier.append(b)
    return frozenset(seen)


def switch_conclusion(sw: SwitchSets, trace: IterationTrace) -> str:
    cells = reachable_cells(sw.in_set, trace.remaining)
    if len(cells) == 1:
        (i,) = cells
        return (f"only cell {i} is reachable: the system behaves as a constrained affine "
                f"system x -> A{i} x + b{i}")
    return f"reachable cells: {sorted(cells)}"
