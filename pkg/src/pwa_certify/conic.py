"""LP/SDP standard form and solver wrapper.

Problems are stated as::

    minimize    c . x
    subject to  A x + s = b,   s in K

where ``K`` is a product of zero, nonnegative and PSD cones.  PSD blocks use
the scaled upper-triangle vectorization (column-major, off-diagonal entries
times sqrt(2)) so that ``<M1, M2> == svec(M1) . svec(M2)``.  Clarabel solves
the problems with a PSD block and HiGHS (dual simplex, so vertex-exact) the pure
LPs; every "optimal" answer is re-checked against the cone residual
before it is reported as such.
"""

from __future__ import annotations

import enum
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import clarabel
import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

FEAS_TOL = 1e-7
OBJ_TOL = 1e-6
SQRT2 = math.sqrt(2.0)

log = logging.getLogger(__name__)


def feasibility_tol() -> float:
    """Feasibility tolerance, overridable through ``PWA_CERTIFY_SOLVER_TOL``."""
    env = os.environ.get("PWA_CERTIFY_SOLVER_TOL")
    return float(env) if env else FEAS_TOL


# -- cones ---------------------------------------------------------------------


@dataclass(frozen=True)
class Zero:
    m: int

    @property
    def length(self) -> int:
        return self.m


@dataclass(frozen=True)
class Nonneg:
    m: int

    @property
    def length(self) -> int:
        return self.m


@dataclass(frozen=True)
class Psd:
    n: int

    @property
    def length(self) -> int:
        return self.n * (self.n + 1) // 2


Cone = Zero | Nonneg | Psd


def cone_length(cones: Iterable[Cone]) -> int:
    return sum(k.length for k in cones)


# -- scaled vectorization ------------------------------------------------------


def tri_indices(n: int) -> list[tuple[int, int]]:
    """Upper-triangle positions in column-major order."""
    return [(r, c) for c in range(n) for r in range(c + 1)]


def svec(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    out = np.empty(n * (n + 1) // 2)
    for k, (r, c) in enumerate(tri_indices(n)):
        out[k] = M[r, c] if r == c else SQRT2 * M[r, c]
    return out


def smat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = int(round((math.sqrt(8 * len(v) + 1) - 1) / 2))
    M = np.zeros((n, n))
    for k, (r, c) in enumerate(tri_indices(n)):
        if r == c:
            M[r, r] = v[k]
        else:
            M[r, c] = M[c, r] = v[k] / SQRT2
    return M


def psd_check(M: np.ndarray, tol: float = 0.0) -> bool:
    """True iff the smallest eigenvalue of the symmetric matrix ``M`` is >= -tol."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return True
    return bool(min_eig(M) >= -tol)


def project_psd(M: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped)."""
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    return (V * np.maximum(w, 0.0)) @ V.T


def min_eig(M: np.ndarray) -> float:
    M = np.asarray(M, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


# -- problem / solution ----------------------------------------------------------


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True, eq=False)
class ConicProblem:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: tuple[Cone, ...]
    names: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        m = cone_length(self.cones)
        if self.A.shape != (m, len(self.c)) or self.b.shape != (m,):
            raise ValueError(
                f"inconsistent problem: A {self.A.shape}, b {self.b.shape}, "
                f"cone length {m}, {len(self.c)} variables"
            )
        for k in self.cones:
            if (k.n if isinstance(k, Psd) else k.m) < 1:
                raise ValueError(f"empty cone block {k}")

    @property
    def num_vars(self) -> int:
        return len(self.c)

    def residual_scale(self, x: np.ndarray) -> float:
        """``1 + max(|b|, |A x|)``: residuals are compared relative to the data and iterate size."""
        Ax = self.A @ x
        return 1.0 + max(float(np.max(np.abs(self.b), initial=0.0)),
                         float(np.max(np.abs(Ax), initial=0.0)))

    def cone_violation(self, x: np.ndarray) -> float:
        """Largest distance of ``b - A x`` from each cone block."""
        s = self.b - self.A @ x
        worst = 0.0
        pos = 0
        for k in self.cones:
            block = s[pos : pos + k.length]
            pos += k.length
            if isinstance(k, Zero):
                v = float(np.max(np.abs(block)))
            elif isinstance(k, Nonneg):
                v = float(max(0.0, -np.min(block)))
            else:
                v = max(0.0, -min_eig(smat(block)))
            worst = max(worst, v)
        return worst


@dataclass(frozen=True, eq=False)
class ConicSolution:
    status: Status
    x: np.ndarray | None = None
    objective: float | None = None
    detail: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _clarabel_cones(cones: Sequence[Cone]):
    out = []
    for k in cones:
        if isinstance(k, Zero):
            out.append(clarabel.ZeroConeT(k.m))
        elif isinstance(k, Nonneg):
            out.append(clarabel.NonnegativeConeT(k.m))
        else:
            out.append(clarabel.PSDTriangleConeT(k.n))
    return out


def _verified(p: ConicProblem, x: np.ndarray, tol: float, detail: str) -> ConicSolution:
    viol = p.cone_violation(x)
    if viol <= tol * p.residual_scale(x):
        return ConicSolution(Status.OPTIMAL, x, float(np.dot(p.c, x)), detail)
    return ConicSolution(Status.INDETERMINATE, detail=f"{detail}: residual {viol:.2e}")


def _solve_lp(p: ConicProblem, tol: float) -> ConicSolution:
    A = p.A.tocsr()
    eq_rows, ub_rows = [], []
    pos = 0
    for k in p.cones:
        rows = range(pos, pos + k.length)
        (eq_rows if isinstance(k, Zero) else ub_rows).extend(rows)
        pos += k.length
    kwargs = {}
    if ub_rows:
        kwargs.update(A_ub=A[ub_rows], b_ub=p.b[ub_rows])
    if eq_rows:
        kwargs.update(A_eq=A[eq_rows], b_eq=p.b[eq_rows])
    res = linprog(p.c, bounds=(None, None), method="highs-ds",
                  options={"primal_feasibility_tolerance": min(1e-9, tol),
                           "dual_feasibility_tolerance": min(1e-9, tol)}, **kwargs)
    if res.status == 0:
        return _verified(p, np.asarray(res.x), tol, "highs: optimal")
    if res.status == 2:
        return ConicSolution(Status.INFEASIBLE, detail="highs: infeasible")
    if res.status == 3:
        return ConicSolution(Status.UNBOUNDED, objective=-math.inf, detail="highs: unbounded")
    return ConicSolution(Status.INDETERMINATE, detail=f"highs: {res.message}")


# Settings tried in order for conic problems.  Degenerate SDPs (no interior
# point at the optimum) often stop at "AlmostSolved" under the defaults; tight
# iterative refinement or longer equilibration usually brings the residual
# back down.  Every profile's answer goes through the same independent check.
_PROFILES: tuple[dict, ...] = (
    {},
    {"direct_solve_method": "qdldl", "iterative_refinement_reltol": 1e-14,
     "iterative_refinement_abstol": 1e-14, "iterative_refinement_max_iter": 50},
    {"equilibrate_max_iter": 50},
)


def _clarabel_once(p: ConicProblem, tol: float, extra: Mapping) -> tuple[ConicSolution, bool]:
    """One Clarabel run.  The flag says whether a retry could help."""
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_threads = 1
    settings.presolve_enable = False
    settings.chordal_decomposition_enable = False
    settings.max_iter = 500
    inner = min(1e-8, tol * 0.1)
    settings.tol_feas = inner
    settings.tol_gap_abs = inner
    settings.tol_gap_rel = inner
    for key, val in extra.items():
        setattr(settings, key, val)
    n = p.num_vars
    try:
        solver = clarabel.DefaultSolver(
            sp.csc_matrix((n, n)), np.asarray(p.c, dtype=float), sp.csc_matrix(p.A),
            np.asarray(p.b, dtype=float), _clarabel_cones(p.cones), settings,
        )
        raw = solver.solve()
    except Exception as exc:  # solver crashes are reported, not raised
        return ConicSolution(Status.INDETERMINATE, detail=f"solver error: {exc}"), True
    status = str(raw.status)
    if status in ("Solved", "AlmostSolved"):
        x = np.array(raw.x)
        viol = p.cone_violation(x)
        scale = p.residual_scale(x)
        obj = float(np.dot(p.c, x))
        gap = abs(raw.obj_val - raw.obj_val_dual)
        if viol <= tol * scale and gap <= tol * (1.0 + abs(obj)):
            return ConicSolution(Status.OPTIMAL, x, obj, status), False
        return ConicSolution(
            Status.INDETERMINATE, detail=f"{status}: residual {viol:.2e}, gap {gap:.2e}"
        ), True
    if status == "PrimalInfeasible":
        return ConicSolution(Status.INFEASIBLE, detail=status), False
    if status == "DualInfeasible":
        return ConicSolution(Status.UNBOUNDED, objective=-math.inf, detail=status), False
    return ConicSolution(Status.INDETERMINATE, detail=status), True


def solve(p: ConicProblem, tol: float | None = None) -> ConicSolution:
    """Solve ``p``; anything short of a verified outcome is ``INDETERMINATE``."""
    tol = feasibility_tol() if tol is None else tol
    if not any(isinstance(k, Psd) for k in p.cones):
        return _solve_lp(p, tol)
    details = []
    for extra in _PROFILES:
        sol, retry = _clarabel_once(p, tol, extra)
        if not retry:
            return sol
        details.append(sol.detail)
        log.debug("clarabel profile %s inconclusive: %s", extra, sol.detail)
    return ConicSolution(Status.INDETERMINATE, detail="; ".join(details))


# -- modelling helper ----------------------------------------------------------------


class AffineSym:
    """Symmetric-matrix-valued affine expression ``const + sum_v x_v * terms[v]``."""

    __slots__ = ("const", "terms")

    def __init__(self, const: np.ndarray, terms: dict[int, np.ndarray] | None = None):
        self.const = np.asarray(const, dtype=float)
        self.terms = terms or {}

    @property
    def n(self) -> int:
        return self.const.shape[0]

    @classmethod
    def constant(cls, M) -> "AffineSym":
        return cls(np.array(M, dtype=float))

    def __add__(self, other):
        if not isinstance(other, AffineSym):
            other = AffineSym.constant(other)
        terms = dict(self.terms)
        for v, G in other.terms.items():
            terms[v] = terms[v] + G if v in terms else G
        return AffineSym(self.const + other.const, terms)

    __radd__ = __add__

    def __neg__(self):
        return AffineSym(-self.const, {v: -G for v, G in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, AffineSym) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s: float):
        return AffineSym(s * self.const, {v: s * G for v, G in self.terms.items()})

    __rmul__ = __mul__

    def congruence(self, E: np.ndarray) -> "AffineSym":
        """``E^T (self) E``."""
        E = np.asarray(E, dtype=float)
        return AffineSym(E.T @ self.const @ E, {v: E.T @ G @ E for v, G in self.terms.items()})

    def value(self, x: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        for v, G in self.terms.items():
            out += x[v] * G
        return out


@dataclass
class SymVar:
    """A symmetric matrix variable stored as its upper triangle."""

    n: int
    index: list[int]

    def expr(self) -> AffineSym:
        terms = {}
        for v, (r, c) in zip(self.index, tri_indices(self.n)):
            G = np.zeros((self.n, self.n))
            G[r, c] = G[c, r] = 1.0
            terms[v] = G
        return AffineSym(np.zeros((self.n, self.n)), terms)

    def value(self, x: np.ndarray) -> np.ndarray:
        M = np.zeros((self.n, self.n))
        for v, (r, c) in zip(self.index, tri_indices(self.n)):
            M[r, c] = M[c, r] = x[v]
        return M


class ConicBuilder:
    """Incremental construction of a :class:`ConicProblem`."""

    def __init__(self):
        self._nvars = 0
        self._names: dict[str, object] = {}
        self._objective: dict[int, float] = {}
        # (cone, (rows, cols, values), rhs) with rows local to the block
        self._blocks: list[tuple[Cone, tuple[list, list, list], np.ndarray]] = []

    def _new(self, count: int) -> list[int]:
        idx = list(range(self._nvars, self._nvars + count))
        self._nvars += count
        return idx

    def scalar(self, name: str, nonneg: bool = False) -> int:
        (v,) = self._new(1)
        self._names[name] = v
        if nonneg:
            self.add_nonneg_vars([v])
        return v

    def vector(self, name: str, n: int, nonneg: bool = False) -> list[int]:
        idx = self._new(n)
        self._names[name] = idx
        if nonneg and n:
            self.add_nonneg_vars(idx)
        return idx

    def symmetric(self, name: str, n: int, cone: str | None = None) -> SymVar:
        """``cone`` is None, ``"nonneg"`` (entrywise) or ``"psd"``."""
        var = SymVar(n, self._new(n * (n + 1) // 2))
        self._names[name] = var
        if cone == "nonneg":
            self.add_nonneg_vars(var.index)
        elif cone == "psd":
            self.add_psd(var.expr())
        elif cone is not None:
            raise ValueError(f"unknown cone {cone!r}")
        return var

    def add_nonneg_vars(self, idx: Sequence[int]) -> None:
        m = len(idx)
        self._blocks.append((Nonneg(m), (list(range(m)), list(idx), [-1.0] * m), np.zeros(m)))

    def add_linear(self, rows: Sequence[Mapping[int, float]], rhs: Sequence[float], kind: str) -> None:
        """Rows ``sum coef * x <= rhs`` (kind="leq") or ``== rhs`` (kind="eq")."""
        m = len(rows)
        if m == 0:
            return
        ri, ci, vals = [], [], []
        for k, row in enumerate(rows):
            for v, a in row.items():
                ri.append(k)
                ci.append(v)
                vals.append(a)
        cone = Nonneg(m) if kind == "leq" else Zero(m)
        self._blocks.append((cone, (ri, ci, vals), np.asarray(rhs, dtype=float)))

    def add_psd(self, expr: AffineSym) -> None:
        n = expr.n
        L = n * (n + 1) // 2
        ri, ci, vals = [], [], []
        for v, G in expr.terms.items():
            col = svec(G)
            nz = np.flatnonzero(col)
            ri.extend(nz.tolist())
            ci.extend([v] * len(nz))
            vals.extend((-col[nz]).tolist())
        self._blocks.append((Psd(n), (ri, ci, vals), svec(expr.const)))

    def minimize(self, coefs: Mapping[int, float]) -> None:
        self._objective = dict(coefs)

    def build(self) -> ConicProblem:
        n = self._nvars
        c = np.zeros(n)
        for v, a in self._objective.items():
            c[v] += a
        ri, ci, vals, rhs, cones = [], [], [], [], []
        offset = 0
        for cone, (r, cl, v), b in self._blocks:
            ri.extend(offset + k for k in r)
            ci.extend(cl)
            vals.extend(v)
            rhs.append(b)
            cones.append(cone)
            offset += cone.length
        A = sp.csc_matrix((vals, (ri, ci)), shape=(offset, n))
        b = np.concatenate(rhs) if rhs else np.zeros(0)
        return ConicProblem(c, A, b, tuple(cones), dict(self._names))
