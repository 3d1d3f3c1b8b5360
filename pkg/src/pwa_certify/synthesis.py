"""Piecewise quadratic Lyapunov (PQL) certificates.

On cell ``i`` the function is ``L_i(x) = x' P_i x + 2 x' q_i``.  The
certificate proves that ``{x : L(x) <= alpha}`` contains the initial set, is
invariant under the dynamics, and lies inside the ball ``|x|^2 <= beta``.
Every "copositive on a polyhedron" condition is replaced by the sufficient
condition ``Q - E' (Y + Z) E >= 0`` with ``Y`` entrywise nonnegative and
``Z`` positive semidefinite, ``E`` being the lifted polyhedron.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import conic
from .conic import AffineSym, ConicBuilder, psd_check
from .errors import CertificateRejected, NoPqlFound, SynthesisFailed
from .lifting import LiftedSystem, lift
from .polyhedra import SwitchSets, coordinate_range, vertices
from .system import PwaSystem

log = logging.getLogger(__name__)

MULT_NONNEG_TOL = 1e-8
MULT_PSD_TOL = 1e-7
RESIDUAL_TOL = 1e-6

Multiplier = tuple[np.ndarray, np.ndarray]  # (entrywise nonnegative part, PSD part)


@dataclass(frozen=True, eq=False)
class PqlCertificate:
    P: dict[int, np.ndarray]
    q: dict[int, np.ndarray]
    alpha: float
    beta: float
    W: dict[int, Multiplier] = field(default_factory=dict)
    U: dict[tuple[int, int], Multiplier] = field(default_factory=dict)
    Z: dict[int, Multiplier] = field(default_factory=dict)
    homogeneous: bool = False

    @property
    def d(self) -> int:
        return next(iter(self.P.values())).shape[0]

    @property
    def has_multipliers(self) -> bool:
        return bool(self.W)

    def lift_L(self, i: int, const: float = 0.0) -> np.ndarray:
        """Lift of ``x -> L_i(x) + const``."""
        return lift(self.P[i], 2.0 * self.q[i], const)

    def L_cell(self, i: int, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.P[i] @ x + 2.0 * x @ self.q[i])

    def L_many(self, i: int, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.einsum("nk,kl,nl->n", X, self.P[i], X) + 2.0 * X @ self.q[i]


def evaluate_L(cert: PqlCertificate, sys: PwaSystem, x) -> float:
    """Value of the PQL function at ``x``, using the piece of the cell containing ``x``."""
    return cert.L_cell(sys.locate(x), x)


def _lifted_L_expr(b: ConicBuilder, i: int, d: int, homogeneous: bool):
    """Variables for ``P_i`` (and ``q_i``) and the lift of ``L_i`` as an expression."""
    Pv = b.symmetric(f"P{i}", d)
    qv = None if homogeneous else b.vector(f"q{i}", d)
    terms = {}
    for v, G in Pv.expr().terms.items():
        H = np.zeros((d + 1, d + 1))
        H[1:, 1:] = G
        terms[v] = H
    if qv is not None:
        for k, v in enumerate(qv):
            H = np.zeros((d + 1, d + 1))
            H[0, k + 1] = H[k + 1, 0] = 1.0
            terms[v] = H
    return Pv, qv, AffineSym(np.zeros((d + 1, d + 1)), terms)


def _multiplier(b: ConicBuilder, name: str, n: int):
    pos = b.symmetric(name + "+", n, "nonneg")
    psd = b.symmetric(name + "psd", n, "psd")
    return pos, psd


def _project(pos: np.ndarray, psd: np.ndarray) -> Multiplier:
    """Snap solver output onto the multiplier cones.

    Interior-point iterates can sit a hair outside their cones; the residual
    checks in :func:`verify_certificate` are run on the projected values, so
    the certificate that is reported is the one that is checked.
    """
    return np.maximum(pos, 0.0), conic.project_psd(psd)


def _scalar_expr(v: int, d: int, coef: float) -> AffineSym:
    H = np.zeros((d + 1, d + 1))
    H[0, 0] = coef
    return AffineSym(np.zeros((d + 1, d + 1)), {v: H})


@dataclass
class _Model:
    builder: ConicBuilder
    alpha: int
    beta: int
    P: dict
    q: dict
    W: dict
    U: dict
    Z: dict


def _model(sys: PwaSystem, lifted: LiftedSystem, homogeneous: bool) -> _Model:
    d = sys.d
    b = ConicBuilder()
    alpha = b.scalar("alpha", nonneg=True)
    beta = b.scalar("beta", nonneg=True)
    P, q, ML = {}, {}, {}
    for i in sys.indices:
        P[i], q[i], ML[i] = _lifted_L_expr(b, i, d, homogeneous)
    alpha_N = _scalar_expr(alpha, d, 1.0)
    norm_lift = lift(np.eye(d), np.zeros(d), 0.0)

    W, U, Z = {}, {}, {}
    for i in sys.indices:
        E = lifted.E[i]
        W[i] = _multiplier(b, f"W{i}", E.shape[0])
        mult = (W[i][0].expr() + W[i][1].expr()).congruence(E)
        # M(P, 2q, -alpha) - M(Id, 0, -beta) - E'(W+ + Wpsd)E
        b.add_psd(ML[i] - alpha_N - norm_lift + _scalar_expr(beta, d, 1.0) - mult)
    for (i, j), E in lifted.E_pair.items():
        U[i, j] = _multiplier(b, f"U{i},{j}", E.shape[0])
        mult = (U[i, j][0].expr() + U[i, j][1].expr()).congruence(E)
        b.add_psd(ML[i] - ML[j].congruence(lifted.F[i]) - mult)
    for i, E in lifted.E_init.items():
        Z[i] = _multiplier(b, f"Z{i}0", E.shape[0])
        mult = (Z[i][0].expr() + Z[i][1].expr()).congruence(E)
        b.add_psd(-(ML[i] - alpha_N) - mult)
    return _Model(b, alpha, beta, P, q, W, U, Z)


def synthesize(sys: PwaSystem, sw: SwitchSets, lifted: LiftedSystem,
               homogeneous: bool = False, weights: tuple[float, float] = (1.0, 1.0),
               tol: float | None = None, polish: bool = True) -> PqlCertificate:
    """Solve the PQL synthesis SDP, minimizing ``w_a * alpha + w_b * beta``.

    Near-degenerate instances can come back with multipliers in the
    thousands, and their rounding error alone breaks the residual checks.
    When that happens (and ``polish`` is set) the multipliers are first
    re-derived for the fixed ``P, q, alpha, beta``, one condition at a time;
    if ``P`` itself is off, the SDP is solved once more at a tenth of the
    tolerance.  The certificate with the best worst residual is returned.
    """
    tol = conic.feasibility_tol() if tol is None else tol
    best, best_ev = None, -np.inf
    for t in ((tol, 0.1 * tol) if polish else (tol,)):
        try:
            cert = _solve_once(sys, lifted, homogeneous, weights, t)
        except SynthesisFailed as exc:
            if best is None:
                raise
            log.info("tighter synthesis solve inconclusive (%s); keeping the first", exc)
            break
        if not polish:
            return cert
        ev = worst_residual(cert, lifted)
        if ev < -RESIDUAL_TOL:
            cert, ev = _rederive(cert, sys, lifted, t, ev)
        if ev > best_ev:
            best, best_ev = cert, ev
        if best_ev >= -RESIDUAL_TOL:
            break
        log.info("synthesis residual %.3g at tolerance %.0e", ev, t)
    return best


def _solve_once(sys, lifted, homogeneous, weights, tol) -> PqlCertificate:
    m = _model(sys, lifted, homogeneous)
    m.builder.minimize({m.alpha: weights[0], m.beta: weights[1]})
    sol = conic.solve(m.builder.build(), tol)
    if sol.status is conic.Status.INFEASIBLE:
        raise NoPqlFound("the PQL synthesis SDP is infeasible: no certificate of this form exists")
    if not sol.optimal:
        raise SynthesisFailed(f"PQL synthesis solver outcome: {sol.status.value} ({sol.detail})")
    return _extract(sys, m, sol.x, homogeneous)


def _rederive(cert, sys, lifted, tol, ev):
    try:
        cert2 = recover_multipliers(replace(cert, W={}, U={}, Z={}), sys, lifted, tol)
    except SynthesisFailed as exc:
        log.info("multiplier re-derivation failed (%s); keeping the solver's", exc)
        return cert, ev
    ev2 = worst_residual(cert2, lifted)
    log.info("multipliers re-derived for fixed P, q: worst residual %.3g -> %.3g", ev, ev2)
    return (cert2, ev2) if ev2 > ev else (cert, ev)


def _extract(sys: PwaSystem, m: _Model, x: np.ndarray, homogeneous: bool) -> PqlCertificate:
    def mval(pair):
        return _project(pair[0].value(x), pair[1].value(x))

    return PqlCertificate(
        P={i: m.P[i].value(x) for i in sys.indices},
        q={i: (np.zeros(sys.d) if m.q[i] is None else x[m.q[i]]) for i in sys.indices},
        alpha=float(x[m.alpha]),
        beta=float(x[m.beta]),
        W={i: mval(m.W[i]) for i in m.W},
        U={k: mval(m.U[k]) for k in m.U},
        Z={i: mval(m.Z[i]) for i in m.Z},
        homogeneous=homogeneous,
    )


def worst_residual(cert: PqlCertificate, lifted: LiftedSystem) -> float:
    """Smallest eigenvalue over the three residual families (bounded, decrease, initial)."""
    evs = [conic.min_eig(residual_bounded(cert, lifted, i)) for i in cert.W]
    evs += [conic.min_eig(residual_decrease(cert, lifted, i, j)) for i, j in cert.U]
    evs += [conic.min_eig(residual_initial(cert, lifted, i)) for i in cert.Z]
    return min(evs, default=0.0)


def shift_alpha(cert: PqlCertificate) -> PqlCertificate:
    """Move a negative ``alpha`` to zero, raising ``beta`` by the same amount."""
    if cert.alpha >= 0:
        return cert
    return replace(cert, alpha=0.0, beta=cert.beta - cert.alpha)


# -- residuals -------------------------------------------------------------------


def _msum(pair: Multiplier) -> np.ndarray:
    return pair[0] + pair[1]


def residual_bounded(cert, lifted, i) -> np.ndarray:
    d = lifted.d
    E = lifted.E[i]
    return (cert.lift_L(i, -cert.alpha) - lift(np.eye(d), np.zeros(d), -cert.beta)
            - E.T @ _msum(cert.W[i]) @ E)


def residual_decrease(cert, lifted, i, j) -> np.ndarray:
    E, F = lifted.E_pair[i, j], lifted.F[i]
    return cert.lift_L(i) - F.T @ cert.lift_L(j) @ F - E.T @ _msum(cert.U[i, j]) @ E


def residual_initial(cert, lifted, i) -> np.ndarray:
    E = lifted.E_init[i]
    return -cert.lift_L(i, -cert.alpha) - E.T @ _msum(cert.Z[i]) @ E


def successor_rows(lifted: LiftedSystem, i: int, j: int) -> np.ndarray:
    """Row selector ``S`` with ``E_j F_i == S E_ij``."""
    n_i, n_j = lifted.n_rows(i), lifted.n_rows(j)
    S = np.zeros((n_j + 1, n_i + n_j + 1))
    S[0, 0] = 1.0
    S[1:, n_i + 1:] = np.eye(n_j)
    return S


def residual_norm_step(cert, lifted, i, j) -> np.ndarray:
    """Slack of the derived bound on ``|f_i(x)|^2`` over the pair polyhedron."""
    d = lifted.d
    E, F = lifted.E_pair[i, j], lifted.F[i]
    S = successor_rows(lifted, i, j)
    mult = S.T @ _msum(cert.W[j]) @ S + _msum(cert.U[i, j])
    rhs = cert.lift_L(i, -cert.alpha) + lift(np.zeros((d, d)), np.zeros(d), cert.beta) - E.T @ mult @ E
    return rhs - F.T @ lift(np.eye(d), np.zeros(d), 0.0) @ F


# -- multiplier recovery -----------------------------------------------------------


def recover_multipliers(cert: PqlCertificate, sys: PwaSystem, lifted: LiftedSystem,
                        tol: float | None = None) -> PqlCertificate:
    """Find multipliers for a certificate given only by ``P, q, alpha, beta``.

    Each condition is solved separately, maximizing the smallest eigenvalue of
    its residual, so a certificate that is only feasible up to rounding still
    gets the best available multipliers.
    """
    d = sys.d

    def best(const: np.ndarray, E: np.ndarray) -> Multiplier:
        b = ConicBuilder()
        t = b.scalar("t")
        pos, psd = _multiplier(b, "M", E.shape[0])
        mult = (pos.expr() + psd.expr()).congruence(E)
        eye = AffineSym(np.zeros((d + 1, d + 1)), {t: np.eye(d + 1)})
        b.add_psd(AffineSym.constant(const) - mult - eye)
        b.add_linear([{t: 1.0}], [1.0], "leq")
        b.minimize({t: -1.0})
        sol = conic.solve(b.build(), tol)
        if not sol.optimal:
            raise SynthesisFailed(f"multiplier recovery failed: {sol.status.value} ({sol.detail})")
        return _project(pos.value(sol.x), psd.value(sol.x))

    W = {i: best(cert.lift_L(i, -cert.alpha) - lift(np.eye(d), np.zeros(d), -cert.beta), lifted.E[i])
         for i in sys.indices}
    U = {(i, j): best(cert.lift_L(i) - lifted.F[i].T @ cert.lift_L(j) @ lifted.F[i], E)
         for (i, j), E in lifted.E_pair.items()}
    Z = {i: best(-cert.lift_L(i, -cert.alpha), E) for i, E in lifted.E_init.items()}
    return replace(cert, W=W, U=U, Z=Z)


# -- verification ---------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool | None  # None: skipped
    detail: str = ""
    value: float | None = None


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.passed is False]

    def add(self, name, passed, detail="", value=None):
        self.checks.append(Check(name, passed, detail, value))

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [c.__dict__ for c in self.checks]}


def _sample_polyhedron(T, c, lo, hi, n_per_axis) -> np.ndarray:
    axes = [np.linspace(a, b, n_per_axis) for a, b in zip(lo, hi)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    if len(c):
        G = G[np.all(G @ T.T <= c + 1e-12, axis=1)]
    return G


def initial_level_sup(cert: PqlCertificate, sys: PwaSystem, sw: SwitchSets,
                      n_per_axis: int = 201) -> float:
    """Lower estimate of ``sup L`` over the initial set: vertices plus a dense grid of each piece."""
    from .lifting import initial_polyhedron

    best = -np.inf
    lo_hi = [coordinate_range(sys.initial, k) for k in range(sys.d)]
    lo, hi = [a for a, _ in lo_hi], [b for _, b in lo_hi]
    for i in sorted(sw.in_set):
        T, c = initial_polyhedron(sys, i)
        pts = [_sample_polyhedron(T, c, lo, hi, n_per_axis)]
        V = vertices(T, c)
        if len(V):
            pts.append(V)
        X = np.vstack(pts)
        if len(X):
            best = max(best, float(np.max(cert.L_many(i, X))))
    return best


def verify_certificate(cert: PqlCertificate, sys: PwaSystem, sw: SwitchSets,
                       lifted: LiftedSystem, raise_on_failure: bool = True,
                       level_samples: int = 201) -> VerificationReport:
    """Re-check a certificate independently of the solver that produced it."""
    if not cert.has_multipliers:
        cert = recover_multipliers(cert, sys, lifted)
    rep = VerificationReport()
    rep.add("alpha >= 0", cert.alpha >= -MULT_NONNEG_TOL, value=cert.alpha)
    rep.add("beta >= 0", cert.beta >= -MULT_NONNEG_TOL, value=cert.beta)

    def mult_ok(tag, pair):
        pos, psd = pair
        lo = float(np.min(pos)) if pos.size else 0.0
        rep.add(f"{tag}+ entrywise nonnegative", lo >= -MULT_NONNEG_TOL, value=lo)
        ev = conic.min_eig(psd)
        rep.add(f"{tag}psd positive semidefinite", ev >= -MULT_PSD_TOL, value=ev)

    for i in sys.indices:
        mult_ok(f"W{i}", cert.W[i])
        ev = conic.min_eig(residual_bounded(cert, lifted, i))
        rep.add(f"bounded residual cell {i}", ev >= -RESIDUAL_TOL, "norm bound condition", ev)
    for i, j in sorted(lifted.E_pair):
        mult_ok(f"U{i},{j}", cert.U[i, j])
        ev = conic.min_eig(residual_decrease(cert, lifted, i, j))
        rep.add(f"decrease residual pair ({i},{j})", ev >= -RESIDUAL_TOL, "decrease condition", ev)
        ev = conic.min_eig(residual_norm_step(cert, lifted, i, j))
        rep.add(f"successor norm bound pair ({i},{j})", ev >= -RESIDUAL_TOL, "derived bound", ev)
    for i in sorted(lifted.E_init):
        mult_ok(f"Z{i}0", cert.Z[i])
        ev = conic.min_eig(residual_initial(cert, lifted, i))
        rep.add(f"initial residual cell {i}", ev >= -RESIDUAL_TOL, "initial condition", ev)

    V = vertices(sys.initial.T, sys.initial.c)
    sup_norm = float(np.max(np.sum(V * V, axis=1))) if len(V) else 0.0
    rep.add("sup |x|^2 over initial set <= beta", sup_norm <= cert.beta + 1e-6,
            f"sup = {sup_norm:.6g}, beta = {cert.beta:.6g}", sup_norm)

    if cert.alpha > 0:
        s = initial_level_sup(cert, sys, sw, level_samples)
        rel = abs(s - cert.alpha) / max(abs(cert.alpha), 1e-12)
        rep.add("sup L over initial set == alpha", rel <= 1e-4,
                f"sup = {s:.6g}, alpha = {cert.alpha:.6g}", s)
    else:
        rep.add("sup L over initial set == alpha", None, "skipped: alpha is 0")

    if raise_on_failure and not rep.ok:
        raise CertificateRejected(f"{c.name} ({c.detail}, value {c.value})" for c in rep.failures)
    return rep


# -- serialization ----------------------------------------------------------------------


def _pair_dict(pair: Multiplier) -> dict:
    return {"nonneg": pair[0].tolist(), "psd": pair[1].tolist()}


def _pair_from(obj) -> Multiplier:
    return np.array(obj["nonneg"], dtype=float), np.array(obj["psd"], dtype=float)


def certificate_to_dict(cert: PqlCertificate) -> dict:
    return {
        "alpha": cert.alpha,
        "beta": cert.beta,
        "homogeneous": cert.homogeneous,
        "P": {str(i): cert.P[i].tolist() for i in sorted(cert.P)},
        "q": {str(i): cert.q[i].tolist() for i in sorted(cert.q)},
        "multipliers": {
            "W": {str(i): _pair_dict(v) for i, v in sorted(cert.W.items())},
            "U": {f"{i},{j}": _pair_dict(v) for (i, j), v in sorted(cert.U.items())},
            "Z": {str(i): _pair_dict(v) for i, v in sorted(cert.Z.items())},
        },
    }


def certificate_from_dict(data: dict) -> PqlCertificate:
    P = {int(k): np.array(v, dtype=float) for k, v in data["P"].items()}
    q = {int(k): np.array(v, dtype=float) for k, v in data.get("q", {}).items()}
    for i, Pi in P.items():
        q.setdefault(i, np.zeros(Pi.shape[0]))
    mults = data.get("multipliers") or {}
    W = {int(k): _pair_from(v) for k, v in mults.get("W", {}).items()}
    U = {tuple(int(t) for t in k.split(",")): _pair_from(v) for k, v in mults.get("U", {}).items()}
    Z = {int(k): _pair_from(v) for k, v in mults.get("Z", {}).items()}
    return PqlCertificate(P, q, float(data["alpha"]), float(data["beta"]), W, U, Z,
                          bool(data.get("homogeneous", False)))


def dump_certificate(cert: PqlCertificate) -> str:
    return json.dumps(certificate_to_dict(cert), indent=2)


def load_certificate(text: str) -> PqlCertificate:
    return certificate_from_dict(json.loads(text))
