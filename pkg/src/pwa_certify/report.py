"""JSON analysis reports and CSV plot data."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .policy import IterationTrace, switch_conclusion
from .polyhedra import SwitchSets
from .synthesis import PqlCertificate
from .system import PwaSystem
from .validation import ReachSample


def jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, frozenset, set)):
        items = sorted(obj) if isinstance(obj, (frozenset, set)) else obj
        return [jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):  # enums
        return obj.value
    return obj


def pair_key(pair) -> str:
    return f"{pair[0]},{pair[1]}"


@dataclass
class AnalysisReport:
    system: dict = field(default_factory=dict)
    switches: dict = field(default_factory=dict)
    certificate: dict = field(default_factory=dict)
    verification: dict = field(default_factory=dict)
    iteration: dict = field(default_factory=dict)
    invariant: dict = field(default_factory=dict)
    conclusions: list = field(default_factory=list)
    validation: dict = field(default_factory=dict)
    stage: str = ""
    error: dict | None = None
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisReport":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})

    @classmethod
    def from_json(cls, text: str) -> "AnalysisReport":
        return cls.from_dict(json.loads(text))

    def without_timings(self) -> dict:
        out = self.to_dict()
        out.pop("timings", None)
        return out


def system_summary(sys: PwaSystem, disjoint: dict | None = None) -> dict:
    out = {
        "dimension": sys.d,
        "cells": [{"index": i, "name": sys.cell(i).name, "rows": sys.guard(i).n}
                  for i in sys.indices],
        "initial_rows": sys.initial.n,
    }
    if disjoint is not None:
        out["guards_disjoint"] = {pair_key(k): v for k, v in sorted(disjoint.items())}
    return out


def switches_summary(sys: PwaSystem, sw: SwitchSets) -> dict:
    return {
        "sw_bar": [list(p) for p in sorted(sw.sw_bar)],
        "in": sorted(sw.in_set),
        "matrix": sw.matrix(len(sys.cells)),
    }


def certificate_summary(cert: PqlCertificate) -> dict:
    return {
        "alpha": cert.alpha,
        "beta": cert.beta,
        "homogeneous": cert.homogeneous,
        "P": {str(i): cert.P[i] for i in sorted(cert.P)},
        "q": {str(i): cert.q[i] for i in sorted(cert.q)},
    }


def certificate_from_summary(data: dict) -> PqlCertificate:
    P = {int(k): np.array(v, dtype=float) for k, v in data["P"].items()}
    q = {int(k): np.array(v, dtype=float) for k, v in data["q"].items()}
    return PqlCertificate(P, q, float(data["alpha"]), float(data["beta"]),
                          homogeneous=bool(data.get("homogeneous", False)))


def trace_summary(trace: IterationTrace) -> dict:
    return {
        "omega0": trace.omega0,
        "x0_bounds": trace.x0,
        "records": [
            {
                "k": r.k,
                "omega": r.omega,
                "image": r.image,
                "policy_lp": r.policy is not None,
                "pruned": [list(p) for p in sorted(r.pruned)],
                "pair_bounds": {pair_key(p): v for p, v in sorted(r.pair_bounds.items())},
            }
            for r in trace.records
        ],
        "iterations": trace.iterations,
        "termination": trace.termination,
        "detail": trace.detail,
        "pruned_at": {pair_key(p): k for p, k in sorted(trace.pruned_at.items())},
        "remaining_switches": [list(p) for p in sorted(trace.remaining)],
    }


def invariant_summary(cert: PqlCertificate, omega) -> dict:
    omega = np.asarray(omega, dtype=float)
    d = len(omega) - 1
    parts = [f"x{k + 1}^2 <= {omega[k]:.6g}" for k in range(d)]
    parts.append(f"L(x) <= {omega[d]:.6g}")
    return {
        "omega": omega,
        "alpha": cert.alpha,
        "description": "{x : " + ", ".join(parts) + "} intersected with {x : L(x) <= "
                       + f"{cert.alpha:.6g}" + "}",
    }


def conclusions(sw: SwitchSets, trace: IterationTrace) -> list[str]:
    out = [f"switch ({i},{j}) refuted at iteration {k}"
           for (i, j), k in sorted(trace.pruned_at.items())]
    out.append("remaining switches: " + ", ".join(f"({i},{j})" for i, j in sorted(trace.remaining)))
    out.append(switch_conclusion(sw, trace))
    return out


# -- plot data -----------------------------------------------------------------------


def _level_field(sys: PwaSystem, cert: PqlCertificate, G: np.ndarray) -> np.ndarray:
    out = np.full(len(G), np.nan)
    todo = np.ones(len(G), dtype=bool)
    for i in sys.indices:
        m = todo & sys.guard(i).membership_mask(G)
        out[m] = cert.L_many(i, G[m])
        todo &= ~m
    return out


def plot_window(omega, sample: ReachSample | None, margin: float = 0.1):
    omega = np.asarray(omega, dtype=float)
    d = len(omega) - 1
    r = np.sqrt(np.maximum(omega[:d], 0.0))
    lo, hi = -r, r.copy()
    if sample is not None and len(sample):
        lo = np.minimum(lo, sample.points.min(axis=0))
        hi = np.maximum(hi, sample.points.max(axis=0))
    pad = margin * np.maximum(hi - lo, 1e-9)
    return lo - pad, hi + pad


def emit_plot_data(sys: PwaSystem, cert: PqlCertificate, omega, sample: ReachSample | None,
                   resolution: int = 101, window=None) -> str:
    """CSV with the reachable sample and, on a regular grid, ``L`` and ``max_k x_k^2 / w_k``.

    One header row; the ``section`` column is ``sample`` or ``grid``.  The
    level sets ``L = alpha`` and ``ratio = 1`` (with ``L = w_{d+1}``) outline
    the first and the refined invariants.
    """
    d = sys.d
    omega = np.asarray(omega, dtype=float)
    lo, hi = window if window is not None else plot_window(omega, sample)
    axes = [np.linspace(lo[k], hi[k], resolution) for k in range(d)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    L = _level_field(sys, cert, G)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(omega[:d] > 0, G ** 2 / omega[:d], np.where(G == 0, 0.0, np.inf))
    ratio = ratios.max(axis=1)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    coords = [f"x{k + 1}" for k in range(d)]
    w.writerow(["section", *coords, "generation", "L", "ratio"])
    if sample is not None:
        for p, g in zip(sample.points, sample.generation):
            w.writerow(["sample", *(repr(float(v)) for v in p), int(g), "", ""])
    for p, lv, rv in zip(G, L, ratio):
        w.writerow(["grid", *(repr(float(v)) for v in p), "", repr(float(lv)), repr(float(rv))])
    return buf.getvalue()
