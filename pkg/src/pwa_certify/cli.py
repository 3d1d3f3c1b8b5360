"""``pwa-certify`` command line.

Exit codes: 0 success, 10 malformed input, 20 polyhedral analysis, 30
certificate synthesis or verification, 40 policy iteration, 50 partition or
simulation failures.  Reports are JSON; ``plot`` writes CSV.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CertificateRejected, PartitionError, PwaCertifyError, SystemParseError
from .lifting import build_lifted
from .policy import DEFAULT_MAX_ITERS, DEFAULT_TOL, iterate
from .polyhedra import guards_disjoint, switch_sets, x0_coordinate_bounds
from .report import (
    AnalysisReport,
    certificate_from_summary,
    certificate_summary,
    conclusions,
    emit_plot_data,
    invariant_summary,
    jsonable,
    switches_summary,
    system_summary,
    trace_summary,
)
from .synthesis import dump_certificate, load_certificate, synthesize, verify_certificate
from .system import load_system
from .validation import check_membership, partition_spot_check, simulate

log = logging.getLogger("pwa_certify")

BUNDLED = ("quadrants", "affine2", "quadrants_published", "affine2_published")


def read_input(name: str) -> str:
    """Contents of a file, or of a bundled fixture when ``name`` is a bare fixture name."""
    path = Path(name)
    if path.exists():
        return path.read_text(encoding="utf-8")
    stem = name[:-5] if name.endswith(".json") else name
    if stem in BUNDLED and "/" not in stem:
        return resources.files("pwa_certify").joinpath("data", f"{stem}.json").read_text("utf-8")
    raise SystemParseError(f"no such file: {name}")


def load_input(name: str):
    text = read_input(name)
    sys_ = load_system(text)
    options = json.loads(text).get("options") or {}
    return sys_, options


def _homogeneous(args, options) -> bool:
    if args.homogeneous is not None:
        return args.homogeneous
    return bool(options.get("homogeneous", False))


class Pipeline:
    """Runs the stages in order, filling a report as it goes."""

    def __init__(self, args):
        self.args = args
        self.report = AnalysisReport()
        self.sys = self.sw = self.lifted = self.cert = self.trace = None
        self.x0b = None
        self.options = {}

    def _timed(self, name, fn):
        self.report.stage = name
        t = time.perf_counter()
        try:
            return fn()
        finally:
            self.report.timings[name] = time.perf_counter() - t

    def check(self):
        def run():
            self.sys, self.options = load_input(self.args.system)
            self.x0b = x0_coordinate_bounds(self.sys)
            self.report.system = system_summary(self.sys, guards_disjoint(self.sys))
            self.report.system["x0_coordinate_bounds"] = list(self.x0b.coords)
            bad = partition_spot_check(self.sys)
            self.report.system["partition_spot_check"] = {"violations": bad[:20],
                                                          "count": len(bad)}
            if bad:
                raise PartitionError(f"{len(bad)} sampled points break the partition, "
                                     f"e.g. {bad[0]['point']} in cells {bad[0]['cells']}")
        self._timed("check", run)

    def switches(self):
        def run():
            self.sw = switch_sets(self.sys)
            self.lifted = build_lifted(self.sys, self.sw)
            self.report.switches = switches_summary(self.sys, self.sw)
        self._timed("switches", run)

    def synthesize(self):
        def run():
            if getattr(self.args, "cert", None):
                self.cert = load_certificate(read_input(self.args.cert))
            else:
                weights = tuple(getattr(self.args, "weights", None) or (1.0, 1.0))
                self.cert = synthesize(self.sys, self.sw, self.lifted,
                                       _homogeneous(self.args, self.options), weights)
            self.report.certificate = certificate_summary(self.cert)
            rep = verify_certificate(self.cert, self.sys, self.sw, self.lifted,
                                     raise_on_failure=False)
            self.report.verification = rep.to_dict()
            if not rep.ok:
                err = CertificateRejected(f"{c.name} ({c.detail}, value {c.value})"
                                          for c in rep.failures)
                if getattr(self.args, "force", False):
                    log.warning("%s; continuing because of --force", err)
                    self.report.error = _error_dict(err, self.report.stage)
                else:
                    raise err
        self._timed("synthesize", run)

    def iterate(self):
        def run():
            self.trace = iterate(self.cert, self.lifted, self.sw, self.x0b,
                                 self.args.max_iters, self.args.tol)
            self.report.iteration = trace_summary(self.trace)
            self.report.invariant = invariant_summary(self.cert, self.trace.final)
            self.report.conclusions = conclusions(self.sw, self.trace)
        self._timed("iterate", run)

    def simulate(self, omega=None):
        def run():
            sample = simulate(self.sys, self.args.grid, self.args.steps)
            w = self.trace.final if omega is None else omega
            bad = check_membership(sample, self.sys, self.cert, w)
            self.report.validation = {
                "grid": self.args.grid, "steps": self.args.steps, "points": len(sample),
                "violations": [v.to_dict() for v in bad[:50]], "violation_count": len(bad),
            }
            return sample, bad
        return self._timed("simulate", run)


def _error_dict(exc: PwaCertifyError, stage: str) -> dict:
    out = {"type": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code,
           "stage": stage}
    if getattr(exc, "location", None):
        out["location"] = exc.location
    if getattr(exc, "point", None) is not None:
        out["point"] = jsonable(exc.point)
    return out


def run_pipeline(args, stages=("check", "switches", "synthesize", "iterate", "simulate")):
    """Run ``stages`` in order.  Returns ``(report, exit_code)``; never raises package errors."""
    p = Pipeline(args)
    code = 0
    try:
        for name in stages:
            getattr(p, name)()
        if "simulate" in stages and p.report.validation.get("violation_count"):
            code = 50
        if p.report.error:  # forced past a rejected certificate
            code = p.report.error["exit_code"]
    except PwaCertifyError as exc:
        p.report.error = _error_dict(exc, p.report.stage)
        code = exc.exit_code
    return p, code


# -- output --------------------------------------------------------------------------


def _emit(args, payload: dict, text_lines: list[str]):
    out = json.dumps(jsonable(payload), indent=2, sort_keys=True)
    if getattr(args, "out", None):
        Path(args.out).write_text(out + "\n", encoding="utf-8")
    if args.json:
        print(out)
    else:
        for line in text_lines:
            print(line)


def _fmt(v) -> str:
    return "(" + ", ".join(f"{x:.4f}" for x in np.asarray(v, dtype=float)) + ")"


def _summary_lines(rep: AnalysisReport, code: int) -> list[str]:
    lines = []
    s = rep.system
    if s:
        lines.append(f"system: d={s['dimension']}, {len(s['cells'])} cells")
    if rep.switches:
        sw = ", ".join(f"({i},{j})" for i, j in rep.switches["sw_bar"])
        lines.append(f"possible switches: {sw}; initial cells: {rep.switches['in']}")
    if rep.certificate:
        c = rep.certificate
        lines.append(f"certificate: alpha = {c['alpha']:.6g}, beta = {c['beta']:.6g}"
                     f"{' (homogeneous)' if c['homogeneous'] else ''}")
    if rep.verification:
        fails = [ch["name"] for ch in rep.verification["checks"] if ch["passed"] is False]
        lines.append("verification: " + ("ok" if not fails else "FAILED " + "; ".join(fails)))
    if rep.iteration:
        it = rep.iteration
        for r in it["records"]:
            lines.append(f"  w^{r['k']} = {_fmt(r['omega'])}")
        lines.append(f"termination: {it['termination']} after {it['iterations']} policy LPs")
    if rep.invariant:
        lines.append("invariant: " + rep.invariant["description"])
    lines.extend(rep.conclusions)
    if rep.validation:
        v = rep.validation
        lines.append(f"simulation: {v['points']} points, {v['violation_count']} violations")
    if rep.error:
        lines.append(f"error [{rep.error['stage']}]: {rep.error['message']}")
    lines.append(f"exit code {code}")
    return lines


# -- subcommands -----------------------------------------------------------------------


def cmd_check(args) -> int:
    p, code = run_pipeline(args, ("check",))
    _emit(args, p.report.to_dict(), _summary_lines(p.report, code))
    return code


def cmd_switches(args) -> int:
    p, code = run_pipeline(args, ("check", "switches"))
    _emit(args, p.report.to_dict(), _summary_lines(p.report, code))
    return code


def cmd_synthesize(args) -> int:
    args.cert = None
    p, code = run_pipeline(args, ("check", "switches", "synthesize"))
    out, args.out = args.out, None
    _emit(args, p.report.to_dict(), _summary_lines(p.report, code))
    if out and p.cert is not None:
        Path(out).write_text(dump_certificate(p.cert) + "\n", encoding="utf-8")
    return code


def cmd_iterate(args) -> int:
    p, code = run_pipeline(args)
    _emit(args, p.report.to_dict(), _summary_lines(p.report, code))
    return code


def cmd_simulate(args) -> int:
    if not args.check:
        p, code = run_pipeline(args, ("check",))
        if code:
            _emit(args, p.report.to_dict(), _summary_lines(p.report, code))
            return code
        try:
            sample = simulate(p.sys, args.grid, args.steps)
        except PwaCertifyError as exc:
            print(json.dumps(_error_dict(exc, "simulate")))
            return exc.exit_code
        sq = np.sum(sample.points ** 2, axis=1)
        payload = {"points": len(sample), "grid": args.grid, "steps": args.steps,
                   "max_sq_norm": float(sq.max()) if len(sq) else None,
                   "coordinate_sq_max": (sample.points ** 2).max(axis=0).tolist()}
        _emit(args, payload, [json.dumps(payload)])
        return 0
    prior = AnalysisReport.from_json(Path(args.check).read_text(encoding="utf-8"))
    p, code = run_pipeline(args, ("check",))
    if code:
        _emit(args, p.report.to_dict(), _summary_lines(p.report, code))
        return code
    p.cert = certificate_from_summary(prior.certificate)
    omega = np.array(prior.invariant["omega"], dtype=float)
    try:
        _, bad = p.simulate(omega)
    except PwaCertifyError as exc:
        print(json.dumps(_error_dict(exc, "simulate")))
        return exc.exit_code
    for v in bad:
        print(json.dumps(v.to_dict()))
    if not bad and not args.json:
        print(f"no violations among {p.report.validation['points']} simulated points")
    if args.json:
        print(json.dumps(jsonable(p.report.validation), indent=2))
    return 50 if bad else 0


def cmd_plot(args) -> int:
    p, code = run_pipeline(args, ("check",))
    if code:
        _emit(args, p.report.to_dict(), _summary_lines(p.report, code))
        return code
    prior = AnalysisReport.from_json(Path(args.report).read_text(encoding="utf-8"))
    cert = certificate_from_summary(prior.certificate)
    omega = np.array(prior.invariant["omega"], dtype=float)
    try:
        sample = simulate(p.sys, args.grid, args.steps) if args.steps >= 0 else None
    except PwaCertifyError as exc:
        print(json.dumps(_error_dict(exc, "simulate")))
        return exc.exit_code
    text = emit_plot_data(p.sys, cert, omega, sample, args.resolution)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pwa-certify", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, solve=False, sim=False):
        p.add_argument("system", help="system JSON file, or a bundled fixture name "
                                      "(quadrants, affine2)")
        p.add_argument("--json", action="store_true", help="print the JSON report")
        p.add_argument("--out", help="write the result to this file")
        if solve:
            g = p.add_mutually_exclusive_group()
            g.add_argument("--homogeneous", dest="homogeneous", action="store_const", const=True,
                           default=None, help="force q_i = 0")
            g.add_argument("--inhomogeneous", dest="homogeneous", action="store_const",
                           const=False, help="allow linear terms (overrides the file's option)")
            p.add_argument("--weights", type=float, nargs=2, metavar=("WA", "WB"),
                           help="minimize WA*alpha + WB*beta instead of alpha + beta")
        if sim:
            p.add_argument("--grid", type=int, default=41, help="seeds per axis (default 41)")
            p.add_argument("--steps", type=int, default=60, help="simulation horizon (default 60)")

    p = sub.add_parser("check", help="parse and sanity-check a system")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("switches", help="possible switches and initial cells")
    common(p)
    p.set_defaults(func=cmd_switches)

    p = sub.add_parser("synthesize", help="synthesize and verify a PQL certificate")
    common(p, solve=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("iterate", help="full pipeline with policy iteration")
    common(p, solve=True, sim=True)
    p.add_argument("--cert", help="use this certificate instead of synthesizing one")
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="fixed-point tolerance")
    p.add_argument("--force", action="store_true",
                   help="keep going after a rejected certificate (exit code still reports it)")
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("simulate", help="simulate from a grid of initial states")
    common(p, sim=True)
    p.add_argument("--check", metavar="REPORT", help="check the states against a report's bounds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot", help="CSV data for plotting the invariants")
    common(p, sim=True)
    p.add_argument("--report", required=True, help="report written by `iterate --out`")
    p.add_argument("--resolution", type=int, default=101, help="grid nodes per axis")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
