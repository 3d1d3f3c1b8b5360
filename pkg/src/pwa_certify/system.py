"""Piecewise affine discrete-time systems and their JSON file format.

A system is a partition of R^d into polyhedral cells, each cell carrying an
affine map, plus a polytope of initial states.  Each cell is given by rows
``a . x < b`` (strict) or ``a . x <= b`` (weak).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import (
    AmbiguousCellError,
    DimensionMismatchError,
    EmptyCellsError,
    NoCellError,
    SystemParseError,
)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ConstraintRow:
    a: tuple[float, ...]
    b: float
    strict: bool = False

    def holds(self, x: np.ndarray) -> bool:
        lhs = float(np.dot(self.a, x))
        return lhs < self.b if self.strict else lhs <= self.b


@dataclass(frozen=True)
class Polyhedron:
    """Intersection of strict and weak half-spaces, ``T x <=_{w,s} c``."""

    d: int
    rows: tuple[ConstraintRow, ...] = ()

    def __post_init__(self):
        for k, row in enumerate(self.rows):
            if len(row.a) != self.d:
                raise DimensionMismatchError(
                    f"row has length {len(row.a)}, expected {self.d}", f"rows[{k}].a"
                )

    @classmethod
    def from_arrays(cls, T, c, strict=None) -> "Polyhedron":
        T = np.atleast_2d(np.asarray(T, dtype=float))
        c = np.atleast_1d(np.asarray(c, dtype=float))
        if strict is None:
            strict = [False] * len(c)
        rows = tuple(
            ConstraintRow(tuple(float(v) for v in t), float(ci), bool(s))
            for t, ci, s in zip(T, c, strict)
        )
        return cls(T.shape[1], rows)

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "Polyhedron":
        d = len(lower)
        eye = np.eye(d)
        return cls.from_arrays(np.vstack([eye, -eye]), np.concatenate([upper, np.negative(lower)]))

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def T(self) -> np.ndarray:
        return np.array([r.a for r in self.rows], dtype=float).reshape(self.n, self.d)

    @property
    def c(self) -> np.ndarray:
        return np.array([r.b for r in self.rows], dtype=float)

    @property
    def strict_mask(self) -> np.ndarray:
        return np.array([r.strict for r in self.rows], dtype=bool)

    @property
    def T_s(self) -> np.ndarray:
        return self.T[self.strict_mask]

    @property
    def c_s(self) -> np.ndarray:
        return self.c[self.strict_mask]

    @property
    def T_w(self) -> np.ndarray:
        return self.T[~self.strict_mask]

    @property
    def c_w(self) -> np.ndarray:
        return self.c[~self.strict_mask]

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return all(row.holds(x) for row in self.rows)

    def closure_contains(self, x, tol: float = 0.0) -> bool:
        if not self.rows:
            return True
        return bool(np.all(self.T @ np.asarray(x, dtype=float) <= self.c + tol))

    def closure_mask(self, X: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Vectorized weak-closure membership for the rows of ``X``."""
        X = np.atleast_2d(X)
        if not self.rows:
            return np.ones(len(X), dtype=bool)
        return np.all(X @ self.T.T <= self.c + tol, axis=1)

    def membership_mask(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if not self.rows:
            return np.ones(len(X), dtype=bool)
        lhs = X @ self.T.T
        c = self.c
        strict = self.strict_mask
        ok = np.where(strict, lhs < c, lhs <= c)
        return np.all(ok, axis=1)


@dataclass(frozen=True, eq=False)
class AffineMap:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "b", _frozen(self.b))
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise DimensionMismatchError(f"A must be square, got shape {self.A.shape}")
        if self.b.shape != (self.A.shape[0],):
            raise DimensionMismatchError(
                f"b has shape {self.b.shape}, expected ({self.A.shape[0]},)"
            )
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise SystemParseError("non-finite entry in affine map")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    def __call__(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.b

    def __eq__(self, other):
        if not isinstance(other, AffineMap):
            return NotImplemented
        return np.array_equal(self.A, other.A) and np.array_equal(self.b, other.b)

    def __hash__(self):
        return hash((self.A.tobytes(), self.b.tobytes()))


@dataclass(frozen=True)
class Cell:
    name: str
    guard: Polyhedron
    dynamics: AffineMap


@dataclass(frozen=True)
class PwaSystem:
    """Cells are indexed 1..len(cells) in file order."""

    d: int
    initial: Polyhedron
    cells: tuple[Cell, ...]

    def __post_init__(self):
        if self.d < 1:
            raise DimensionMismatchError(f"dimension must be >= 1, got {self.d}")
        if not self.cells:
            raise EmptyCellsError("system has no cells", "cells")
        if self.initial.d != self.d:
            raise DimensionMismatchError("initial set dimension mismatch", "initial")
        for k, cell in enumerate(self.cells):
            if cell.guard.d != self.d:
                raise DimensionMismatchError("guard dimension mismatch", f"cells[{k}].guard")
            if cell.dynamics.d != self.d:
                raise DimensionMismatchError("dynamics dimension mismatch", f"cells[{k}].A")

    @property
    def indices(self) -> range:
        return range(1, len(self.cells) + 1)

    def cell(self, i: int) -> Cell:
        return self.cells[i - 1]

    def guard(self, i: int) -> Polyhedron:
        return self.cells[i - 1].guard

    def dynamics(self, i: int) -> AffineMap:
        return self.cells[i - 1].dynamics

    def locate(self, x) -> int:
        x = np.asarray(x, dtype=float)
        hits = [i for i in self.indices if self.guard(i).contains(x)]
        if not hits:
            raise NoCellError(f"point {x.tolist()} lies in no cell", point=x)
        if len(hits) > 1:
            raise AmbiguousCellError(
                f"point {x.tolist()} lies in cells {hits}", point=x, cells=hits
            )
        return hits[0]

    def locate_many(self, X: np.ndarray) -> np.ndarray:
        """Cell index per row of ``X``; raises on the first malformed point."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        masks = np.array([self.guard(i).membership_mask(X) for i in self.indices])
        counts = masks.sum(axis=0)
        bad = np.flatnonzero(counts != 1)
        if bad.size:
            self.locate(X[bad[0]])
        return np.argmax(masks, axis=0) + 1


def step(sys: PwaSystem, x) -> tuple[int, np.ndarray]:
    """One transition: returns the containing cell index and the image of ``x``."""
    i = sys.locate(x)
    return i, sys.dynamics(i)(x)


# -- file format -------------------------------------------------------------


def _number(value, where) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SystemParseError(f"expected a number, got {value!r}", where)
    v = float(value)
    if not math.isfinite(v):
        raise SystemParseError("non-finite number", where)
    return v


def _vector(value, where, length=None) -> list[float]:
    if not isinstance(value, list):
        raise SystemParseError(f"expected a list, got {type(value).__name__}", where)
    if length is not None and len(value) != length:
        raise DimensionMismatchError(f"has length {len(value)}, expected {length}", where)
    return [_number(v, f"{where}[{k}]") for k, v in enumerate(value)]


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict):
        raise SystemParseError("expected an object", where)
    if key not in obj:
        raise SystemParseError(f"missing field {key!r}", where)
    return obj[key]


def _polyhedron(obj, d, where) -> Polyhedron:
    rows_in = _require(obj, "rows", where)
    if not isinstance(rows_in, list):
        raise SystemParseError("rows must be a list", f"{where}.rows")
    rows = []
    for k, row in enumerate(rows_in):
        rw = f"{where}.rows[{k}]"
        a = _vector(_require(row, "a", rw), f"{rw}.a", d)
        b = _number(_require(row, "b", rw), f"{rw}.b")
        strict = row.get("strict", False)
        if not isinstance(strict, bool):
            raise SystemParseError("strict must be a boolean", f"{rw}.strict")
        rows.append(ConstraintRow(tuple(a), b, strict))
    return Polyhedron(d, tuple(rows))


def system_from_dict(data: dict[str, Any]) -> PwaSystem:
    d = _require(data, "dimension", "$")
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise SystemParseError(f"dimension must be a positive integer, got {d!r}", "$.dimension")
    initial = _polyhedron(_require(data, "initial", "$"), d, "$.initial")
    cells_in = _require(data, "cells", "$")
    if not isinstance(cells_in, list):
        raise SystemParseError("cells must be a list", "$.cells")
    if not cells_in:
        raise EmptyCellsError("system has no cells", "$.cells")
    cells = []
    for k, cell in enumerate(cells_in):
        where = f"$.cells[{k}]"
        name = cell.get("name", f"X{k + 1}") if isinstance(cell, dict) else None
        guard = _polyhedron(_require(cell, "guard", where), d, f"{where}.guard")
        A_in = _require(cell, "A", where)
        if not isinstance(A_in, list) or len(A_in) != d:
            raise DimensionMismatchError(f"A must have {d} rows", f"{where}.A")
        A = [_vector(r, f"{where}.A[{m}]", d) for m, r in enumerate(A_in)]
        b = _vector(cell.get("b", [0.0] * d), f"{where}.b", d)
        cells.append(Cell(str(name), guard, AffineMap(np.array(A), np.array(b))))
    return PwaSystem(d, initial, tuple(cells))


def load_system(text: str) -> PwaSystem:
    """Parse a system from its JSON text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemParseError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from exc
    return system_from_dict(data)


def load_system_file(path) -> PwaSystem:
    with open(path, encoding="utf-8") as fh:
        return load_system(fh.read())


def _polyhedron_dict(p: Polyhedron) -> dict:
    return {"rows": [{"a": list(r.a), "b": r.b, "strict": r.strict} for r in p.rows]}


def system_to_dict(sys: PwaSystem) -> dict:
    return {
        "dimension": sys.d,
        "initial": _polyhedron_dict(sys.initial),
        "cells": [
            {
                "name": c.name,
                "guard": _polyhedron_dict(c.guard),
                "A": c.dynamics.A.tolist(),
                "b": c.dynamics.b.tolist(),
            }
            for c in sys.cells
        ],
    }


def dump_system(sys: PwaSystem) -> str:
    return json.dumps(system_to_dict(sys), indent=2)


def make_system(initial: Polyhedron, cells: Iterable[tuple[str, Polyhedron, Any, Any]]) -> PwaSystem:
    """Convenience constructor from ``(name, guard, A, b)`` tuples."""
    built = tuple(Cell(name, guard, AffineMap(A, b)) for name, guard, A, b in cells)
    return PwaSystem(initial.d, initial, built)
