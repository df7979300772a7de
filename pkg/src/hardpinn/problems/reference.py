"""Reference (ground-truth) point tables stored as CSV."""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

_COORD = re.compile(r"^x(\d+)$")


class ReferenceError(ValueError):
    pass


class ReferenceTable:
    """Points ``x1..xd[, t]`` with field values; exact or nearest-point lookup."""

    def __init__(self, coords, values, field_names, has_time=False):
        self.coords = np.asarray(coords, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.coords.ndim != 2 or self.values.ndim != 2 or len(self.coords) != len(self.values):
            raise ReferenceError("coordinates and values must be 2D with matching rows")
        self.field_names = list(field_names)
        if self.values.shape[1] != len(self.field_names):
            raise ReferenceError("value columns do not match field names")
        self.has_time = bool(has_time)
        self.dim = self.coords.shape[1] - (1 if has_time else 0)
        self._index = {row.tobytes(): i for i, row in enumerate(self.coords)}
        self._tree = None

    @property
    def header(self):
        cols = [f"x{i + 1}" for i in range(self.dim)] + (["t"] if self.has_time else [])
        return cols + self.field_names

    def _query_points(self, X, t=None):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.has_time:
            if t is None:
                raise ReferenceError("table has a time column; pass t")
            t = np.broadcast_to(np.asarray(t, dtype=np.float64), (len(X),))
            X = np.hstack([X, t[:, None]])
        return X

    def lookup(self, X, t=None, mode="nearest"):
        Q = self._query_points(X, t)
        if mode == "exact":
            try:
                idx = [self._index[np.ascontiguousarray(q).tobytes()] for q in Q]
            except KeyError as exc:
                raise ReferenceError("query point not present in the table") from exc
            return self.values[idx]
        if mode != "nearest":
            raise ReferenceError(f"unknown lookup mode {mode!r}")
        if self._tree is None:
            self._tree = cKDTree(self.coords)
        _, idx = self._tree.query(Q)
        return self.values[idx]

    __call__ = lookup

    def save(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.header)
            for c, v in zip(self.coords, self.values):
                w.writerow([repr(float(a)) for a in c] + [repr(float(b)) for b in v])


def load_reference(path) -> ReferenceTable:
    """Read a CSV whose header is ``x1,...,xd[,t],field,...``."""
    path = Path(path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ReferenceError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    ncoord = 0
    while ncoord < len(header) and _COORD.match(header[ncoord]):
        if int(_COORD.match(header[ncoord]).group(1)) != ncoord + 1:
            raise ReferenceError(f"{path}: coordinate columns must be x1, x2, ... in order")
        ncoord += 1
    if ncoord == 0:
        raise ReferenceError(f"{path}: header must start with x1")
    has_time = ncoord < len(header) and header[ncoord] == "t"
    nlead = ncoord + (1 if has_time else 0)
    names = header[nlead:]
    if not names:
        raise ReferenceError(f"{path}: no field columns")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ReferenceError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise ReferenceError(f"{path}:{lineno}: {exc}") from exc
    if not data:
        raise ReferenceError(f"{path}: no data rows")
    arr = np.asarray(data)
    return ReferenceTable(arr[:, :nlead], arr[:, nlead:], names, has_time)
