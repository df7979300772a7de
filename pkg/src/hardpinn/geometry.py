"""Domains, extended distance functions, normals and point samplers.

Every boundary shape answers three questions for a batch of points ``X`` of
shape (N, d):

* ``distance(X)`` -> ``(l, dl)``: the extended distance to the boundary piece
  and its gradient. ``l`` vanishes on the piece and is positive inside the
  domain.
* ``normal(X)`` -> ``(n, dn)``: a smooth extension of the domain's outward
  unit normal on that piece, with its Jacobian ``dn[:, i, j] = d n_i / d x_j``.
* ``sample_boundary(n, rng)`` -> ``(points, normals)``.

Sign conventions: circles and polygons are holes, so their distance is
measured outward from the hole and the domain normal points into the hole.
Boxes (intervals, rectangles) and balls are outer boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DISTANCE_MODES = ("exact", "anchored", "softmin")


class GeometryError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# soft minima


def soft_min(values, beta: float = 4.0, axis: int = 0):
    """LogSumExp soft minimum ``-(1/beta) log sum exp(-beta y)``."""
    y = np.asarray(values, dtype=np.float64)
    if y.size == 0 or y.shape[axis] == 0:
        raise ValueError("soft_min of an empty set")
    if beta <= 0:
        raise ValueError("beta must be positive")
    m = np.min(y, axis=axis, keepdims=True)
    s = np.sum(np.exp(-beta * (y - m)), axis=axis, keepdims=True)
    return np.squeeze(m - np.log(s) / beta, axis=axis)


def soft_min_weights(values, beta: float = 4.0, axis: int = 0):
    """Partial derivatives of :func:`soft_min` (a softmax of ``-beta y``)."""
    y = np.asarray(values, dtype=np.float64)
    m = np.min(y, axis=axis, keepdims=True)
    e = np.exp(-beta * (y - m))
    return e / e.sum(axis=axis, keepdims=True)


def _prod_except(a, axis=0):
    """Product over ``axis`` leaving one entry out, without division."""
    a = np.moveaxis(a, axis, 0)
    k = a.shape[0]
    pre = np.ones_like(a)
    suf = np.ones_like(a)
    for i in range(1, k):
        pre[i] = pre[i - 1] * a[i - 1]
        suf[k - 1 - i] = suf[k - i] * a[k - i]
    return np.moveaxis(pre * suf, 0, axis)


def anchored_soft_min(values, beta: float = 4.0, axis: int = 0):
    """Soft minimum that is exactly zero whenever any argument is zero.

    ``-(1/beta) log(1 - prod_k (1 - exp(-beta y_k)))``. For large arguments it
    approaches the LogSumExp soft minimum; it is bounded above by ``min(y)``
    and smooth for ``y >= 0``. Negative inputs are clamped to zero.
    """
    return _anchored(values, beta, axis)[0]


def anchored_soft_min_weights(values, beta: float = 4.0, axis: int = 0):
    return _anchored(values, beta, axis)[1]


def _anchored(values, beta, axis):
    y = np.maximum(np.asarray(values, dtype=np.float64), 0.0)
    if y.size == 0 or y.shape[axis] == 0:
        raise ValueError("soft_min of an empty set")
    # q = 1 - prod(1 - e_k) = -expm1(s) with s = sum log(1 - e_k). Near the
    # boundary (beta min y <= 1) q >= 1/e and the direct form is accurate; far
    # from it everything is rescaled by exp(-beta min y) to avoid underflow.
    m = np.min(y, axis=axis, keepdims=True)
    e = np.exp(-beta * y)
    one_minus = -np.expm1(-beta * y)
    near = beta * m <= 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(e < 0.5, np.log1p(-e), np.log(one_minus))
        s = np.sum(logs, axis=axis, keepdims=True)
        q = -np.expm1(s)
        direct = -np.log1p(-np.exp(s)) / beta
        w_direct = e * _prod_except(one_minus, axis=axis) / q
        et = np.exp(-beta * (y - m))
        z = np.sum(et * np.where(e > 0, -logs / e, 1.0), axis=axis, keepdims=True)  # -s exp(beta m)
        ratio = np.where(s < 0, np.expm1(s) / s, 1.0)  # q / -s
        scaled = m - (np.log(z) + np.log(ratio)) / beta
        w_scaled = et * _prod_except(one_minus, axis=axis) / (z * ratio)
    value = np.where(near, direct, scaled)
    weights = np.where(near, w_direct, w_scaled)
    return np.squeeze(value, axis=axis), weights


def combine_distances(ys, grads, mode: str = "anchored", beta: float = 4.0):
    """Merge K distances ``ys`` (K, N) with gradients ``grads`` (K, N, d)."""
    ys = np.asarray(ys, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if ys.shape[0] == 1:
        return ys[0], grads[0]
    if mode == "exact":
        idx = np.argmin(ys, axis=0)
        cols = np.arange(ys.shape[1])
        return ys[idx, cols], grads[idx, cols]
    if mode == "softmin":
        w = soft_min_weights(ys, beta)
        return soft_min(ys, beta), np.einsum("kn,knd->nd", w, grads)
    if mode == "anchored":
        value, w = _anchored(ys, beta, 0)
        return value, np.einsum("kn,knd->nd", w, grads)
    raise ValueError(f"unknown distance mode {mode!r}; expected one of {DISTANCE_MODES}")


def _unit(v, axis=-1):
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / norm, norm


def _as_points(X, d):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :] if d > 1 or X.size == 1 else X[:, None]
    if X.shape[-1] != d:
        raise GeometryError(f"expected points of dimension {d}, got shape {X.shape}")
    return X


# ---------------------------------------------------------------------------
# shapes


class Shape:
    dim: int
    #: True for holes cut out of the domain, False for outer boundaries
    is_hole: bool = False

    def distance(self, X, mode="anchored", beta=4.0):
        raise NotImplementedError

    def exact_distance(self, X):
        return self.distance(X, mode="exact")[0]

    def normal(self, X):
        raise NotImplementedError

    def sample_boundary(self, n, rng):
        raise NotImplementedError

    def contains(self, X):
        raise NotImplementedError

    def bbox(self):
        raise NotImplementedError


_FACE_NAMES = {1: ("lo", "hi"), 2: ("left", "right", "bottom", "top")}


class Box(Shape):
    """Axis-aligned box used as an outer boundary; ``faces`` selects a subset.

    Faces are ``(axis, upper)`` pairs: ``upper=False`` is the face at the
    lower bound of ``axis``.
    """

    def __init__(self, lo, hi, faces=None):
        self.lo = np.asarray(lo, dtype=np.float64).ravel()
        self.hi = np.asarray(hi, dtype=np.float64).ravel()
        if self.lo.shape != self.hi.shape or np.any(self.lo >= self.hi):
            raise GeometryError(f"invalid box bounds {self.lo} .. {self.hi}")
        self.dim = self.lo.size
        all_faces = [(a, u) for a in range(self.dim) for u in (False, True)]
        self.faces = all_faces if faces is None else [tuple(f) for f in faces]
        if not self.faces or any(f not in all_faces for f in self.faces):
            raise GeometryError(f"invalid face selection {faces}")

    def __repr__(self):
        return f"{type(self).__name__}(lo={self.lo.tolist()}, hi={self.hi.tolist()}, faces={self.faces})"

    def _face_distances(self, X):
        ys, gs, ns = [], [], []
        for axis, upper in self.faces:
            e = np.zeros(self.dim)
            e[axis] = 1.0
            if upper:
                ys.append(self.hi[axis] - X[:, axis])
                gs.append(np.broadcast_to(-e, X.shape))
                ns.append(e)
            else:
                ys.append(X[:, axis] - self.lo[axis])
                gs.append(np.broadcast_to(e, X.shape))
                ns.append(-e)
        return np.array(ys), np.array(gs), np.array(ns)

    def distance(self, X, mode="anchored", beta=4.0):
        X = _as_points(X, self.dim)
        ys, gs, _ = self._face_distances(X)
        return combine_distances(ys, gs, mode, beta)

    def normal(self, X):
        """Face normals blended with weights ``prod_{j != k} y_j``.

        On face ``k`` every other weight carries the factor ``y_k = 0``, so
        the blend equals that face's normal exactly; inside it is smooth away
        from the (measure-zero) set where the blend vanishes.
        """
        X = _as_points(X, self.dim)
        ys, gs, ns = self._face_distances(X)
        k = len(self.faces)
        if k == 1:
            n = np.broadcast_to(ns[0], X.shape).copy()
            return n, np.zeros(X.shape + (self.dim,))
        w = _prod_except(ys, axis=0)  # (K, N)
        m = np.einsum("kn,kd->nd", w, ns)
        # d w_k / d x = sum_{j != k} prod_{i not in {k, j}} y_i * grad y_j
        dw = np.zeros((k,) + X.shape)
        for kk in range(k):
            others = [j for j in range(k) if j != kk]
            for j in others:
                rest = [i for i in others if i != j]
                coef = np.prod(ys[rest], axis=0) if rest else np.ones(X.shape[0])
                dw[kk] += coef[:, None] * gs[j]
        dm = np.einsum("ki,knj->nij", ns, dw)
        n, norm = _unit(m)
        bad = norm[:, 0] < 1e-300
        if np.any(bad):
            # blend degenerates (corners, centre): fall back to the nearest face
            idx = np.argmin(ys[:, bad], axis=0)
            n[bad] = ns[idx]
            norm[bad] = 1.0
            dm[bad] = 0.0
        proj = np.eye(self.dim)[None] - n[:, :, None] * n[:, None, :]
        dn = np.einsum("nij,njk->nik", proj, dm) / norm[:, :, None]
        return n, dn

    def sample_boundary(self, n, rng):
        lengths = []
        for axis, _ in self.faces:
            span = np.delete(self.hi - self.lo, axis)
            lengths.append(np.prod(span) if span.size else 1.0)
        lengths = np.asarray(lengths)
        cum = np.cumsum(lengths) / lengths.sum()
        u = rng.random((n, self.dim + 1))
        which = np.searchsorted(cum, u[:, 0], side="right")
        which = np.minimum(which, len(self.faces) - 1)
        X = self.lo + u[:, 1:] * (self.hi - self.lo)
        N = np.zeros_like(X)
        for f, (axis, upper) in enumerate(self.faces):
            sel = which == f
            X[sel, axis] = self.hi[axis] if upper else self.lo[axis]
            N[sel, axis] = 1.0 if upper else -1.0
        return X, N

    def contains(self, X):
        X = _as_points(X, self.dim)
        return np.all((X >= self.lo) & (X <= self.hi), axis=1)

    def bbox(self):
        return self.lo.copy(), self.hi.copy()


def Interval(x0, x1, sides=None):
    """1D interval [x0, x1]; ``sides`` picks ``"lo"``/``"hi"`` end points."""
    names = {"lo": (0, False), "hi": (0, True)}
    faces = None if sides is None else [names[s] for s in sides]
    return Box([x0], [x1], faces)


def Rectangle(a1, a2, b1, b2, sides=None):
    """[a1, a2] x [b1, b2]; ``sides`` is a subset of left/right/bottom/top."""
    names = {"left": (0, False), "right": (0, True), "bottom": (1, False), "top": (1, True)}
    if a1 >= a2 or b1 >= b2:
        raise GeometryError("rectangle requires a1 < a2 and b1 < b2")
    faces = None if sides is None else [names[s] for s in sides]
    return Box([a1, b1], [a2, b2], faces)


def HalfOpenRectangle(a1, a2, b1, b2, excluded="right"):
    """Rectangle boundary with one side removed (e.g. inlet + top + bottom)."""
    sides = [s for s in ("left", "right", "bottom", "top") if s != excluded]
    if len(sides) != 3:
        raise GeometryError(f"unknown side {excluded!r}")
    return Rectangle(a1, a2, b1, b2, sides=sides)


class Circle(Shape):
    """Circular hole (cell, pipe): distance ``|x - c| - r``."""

    is_hole = True

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=np.float64).ravel()
        self.radius = float(radius)
        if self.radius <= 0:
            raise GeometryError("radius must be positive")
        self.dim = self.center.size

    def __repr__(self):
        return f"Circle(center={self.center.tolist()}, radius={self.radius})"

    def distance(self, X, mode="anchored", beta=4.0):
        X = _as_points(X, self.dim)
        u, rho = _unit(X - self.center)
        return rho[:, 0] - self.radius, u

    def normal(self, X):
        X = _as_points(X, self.dim)
        u, rho = _unit(X - self.center)
        proj = np.eye(self.dim)[None] - u[:, :, None] * u[:, None, :]
        return -u, -proj / rho[:, :, None]

    def sample_boundary(self, n, rng):
        if self.dim != 2:
            u = rng.standard_normal((n, self.dim))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
        else:
            th = 2.0 * np.pi * rng.random((n, 1))
            u = np.hstack([np.cos(th), np.sin(th)])
        return self.center + self.radius * u, -u

    def contains(self, X):
        X = _as_points(X, self.dim)
        return np.linalg.norm(X - self.center, axis=1) <= self.radius

    def bbox(self):
        return self.center - self.radius, self.center + self.radius


class Ball(Shape):
    """Outer d-ball: distance ``r - |x - c|``; normal points away from the centre."""

    def __init__(self, center, radius, dim=None):
        self.center = np.asarray(center, dtype=np.float64).ravel()
        if dim is not None and self.center.size == 1 and dim > 1:
            self.center = np.full(dim, self.center[0])
        self.radius = float(radius)
        if self.radius <= 0:
            raise GeometryError("radius must be positive")
        self.dim = self.center.size

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius}, dim={self.dim})"

    def distance(self, X, mode="anchored", beta=4.0):
        X = _as_points(X, self.dim)
        u, rho = _unit(X - self.center)
        return self.radius - rho[:, 0], -u

    def normal(self, X):
        X = _as_points(X, self.dim)
        u, rho = _unit(X - self.center)
        proj = np.eye(self.dim)[None] - u[:, :, None] * u[:, None, :]
        return u, proj / rho[:, :, None]

    def sample_boundary(self, n, rng):
        u = rng.standard_normal((n, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return self.center + self.radius * u, u

    def sample_interior(self, n, rng):
        g = rng.standard_normal((n, self.dim + 2))
        u = g[:, : self.dim] / np.linalg.norm(g, axis=1, keepdims=True)
        return self.center + self.radius * u

    def contains(self, X):
        X = _as_points(X, self.dim)
        return np.linalg.norm(X - self.center, axis=1) <= self.radius

    def bbox(self):
        return self.center - self.radius, self.center + self.radius


class Polygon(Shape):
    """Closed polygonal hole (e.g. an airfoil) with exact point-to-polygon distance."""

    is_hole = True

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError("polygon vertices must have shape (n, 2)")
        if np.allclose(v[0], v[-1]):
            v = v[:-1]
        if len(v) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        self.vertices = v
        self.dim = 2
        self.a = v
        self.b = np.roll(v, -1, axis=0)
        self.edge = self.b - self.a
        self.edge_len2 = np.einsum("kd,kd->k", self.edge, self.edge)
        if np.any(self.edge_len2 == 0):
            raise GeometryError("polygon has repeated consecutive vertices")
        if _self_intersects(self.a, self.b):
            raise GeometryError("polygon is self-intersecting")
        area2 = np.sum(self.a[:, 0] * self.b[:, 1] - self.b[:, 0] * self.a[:, 1])
        # outward normal of the polygon itself (right-hand normal for clockwise order)
        rot = np.stack([self.edge[:, 1], -self.edge[:, 0]], axis=1)
        self.outward = (rot if area2 > 0 else -rot) / np.sqrt(self.edge_len2)[:, None]

    def __repr__(self):
        return f"Polygon({len(self.vertices)} vertices)"

    def _nearest(self, X):
        rel = X[:, None, :] - self.a[None]
        t = np.einsum("nkd,kd->nk", rel, self.edge) / self.edge_len2
        t = np.clip(t, 0.0, 1.0)
        q = self.a[None] + t[:, :, None] * self.edge[None]
        d2 = np.sum((X[:, None, :] - q) ** 2, axis=2)
        k = np.argmin(d2, axis=1)
        rows = np.arange(len(X))
        return np.sqrt(d2[rows, k]), q[rows, k], t[rows, k], k

    def distance(self, X, mode="anchored", beta=4.0):
        X = _as_points(X, self.dim)
        dist, q, _, k = self._nearest(X)
        grad = self.outward[k].copy()
        off = dist > 1e-12
        grad[off] = (X[off] - q[off]) / dist[off, None]
        return dist, grad

    def normal(self, X):
        X = _as_points(X, self.dim)
        dist, q, t, k = self._nearest(X)
        n = -self.outward[k]
        dn = np.zeros((len(X), 2, 2))
        vertex = (dist > 1e-12) & ((t <= 0.0) | (t >= 1.0))
        if np.any(vertex):
            u = (X[vertex] - q[vertex]) / dist[vertex, None]
            n[vertex] = -u
            proj = np.eye(2)[None] - u[:, :, None] * u[:, None, :]
            dn[vertex] = -proj / dist[vertex, None, None]
        return n, dn

    def sample_boundary(self, n, rng):
        lengths = np.sqrt(self.edge_len2)
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        s = rng.random(n) * cum[-1]
        k = np.minimum(np.searchsorted(cum, s, side="right") - 1, len(lengths) - 1)
        t = (s - cum[k]) / lengths[k]
        X = self.a[k] + t[:, None] * self.edge[k]
        return X, -self.outward[k]

    def contains(self, X):
        X = _as_points(X, self.dim)
        x, y = X[:, 0:1], X[:, 1:2]
        ax, ay = self.a[:, 0], self.a[:, 1]
        bx, by = self.b[:, 0], self.b[:, 1]
        crosses = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (y - ay) * (bx - ax) / (by - ay)
        inside = np.sum(crosses & (x < xint), axis=1) % 2 == 1
        on_edge = self.distance(X, "exact")[0] <= 1e-12
        return inside | on_edge

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _self_intersects(a, b):
    n = len(a)
    for i in range(n):
        p, r = a[i], b[i] - a[i]
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share a vertex
            q, s = a[j], b[j] - a[j]
            denom = r[0] * s[1] - r[1] * s[0]
            if denom == 0:
                continue
            qp = q - p
            t = (qp[0] * s[1] - qp[1] * s[0]) / denom
            u = (qp[0] * r[1] - qp[1] * r[0]) / denom
            if 0 < t < 1 and 0 < u < 1:
                return True
    return False


def load_polygon(path) -> np.ndarray:
    """Read a two-column ``x y`` coordinate file (UIUC airfoil style).

    Lines that do not parse as two numbers (titles, headers) are skipped.
    """
    pts = []
    for line in Path(path).read_text().splitlines():
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            continue
        try:
            pts.append((float(parts[0]), float(parts[1])))
        except ValueError:
            continue
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts.pop()  # closed outline: the last line repeats the first vertex
    if len(pts) < 3:
        raise GeometryError(f"{path}: fewer than 3 distinct vertices")
    return np.asarray(pts)


# ---------------------------------------------------------------------------
# domains


@dataclass
class Domain:
    """Outer shape minus holes, with named boundary regions.

    ``regions`` maps a region id to the boundary shape it lives on; region
    distances are combined with ``distance_mode`` and soft-min ``beta``.
    """

    outer: Shape
    holes: list = field(default_factory=list)
    regions: dict = field(default_factory=dict)
    distance_mode: str = "anchored"
    beta: float = 4.0

    def __post_init__(self):
        if self.distance_mode not in DISTANCE_MODES:
            raise GeometryError(f"unknown distance mode {self.distance_mode!r}")
        self.dim = self.outer.dim
        for h in self.holes:
            if h.dim != self.dim:
                raise GeometryError("hole dimension differs from the outer shape")
        self._check_holes()

    def _check_holes(self, n=256):
        rng = np.random.default_rng(12345)
        for i, h in enumerate(self.holes):
            pts, _ = h.sample_boundary(n, rng)
            if not np.all(self.outer.contains(pts)) or np.any(
                self.outer.distance(pts, "exact")[0] <= 0
            ):
                raise GeometryError(f"hole {i} is not strictly inside the outer boundary")
            for j, other in enumerate(self.holes):
                if j != i and np.any(other.exact_distance(pts) <= 0):
                    raise GeometryError(f"holes {i} and {j} overlap or touch")

    @property
    def region_names(self):
        return list(self.regions)

    def region_distance(self, name, X):
        return self.regions[name].distance(X, self.distance_mode, self.beta)

    def distance_of(self, names, X):
        """Combined extended distance to the union of the named regions."""
        X = _as_points(X, self.dim)
        parts = [self.region_distance(nm, X) for nm in names]
        ys = np.array([p[0] for p in parts])
        gs = np.array([p[1] for p in parts])
        return combine_distances(ys, gs, self.distance_mode, self.beta)

    def contains(self, X, strict=True):
        X = _as_points(X, self.dim)
        ok = self.outer.contains(X)
        if strict:
            ok &= self.outer.exact_distance(X) > 0
        for h in self.holes:
            ok &= h.exact_distance(X) > 0
        return ok


def exact_distance(shape: Shape, x) -> np.ndarray:
    """Exact distance from point(s) ``x`` to ``shape``'s boundary (sign per shape role)."""
    d = shape.exact_distance(_as_points(x, shape.dim))
    return d[0] if np.ndim(x) <= 1 and shape.dim > 1 else d


def domain_distance(domain: Domain, X):
    """``l`` over the whole boundary: soft minimum of every region's distance."""
    return domain.distance_of(domain.region_names, X)[0]


def sample_interior(domain: Domain, n: int, seed: int, max_attempts: int = 1000, batch=None):
    """``n`` points uniform in the domain by rejection from the outer bounding box."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = domain.outer.bbox()
    batch = batch or max(4 * n, 256)
    got = []
    count = 0
    for _ in range(max_attempts):
        X = lo + rng.random((batch, domain.dim)) * (hi - lo)
        X = X[domain.contains(X)]
        got.append(X)
        count += len(X)
        if count >= n:
            return np.concatenate(got)[:n]
    raise SamplingError(
        f"rejection sampling produced {count}/{n} points after {max_attempts} batches"
    )


def sample_boundary(shape: Shape, n: int, seed: int):
    if n < 1:
        raise ValueError("n must be >= 1")
    return shape.sample_boundary(n, np.random.default_rng(seed))


def estimate_min_offregion_distance(
    domain: Domain, region, n_probe: int = 4096, seed: int = 0, among=None
):
    """Sampled ``min l^{region}(x)`` over ``x`` on the other boundary regions.

    ``among`` restricts the probes to a subset of region ids. Returns
    ``inf`` when there is no other region. Each probed region uses its own
    stream, so a larger ``n_probe`` only adds points and the estimate never
    increases.
    """
    others = [r for r in (among if among is not None else domain.region_names) if r != region]
    if not others:
        return float("inf")
    seeds = np.random.SeedSequence(seed).spawn(len(domain.region_names))
    best = np.inf
    for name in others:
        idx = domain.region_names.index(name)
        pts, _ = domain.regions[name].sample_boundary(n_probe, np.random.default_rng(seeds[idx]))
        l, _ = domain.region_distance(region, pts)
        best = min(best, float(np.min(l)))
    return best
