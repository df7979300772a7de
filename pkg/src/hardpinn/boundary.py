"""Boundary conditions, their normalized linear form, null-space bases and
general solutions.

With the extra field ``p_j = grad u_j`` a Robin condition
``a u_j + b n.grad u_j = g`` becomes the linear constraint ``ntil . y = gtil``
on the block ``y = (u_j, p_j)``, where ``ntil = (a, b n) / sqrt(a^2 + b^2)`` and
``gtil = g / sqrt(a^2 + b^2)``. Every ``y = B z + ntil gtil`` with ``B`` spanning
the null space of ``ntil^T`` satisfies it, whatever ``z`` is.

Functions here accept plain arrays (one row per point) as well as
:class:`~hardpinn.autodiff.DualScalar` values, so the same code serves both
numerical checks and the differentiable ansatz.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import autodiff as ad
from .autodiff import DualScalar

UNIT_TOL = 1e-10
BASES = ("householder", "cross2d", "perp1d")

Coefficient = Union[float, Callable]


class BoundaryError(ValueError):
    pass


def _values(v):
    return np.asarray(ad.value_of(v), dtype=np.float64)


def _n_points(*items):
    for it in items:
        shape = np.shape(ad.value_of(it))
        if len(shape) >= 1:
            return shape[0]
    return None


def _as_column(v, n):
    """Turn a scalar, (N,) array or (N,) dual into an (N, 1) column."""
    if isinstance(v, DualScalar):
        if v.ndim == 0:
            v = DualScalar(np.broadcast_to(v.value, (n,)), ad.broadcast_to(v.tangent, (v.n_directions, n)))
        return v[:, None]
    v = np.asarray(v, dtype=np.float64)
    if n is None:
        return v.reshape(-1)[:, None] if v.ndim else v.reshape(1, 1)
    return np.broadcast_to(v, (n,)).reshape(n, 1)


def _concat(parts):
    if any(isinstance(p, DualScalar) for p in parts):
        return DualScalar.concat(parts, axis=-1)
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts], axis=-1)


def _scale_rows(s, m):
    """Multiply each row of ``m`` (N, K) by ``s`` (scalar or (N,))."""
    if np.ndim(ad.value_of(s)) == 0:
        return s * m
    return s[:, None] * m


def _row_dot(u, v):
    """Row-wise dot product of two (N, K) arrays or duals."""
    prod = u * v
    if isinstance(prod, DualScalar):
        return prod.sum(axis=-1)
    return np.sum(prod, axis=-1)


def normalize(a, b, g, n):
    """Return ``(ntil, gtil)`` for the condition ``a u + b n.p = g``.

    ``n`` has shape (N, d) (or (d,) for one point); ``a``, ``b``, ``g`` are
    scalars or per-point values. ``ntil`` has shape (N, d + 1).
    """
    single = np.ndim(ad.value_of(n)) == 1
    if single:
        n = n[None, :] if isinstance(n, DualScalar) else np.asarray(n, dtype=np.float64)[None, :]
    s2 = a * a + b * b
    if np.any(_values(s2) == 0):
        raise BoundaryError("a^2 + b^2 must be non-zero on the boundary region")
    s = ad.sqrt(s2)
    npts = _n_points(n, a, b, g)
    first = _as_column(a / s, npts)
    rest = _scale_rows(b / s, n)
    ntil = _concat([first, rest])
    gtil = g / s
    if single:
        ntil = ntil[0]
        if np.ndim(ad.value_of(gtil)) > 0:
            gtil = gtil[0]
    return ntil, gtil


def _check_unit(ntil):
    norms = np.linalg.norm(_values(ntil), axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise BoundaryError(f"ntil must have unit norm (max deviation {np.max(np.abs(norms - 1.0)):.3e})")


def householder_basis(ntil):
    """``I - ntil ntil^T`` for ``ntil`` of shape (K,) or (N, K)."""
    ntil = np.asarray(ntil, dtype=np.float64)
    _check_unit(ntil)
    k = ntil.shape[-1]
    return np.eye(k) - ntil[..., :, None] * ntil[..., None, :]


def cross2d_basis(ntil):
    """Three cross-product columns spanning the null space of a unit 3-vector."""
    ntil = np.asarray(ntil, dtype=np.float64)
    if ntil.shape[-1] != 3:
        raise BoundaryError("cross2d basis needs d + 1 = 3 components")
    _check_unit(ntil)
    n1, n2, n3 = ntil[..., 0], ntil[..., 1], ntil[..., 2]
    z = np.zeros_like(n1)
    cols = [np.stack([z, n3, -n2], -1), np.stack([-n3, z, n1], -1), np.stack([n2, -n1, z], -1)]
    return np.stack(cols, axis=-1)


def perp1d_basis(ntil):
    """The single column ``(n2, -n1)`` for d = 1."""
    ntil = np.asarray(ntil, dtype=np.float64)
    if ntil.shape[-1] != 2:
        raise BoundaryError("perp1d basis needs d + 1 = 2 components")
    _check_unit(ntil)
    return np.stack([ntil[..., 1], -ntil[..., 0]], axis=-1)[..., None]


def counterexample_basis(ntil):
    """A null-space 'basis' that degenerates when ``ntil_1 = 0``; kept as a negative example."""
    ntil = np.asarray(ntil, dtype=np.float64)
    n1, n2, n3 = ntil[..., 0], ntil[..., 1], ntil[..., 2]
    z = np.zeros_like(n1)
    return np.stack([np.stack([n2, -n1, z], -1), np.stack([n3, z, -n1], -1)], axis=-1)


def basis_width(basis: str, k: int) -> int:
    """Number of free coefficients a basis consumes for a block of size ``k``."""
    if basis == "householder":
        return k
    if basis == "cross2d":
        return 3
    if basis == "perp1d":
        return 1
    raise BoundaryError(f"unknown basis {basis!r}")


def _basis_entries(ntil, basis):
    """Nested list ``B[i][m]`` of per-point entries (arrays or duals)."""
    k = np.shape(ad.value_of(ntil))[-1]
    c = [ntil[:, i] for i in range(k)]
    if basis == "cross2d":
        if k != 3:
            raise BoundaryError("cross2d basis needs d + 1 = 3 components")
        return [[0.0, -c[2], c[1]], [c[2], 0.0, -c[0]], [-c[1], c[0], 0.0]]
    if basis == "perp1d":
        if k != 2:
            raise BoundaryError("perp1d basis needs d + 1 = 2 components")
        return [[c[1]], [-c[0]]]
    raise BoundaryError(f"unknown basis {basis!r}")


def general_solution(ntil, gtil, z, basis: str = "householder"):
    """``B(x) z + ntil gtil`` row by row.

    ``ntil`` is (N, K), ``gtil`` scalar or (N,), ``z`` the sub-network output
    of shape (N, basis_width). For the householder basis the product is
    evaluated as ``z + ntil (gtil - ntil.z)``, which equals
    ``(I - ntil ntil^T) z + ntil gtil`` without forming the matrix.
    """
    if basis == "householder":
        _check_unit(ntil)
        shift = gtil - _row_dot(ntil, z)
        return z + _scale_rows(shift, ntil)
    entries = _basis_entries(ntil, basis)
    k = len(entries)
    npts = _n_points(ntil, z)
    cols = []
    for i in range(k):
        acc = ntil[:, i] * gtil
        for m, bim in enumerate(entries[i]):
            if isinstance(bim, float) and bim == 0.0:
                continue
            acc = acc + bim * z[:, m]
        cols.append(_as_column(acc, npts))
    return _concat(cols)


# ---------------------------------------------------------------------------
# condition descriptions


def _evaluate(coef, x, t):
    return coef(x, t) if callable(coef) else float(coef)


class FieldLayout:
    """Column positions of each field and its extra field in the stacked output."""

    def __init__(self, extra_flags, dim):
        self.dim = dim
        self.extra = tuple(bool(e) for e in extra_flags)
        self.u_index = []
        self.p_index = []
        pos = 0
        for e in self.extra:
            self.u_index.append(pos)
            pos += 1
            if e:
                self.p_index.append(list(range(pos, pos + dim)))
                pos += dim
            else:
                self.p_index.append(None)
        self.width = pos

    @property
    def n_fields(self):
        return len(self.extra)

    def block(self, field):
        p = self.p_index[field]
        return [self.u_index[field]] + (p or [])


@dataclass
class BoundaryCondition:
    """``a u_j + b (n . grad u_j) = g`` on one region.

    ``a``, ``b`` and ``g`` are constants or callables ``f(x, t)`` that accept
    arrays or duals (``t`` is ``None`` for steady problems).
    """

    region: str
    a: Coefficient = 1.0
    b: Coefficient = 0.0
    g: Coefficient = 0.0
    field: int = 0

    def __post_init__(self):
        if not callable(self.a) and not callable(self.b) and float(self.a) == 0 and float(self.b) == 0:
            raise BoundaryError(f"region {self.region!r}: a and b cannot both vanish")

    @classmethod
    def dirichlet(cls, region, g=0.0, field=0):
        return cls(region, 1.0, 0.0, g, field)

    @classmethod
    def neumann(cls, region, g=0.0, field=0):
        return cls(region, 0.0, 1.0, g, field)

    @classmethod
    def robin(cls, region, a, b, g, field=0):
        return cls(region, a, b, g, field)

    @property
    def kind(self):
        if not callable(self.b) and float(self.b) == 0:
            return "dirichlet"
        if not callable(self.a) and float(self.a) == 0:
            return "neumann"
        return "robin"

    def block(self, layout: FieldLayout):
        if layout.p_index[self.field] is None:
            if self.kind != "dirichlet":
                raise BoundaryError(
                    f"region {self.region!r}: a derivative condition needs the extra field of field {self.field}"
                )
            return [layout.u_index[self.field]]
        return layout.block(self.field)

    def coefficients(self, x, t=None):
        return _evaluate(self.a, x, t), _evaluate(self.b, x, t), _evaluate(self.g, x, t)

    def constraint(self, x, t, n, layout: FieldLayout):
        """``(ntil, gtil)`` over this condition's block at points ``x``."""
        a, b, g = self.coefficients(x, t)
        if layout.p_index[self.field] is None:
            npts = _n_points(x)
            s = ad.sqrt(a * a)
            return _as_column(a / s, npts), g / s
        return normalize(a, b, g, n)

    def residual(self, y_block, n, x, t=None):
        """Unnormalized residual ``a u + b n.p - g`` for a stacked (N, K) block."""
        a, b, g = self.coefficients(x, t)
        r = a * y_block[:, 0] - g
        if np.shape(ad.value_of(y_block))[-1] > 1:
            r = r + _row_dot(y_block[:, 1:], n) * b
        return r


@dataclass
class NormalComponentBC:
    """``n . (u_f1, ..., u_fd) = g`` on one region, e.g. a slip wall."""

    region: str
    fields: tuple
    g: Coefficient = 0.0

    def block(self, layout: FieldLayout):
        if len(self.fields) != layout.dim:
            raise BoundaryError("normal-component condition needs one field per spatial dimension")
        return [layout.u_index[f] for f in self.fields]

    def constraint(self, x, t, n, layout: FieldLayout):
        return n, _evaluate(self.g, x, t)

    def residual(self, y_block, n, x, t=None):
        return _row_dot(y_block, n) - _evaluate(self.g, x, t)


@dataclass
class PeriodicBC:
    """``y(lo) = y(hi)`` along ``axis`` for the listed fields (soft loss only)."""

    fields: tuple
    axis: int = 0
    include_derivative: bool = True
    region: str = "periodic"


# ---------------------------------------------------------------------------
# parameter-function extension


class IdwExtension:
    """Inverse-distance-weighted extension of boundary samples to the domain.

    ``space="identity"`` interpolates in the original coordinates;
    ``space="polar"`` concatenates polar coordinates about each reference point.
    Calling with a dual returns the interpolant with exact tangents.
    """

    def __init__(self, points, values, power: float = 2.0, space: str = "identity", references=None):
        self.points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        self.values = np.asarray(values, dtype=np.float64).ravel()
        if len(self.values) < 1 or len(self.values) != len(self.points):
            raise BoundaryError("need at least one (point, value) sample and matching lengths")
        if space not in ("identity", "polar"):
            raise BoundaryError(f"unknown interpolation space {space!r}")
        if space == "polar":
            if references is None:
                raise BoundaryError("polar space needs reference points")
            self.references = np.atleast_2d(np.asarray(references, dtype=np.float64))
        self.power = float(power)
        self.space = space
        self.features, _ = self._map(self.points)

    def _map(self, X):
        if self.space == "identity":
            return X, None
        feats, jacs = [], []
        for c in self.references:
            rel = X - c
            r2 = np.sum(rel * rel, axis=1)
            r = np.sqrt(r2)
            theta = np.arctan2(rel[:, 1], rel[:, 0])
            safe_r = np.where(r > 0, r, 1.0)
            safe_r2 = np.where(r2 > 0, r2, 1.0)
            feats += [r, theta]
            jacs += [rel / safe_r[:, None], np.stack([-rel[:, 1], rel[:, 0]], 1) / safe_r2[:, None]]
        return np.stack(feats, 1), np.stack(jacs, 1)  # (N, F), (N, F, d)

    def value_and_grad(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        phi, jac = self._map(X)
        delta = phi[:, None, :] - self.features[None]
        dist = np.linalg.norm(delta, axis=2)
        hit = dist == 0
        exact = hit.any(axis=1)
        safe = np.where(hit, 1.0, dist)
        w = safe ** -self.power
        wsum = w.sum(axis=1)
        f = (w @ self.values) / wsum
        # d w_s / d phi = -p |delta|^(-p-2) delta
        dw = -self.power * (safe ** (-self.power - 2.0))[:, :, None] * delta
        grad_phi = np.einsum("ns,nsf->nf", self.values[None] - f[:, None], dw) / wsum[:, None]
        grad = grad_phi if jac is None else np.einsum("nf,nfd->nd", grad_phi, jac)
        if np.any(exact):
            idx = np.argmax(hit[exact], axis=1)
            f[exact] = self.values[idx]
            grad[exact] = 0.0
        return f, grad

    def __call__(self, x, t=None):
        if isinstance(x, DualScalar):
            X = np.asarray(ad.value_of(x.value))
            f, grad = self.value_and_grad(X)
            tang = np.asarray(ad.value_of(x.tangent))  # (k, N, d)
            return DualScalar(f, np.einsum("knd,nd->kn", tang, grad))
        f, _ = self.value_and_grad(x)
        return f


def extend_parameter_fn(samples, query, power: float = 2.0, space="identity", references=None):
    """IDW value at ``query`` from ``samples = [(point, value), ...]``."""
    pts = [np.atleast_1d(np.asarray(p, dtype=np.float64)) for p, _ in samples]
    vals = [v for _, v in samples]
    ext = IdwExtension(np.stack(pts), vals, power, space, references)
    q = np.atleast_1d(np.asarray(query, dtype=np.float64))
    single = q.ndim == 1 and (q.size == ext.points.shape[1])
    f = ext(q[None] if single else q)
    return float(f[0]) if single else f
