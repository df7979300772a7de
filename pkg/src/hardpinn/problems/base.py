"""Problem description shared by the built-in benchmarks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import autodiff as ad
from ..ansatz import FieldState
from ..autodiff import DualScalar
from ..boundary import FieldLayout, PeriodicBC
from ..geometry import Domain


class ProblemError(ValueError):
    pass


@dataclass
class ProblemSpec:
    """A PDE system in extra-field form on a domain.

    ``residuals(state)`` returns the PDE residuals as a list of per-point
    arrays; the equilibrium terms ``p_j - grad u_j`` are added by the loss.
    ``plain_residuals`` is the original form (second derivatives through a
    jet along ``second_order_axis``) used only by the ablation.
    ``exact_fields(x, t)`` returns the stacked exact ``(u, p)`` columns as
    duals, so residuals can be checked against the analytic solution.
    """

    name: str
    domain: Domain
    fields: tuple
    extra: tuple
    bcs: list
    residuals: Callable
    time_horizon: float | None = None
    ics: list | None = None
    plain_residuals: Callable | None = None
    second_order_axis: int | None = None
    exact_fields: Callable | None = None
    constants: dict = field(default_factory=dict)
    defaults: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.fields) != len(self.extra):
            raise ProblemError("fields and extra flags differ in length")
        for b in self.bcs:
            if not isinstance(b, PeriodicBC) and b.region not in self.domain.regions:
                raise ProblemError(f"condition on unknown region {b.region!r}")
        if self.time_horizon is not None:
            if self.ics is None or len(self.ics) != len(self.fields):
                raise ProblemError("time-dependent problems need one initial condition per field")
        self.layout = FieldLayout(self.extra, self.domain.dim)

    @property
    def dim(self):
        return self.domain.dim

    @property
    def n_fields(self):
        return len(self.fields)

    @property
    def periodic(self):
        return [b for b in self.bcs if isinstance(b, PeriodicBC)]

    @property
    def has_solution(self):
        return self.exact_fields is not None

    def solution(self, X, t=None):
        """Exact field values, shape (N, n_fields)."""
        if self.exact_fields is None:
            raise ProblemError(f"problem {self.name!r} has no analytic solution")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        xd, td = _duals(X, t)
        cols = self.exact_fields(xd, td)
        vals = np.stack([np.asarray(ad.value_of(c)) for c in cols], axis=1)
        return vals[:, self.layout.u_index]

    def exact_state(self, X, t=None) -> FieldState:
        """Field state built from the analytic solution, tangents included."""
        if self.exact_fields is None:
            raise ProblemError(f"problem {self.name!r} has no analytic solution")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        xd, td = _duals(X, t)
        cols = self.exact_fields(xd, td)
        y = DualScalar.concat([c[:, None] for c in cols], axis=-1)
        tt = None if t is None else np.broadcast_to(np.asarray(t, dtype=np.float64), (len(X),))
        return FieldState(y, self.layout, X, tt)


def _duals(X, t):
    n, d = X.shape
    k = d + (0 if t is None else 1)
    xd = ad.lift_inputs(X, n_directions=k)
    if t is None:
        return xd, None
    tang = np.zeros((k, n))
    tang[d] = 1.0
    return xd, DualScalar(np.broadcast_to(np.asarray(t, dtype=np.float64), (n,)).copy(), tang)


def sq_norm(x):
    """``|x|^2`` per row for an (N, d) array or dual."""
    return (x * x).sum(axis=-1)
