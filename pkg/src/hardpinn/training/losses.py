"""Loss assembly for the hard-constraint ansatz and the plain PINN baseline.

Both losses are mean squared residuals with unit weights. Each loss is split
into named groups; the hard-constraint loss has exactly two (PDE residuals and
equilibrium terms ``p_j - grad u_j``), the soft loss adds one group per
boundary region, one for the initial condition and one for periodicity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from .. import geometry as geo
from ..ansatz import HardConstraintAnsatz, PlainAnsatz
from ..boundary import NormalComponentBC, PeriodicBC


class LossError(ValueError):
    pass


# groups that make up the PDE part of the loss (the part whose gradient the
# stability statistics track)
PDE_GROUPS = ("pde", "equilibrium")


@dataclass
class LossBreakdown:
    pde_residual_sq: float
    equilibrium_sq: float
    bc_sq: float = 0.0
    ic_sq: float = 0.0
    groups: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(self.groups.values()))

    @property
    def n_groups(self):
        return len(self.groups)

    @classmethod
    def from_groups(cls, groups: dict):
        g = {k: float(v) for k, v in groups.items()}
        bc = float(sum(v for k, v in g.items() if k.startswith("bc:") or k == "periodic"))
        return cls(g.get("pde", 0.0), g.get("equilibrium", 0.0), bc, g.get("ic", 0.0), g)


@dataclass
class LossResult:
    breakdown: LossBreakdown
    grad: np.ndarray | None = None
    pde_grad: np.ndarray | None = None

    @property
    def total(self):
        return self.breakdown.total


# ---------------------------------------------------------------------------
# point sets


@dataclass
class BoundarySet:
    name: str
    bc: object
    batch: object
    X: np.ndarray
    t: np.ndarray | None
    normals: np.ndarray


@dataclass
class PointSets:
    interior: object
    boundary: list = field(default_factory=list)
    initial: tuple | None = None  # (batch, (N, n_fields) targets)
    periodic: list = field(default_factory=list)  # (PeriodicBC, batch_lo, batch_hi)
    n_f: int = 0


def _time_samples(rng, n, horizon):
    return rng.uniform(0.0, horizon, size=n)


def make_points(ansatz, n_f: int, n_b: int | None = None, n_i: int | None = None, seed: int = 0) -> PointSets:
    """Sample collocation (and, for the plain ansatz, boundary/initial) points.

    Every set draws from its own child of ``SeedSequence(seed)``, so adding a
    set never changes the points of another.
    """
    problem = ansatz.problem
    dom = problem.domain
    T = problem.time_horizon
    streams = np.random.SeedSequence(seed).spawn(4 + len(problem.bcs))
    seeds = [int(s.generate_state(1)[0]) for s in streams]
    X = geo.sample_interior(dom, n_f, seeds[0])
    t = None if T is None else _time_samples(np.random.default_rng(seeds[1]), n_f, T)
    sets = PointSets(ansatz.prepare(X, t), n_f=n_f)
    if isinstance(ansatz, HardConstraintAnsatz):
        return sets
    if n_b is None or (T is not None and n_i is None):
        raise LossError("the soft loss needs boundary (and initial) point counts")
    trng = np.random.default_rng(seeds[2])
    for i, bc in enumerate(problem.bcs):
        if isinstance(bc, PeriodicBC):
            lo, hi = dom.outer.bbox()
            tb = None if T is None else _time_samples(trng, n_b, T)
            base = np.zeros((n_b, dom.dim))
            if dom.dim > 1:
                base = geo.sample_interior(dom, n_b, seeds[4 + i])
            xlo, xhi = base.copy(), base.copy()
            xlo[:, bc.axis] = lo[bc.axis]
            xhi[:, bc.axis] = hi[bc.axis]
            sets.periodic.append((bc, ansatz.prepare(xlo, tb), ansatz.prepare(xhi, tb)))
            continue
        Xb, nb = geo.sample_boundary(dom.regions[bc.region], n_b, seeds[4 + i])
        tb = None if T is None else _time_samples(trng, n_b, T)
        sets.boundary.append(BoundarySet(f"bc:{bc.region}", bc, ansatz.prepare(Xb, tb), Xb, tb, nb))
    if T is not None:
        X0 = geo.sample_interior(dom, n_i, seeds[3])
        targets = np.stack([_ic_values(ic, X0) for ic in problem.ics], axis=1)
        sets.initial = (ansatz.prepare(X0, np.zeros(n_i)), targets)
    return sets


def _ic_values(ic, X):
    if callable(ic):
        return np.asarray(ad.value_of(ic(X)), dtype=np.float64)
    return np.full(len(X), float(ic))


# ---------------------------------------------------------------------------
# residual groups


def _msq(r):
    return (r * r).mean()


def _sum(items):
    out = items[0]
    for x in items[1:]:
        out = out + x
    return out


def _pde_groups(state, problem, plain=False):
    fn = problem.plain_residuals if plain else problem.residuals
    if fn is None:
        raise LossError(f"problem {problem.name!r} has no residuals for this mode")
    groups = {"pde": _sum([_msq(r) for r in fn(state)])}
    eq = []
    for j in range(state.layout.n_fields):
        if state.layout.p_index[j] is None:
            continue
        diff = state.p(j) - state.grad_u(j)
        eq.append((diff * diff).sum() / diff.shape[0])
    if eq:
        groups["equilibrium"] = _sum(eq)
    return groups


def _bc_block(state, bc):
    """Stacked (u, n-dotted columns) values the condition acts on."""
    layout = state.layout
    if isinstance(bc, NormalComponentBC):
        return ad.concatenate([state.u(f)[:, None] for f in bc.fields], axis=1)
    j = bc.field
    u = state.u(j)[:, None]
    if bc.kind == "dirichlet":
        return u
    if layout.p_index[j] is not None:
        return ad.concatenate([u, state.p(j)], axis=1)
    return ad.concatenate([u, state.grad_u(j)], axis=1)


def _soft_groups(ansatz: PlainAnsatz, points: PointSets, flat):
    problem = ansatz.problem
    groups = {}
    for bs in points.boundary:
        st = ansatz.evaluate(bs.batch, flat)
        r = bs.bc.residual(_bc_block(st, bs.bc), bs.normals, bs.X, bs.t)
        groups[bs.name] = _msq(r)
    if points.periodic:
        terms = []
        for pbc, blo, bhi in points.periodic:
            slo, shi = ansatz.evaluate(blo, flat), ansatz.evaluate(bhi, flat)
            for j in pbc.fields:
                terms.append(_msq(slo.u(j) - shi.u(j)))
                if pbc.include_derivative:
                    if slo.layout.p_index[j] is not None:
                        terms.append(_msq(slo.p_component(j, pbc.axis) - shi.p_component(j, pbc.axis)))
                    else:
                        terms.append(_msq(slo.u_x(j, pbc.axis) - shi.u_x(j, pbc.axis)))
        groups["periodic"] = _sum(terms)
    if points.initial is not None:
        batch, targets = points.initial
        st = ansatz.evaluate(batch, flat)
        groups["ic"] = _sum([_msq(st.u(j) - targets[:, j]) for j in range(problem.n_fields)])
    return groups


def loss_groups(ansatz, points: PointSets, flat):
    """Named loss groups (tape values when ``flat`` is a ``Var``)."""
    state = ansatz.evaluate(points.interior, flat)
    if isinstance(ansatz, HardConstraintAnsatz):
        return _pde_groups(state, ansatz.problem)
    plain = ansatz.jet_axis is not None
    groups = _pde_groups(state, ansatz.problem, plain=plain)
    groups.update(_soft_groups(ansatz, points, flat))
    return groups


def _evaluate(ansatz, points, flat, gradient, pde_gradient):
    flat = np.asarray(ansatz.params.flat if flat is None else flat, dtype=np.float64)
    if not gradient:
        groups = loss_groups(ansatz, points, flat)
        return LossResult(LossBreakdown.from_groups(groups))
    tape = ad.Tape()
    theta = tape.param(flat)
    groups = loss_groups(ansatz, points, theta)
    names = list(groups)
    total = _sum([groups[k] for k in names])
    part = [k for k in names if k in PDE_GROUPS]
    lf = _sum([groups[k] for k in part]) if pde_gradient and len(part) < len(names) else None
    tape.finalize()
    grad = ad.parameter_gradient(total)
    pgrad = None
    if pde_gradient:
        # a second reverse sweep only when the loss has non-PDE groups
        pgrad = grad if lf is None else ad.parameter_gradient(lf)
    values = {k: float(ad.value_of(v)) for k, v in groups.items()}
    return LossResult(LossBreakdown.from_groups(values), grad, pgrad)


def hc_loss(ansatz: HardConstraintAnsatz, points: PointSets, flat=None, gradient=True, pde_gradient=False):
    """PDE plus equilibrium mean-square residuals at the collocation points."""
    if not isinstance(ansatz, HardConstraintAnsatz):
        raise LossError("hc_loss needs a hard-constraint ansatz")
    return _evaluate(ansatz, points, flat, gradient, pde_gradient)


def soft_loss(ansatz: PlainAnsatz, points: PointSets, flat=None, gradient=True, pde_gradient=False):
    """PINN loss: PDE (and equilibrium) terms plus boundary, periodic and initial terms."""
    if not isinstance(ansatz, PlainAnsatz):
        raise LossError("soft_loss needs a plain ansatz")
    return _evaluate(ansatz, points, flat, gradient, pde_gradient)


def loss(ansatz, points, flat=None, gradient=True, pde_gradient=False):
    if isinstance(ansatz, HardConstraintAnsatz):
        return hc_loss(ansatz, points, flat, gradient, pde_gradient)
    return soft_loss(ansatz, points, flat, gradient, pde_gradient)
