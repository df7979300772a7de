"""Hard-constraint ansatz assembly and the plain (soft) network ansatz.

Outputs are stacked per point as ``y = (u_1, p_1, u_2, p_2, ...)`` following a
:class:`~hardpinn.boundary.FieldLayout`. For every output component ``c`` the
hard-constraint ansatz is

    y_c = L_c(x) NN_main(x, t)_c + sum_i exp(-alpha_i l_i(x)) ptil_i(x, t)_c

where the sum runs over boundary conditions whose block contains ``c`` and
``L_c`` is the soft minimum of the distances to the regions constraining
``c``. In time-dependent problems each value column is then blended with its
initial condition: ``u = u_dagger (1 - exp(-beta_t t)) + f(x) exp(-beta_t t)``.

Everything that does not depend on network parameters (distances, normals,
``ntil``, ``gtil``, blend factors) is computed once per point batch by
:meth:`HardConstraintAnsatz.prepare`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import boundary as bd
from . import geometry as geo
from . import network as nw
from .autodiff import DualScalar, Jet2


class AnsatzError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameters


class ParameterSet:
    """Named networks sharing one flat parameter vector."""

    def __init__(self, nets: dict):
        self.names = list(nets)
        self.specs = {k: v.spec for k, v in nets.items()}
        self.seeds = {k: v.seed for k, v in nets.items()}
        self.slices = {}
        pos = 0
        for k in self.names:
            n = self.specs[k].n_params
            self.slices[k] = slice(pos, pos + n)
            pos += n
        self.size = pos
        self.flat = np.concatenate([nets[k].flat for k in self.names]) if nets else np.zeros(0)

    def views(self, flat=None):
        flat = self.flat if flat is None else flat
        return {k: flat[s] for k, s in self.slices.items()}

    def networks(self, flat=None) -> dict:
        flat = np.asarray(self.flat if flat is None else flat)
        return {k: nw.MlpParams(self.specs[k], flat[s].copy(), self.seeds[k]) for k, s in self.slices.items()}

    def load(self, nets: dict):
        for k in self.names:
            if nets[k].spec != self.specs[k]:
                raise AnsatzError(f"network {k!r}: checkpoint spec {nets[k].spec} differs from {self.specs[k]}")
            self.flat[self.slices[k]] = nets[k].flat


def _run(spec, inputs, flat):
    return nw.apply(spec, inputs, flat)


# ---------------------------------------------------------------------------
# field views


class FieldState:
    """Per-field views of the stacked output for residual functions.

    ``y`` is a dual (N, M) whose tangent directions are the spatial
    coordinates followed by time (when present). With a :class:`Jet2` input
    ``u_xx`` is also available along the jet's direction.
    """

    def __init__(self, y, layout: bd.FieldLayout, x, t=None):
        self.y = y
        self.layout = layout
        self.x = x
        self.t = t
        self.dim = layout.dim

    @property
    def values(self):
        return self.y.value

    def u(self, j):
        return self.y.value[:, self.layout.u_index[j]]

    def grad_u(self, j):
        """Spatial gradient of field ``j`` with shape (N, d)."""
        return ad.transpose(self.y.tangent[: self.dim, :, self.layout.u_index[j]])

    def u_x(self, j, axis=0):
        return self.y.tangent[axis, :, self.layout.u_index[j]]

    def u_t(self, j):
        if self.t is None:
            raise AnsatzError("time derivative requested for a steady problem")
        return self.y.tangent[self.dim, :, self.layout.u_index[j]]

    def _p_index(self, j):
        idx = self.layout.p_index[j]
        if idx is None:
            raise AnsatzError(f"field {j} has no extra field")
        return idx

    def p(self, j):
        idx = self._p_index(j)
        return self.y.value[:, idx[0] : idx[-1] + 1]

    def p_component(self, j, i):
        return self.y.value[:, self._p_index(j)[i]]

    def dp(self, j, direction, i):
        """d p_{j,i} / d x_direction, shape (N,)."""
        return self.y.tangent[direction, :, self._p_index(j)[i]]

    def div_p(self, j):
        idx = self._p_index(j)
        diag = self.y.tangent[(np.arange(self.dim), slice(None), np.array(idx))]
        return ad.sum_(diag, axis=0)

    def u_xx(self, j):
        if not isinstance(self.y, Jet2):
            raise AnsatzError("second derivatives are only available in jet mode")
        return self.y.curv[:, self.layout.u_index[j]]


# ---------------------------------------------------------------------------
# constant duals built from numpy geometry


def _dual_from_grad(value, grad, k):
    """Dual with value (N,) and spatial gradient (N, d) padded to ``k`` directions."""
    n, d = grad.shape
    tang = np.zeros((k, n))
    tang[:d] = grad.T
    return DualScalar(np.asarray(value, dtype=np.float64), tang)


def _dual_from_jac(value, jac, k):
    """Dual with value (N, d) and Jacobian ``jac[:, i, j] = d v_i / d x_j``."""
    n, d = value.shape
    tang = np.zeros((k, n, d))
    tang[: jac.shape[2]] = np.transpose(jac, (2, 0, 1))
    return DualScalar(np.asarray(value, dtype=np.float64), tang)


def _as_dual(v, n, k):
    if isinstance(v, DualScalar):
        if v.ndim == 0:
            return DualScalar(np.full(n, float(v.value)), np.repeat(np.asarray(v.tangent)[:, None], n, 1))
        return v
    arr = np.broadcast_to(np.asarray(v, dtype=np.float64), (n,)).copy()
    return DualScalar(arr, np.zeros((k, n)))


def _coordinate_duals(X, t):
    n, d = X.shape
    k = d + (0 if t is None else 1)
    xd = ad.lift_inputs(X, n_directions=k)
    td = None
    if t is not None:
        tang = np.zeros((k, n))
        tang[d] = 1.0
        td = DualScalar(np.asarray(t, dtype=np.float64), tang)
    return xd, td, k


@dataclass
class PreparedBatch:
    X: np.ndarray
    t: np.ndarray | None
    k: int
    inputs: DualScalar
    main_scale: DualScalar
    terms: list  # (network name, ntil, gtil, weight (N,), embed (K, M) or None, basis)
    blend_scale: DualScalar | None = None
    blend_shift: DualScalar | None = None


@dataclass
class BcSlot:
    name: str
    bc: object
    block: list
    region: str


@dataclass
class HardConstraintAnsatz:
    problem: object
    params: ParameterSet
    slots: list
    alphas: dict
    beta_s: float
    beta_t: float
    component_regions: list
    offregion_min: dict = field(default_factory=dict)
    basis: str = "householder"

    @property
    def layout(self) -> bd.FieldLayout:
        return self.problem.layout

    @property
    def domain(self) -> geo.Domain:
        return self.problem.domain

    @property
    def time_dependent(self):
        return self.problem.time_horizon is not None

    # -- geometry that does not depend on parameters --------------------
    def prepare(self, X, t=None) -> PreparedBatch:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if self.time_dependent and t is None:
            raise AnsatzError("time-dependent problem needs t")
        if t is not None:
            t = np.broadcast_to(np.asarray(t, dtype=np.float64), (len(X),)).copy()
        xd, td, k = _coordinate_duals(X, t)
        n, M = len(X), self.layout.width
        inputs = xd if t is None else DualScalar.concat([xd, td[:, None]], axis=-1)

        # main-network scale per component: soft-min distance to its regions
        scale_v = np.ones((n, M))
        scale_t = np.zeros((k, n, M))
        cache = {}
        for c, regions in enumerate(self.component_regions):
            if not regions:
                continue
            key = tuple(regions)
            if key not in cache:
                cache[key] = self.domain.distance_of(list(regions), X)
            l, g = cache[key]
            scale_v[:, c] = l
            scale_t[: X.shape[1], :, c] = g.T
        main_scale = DualScalar(scale_v, scale_t)

        normals = {}
        weights = {}
        terms = []
        for slot in self.slots:
            r = slot.region
            if r not in normals:
                nv, jac = self.domain.regions[r].normal(X)
                normals[r] = _dual_from_jac(nv, jac, k)
                l, g = self.domain.region_distance(r, X)
                alpha = self.alphas[r]
                w = np.exp(-alpha * l)
                weights[r] = _dual_from_grad(w, -alpha * w[:, None] * g, k)
            ntil, gtil = slot.bc.constraint(xd, td, normals[r], self.layout)
            ntil = ntil if isinstance(ntil, DualScalar) else DualScalar(np.asarray(ntil), np.zeros((k,) + np.shape(ntil)))
            gtil = _as_dual(gtil, n, k)
            K = len(slot.block)
            embed = None
            if slot.block != list(range(M)):
                embed = np.zeros((K, M))
                embed[np.arange(K), slot.block] = 1.0
            terms.append((slot.name, ntil, gtil, weights[r], embed))

        batch = PreparedBatch(X, t, k, inputs, main_scale, terms)
        if t is not None:
            e = np.exp(-self.beta_t * t)
            sv = np.ones((n, M))
            st = np.zeros((k, n, M))
            hv = np.zeros((n, M))
            ht = np.zeros((k, n, M))
            for j, ic in enumerate(self.problem.ics):
                c = self.layout.u_index[j]
                sv[:, c] = 1.0 - e
                st[X.shape[1], :, c] = self.beta_t * e
                f = _as_dual(ic(xd) if callable(ic) else ic, n, k)
                fv, ft = np.asarray(f.value), np.asarray(f.tangent)
                hv[:, c] = fv * e
                ht[:, :, c] = ft * e
                ht[X.shape[1], :, c] += -self.beta_t * e * fv
            batch.blend_scale = DualScalar(sv, st)
            batch.blend_shift = DualScalar(hv, ht)
        return batch

    # -- parameter-dependent evaluation ---------------------------------
    def general_solutions(self, batch: PreparedBatch, flat=None):
        views = self.params.views(flat)
        out = []
        for name, ntil, gtil, _w, _e in batch.terms:
            z = _run(self.params.specs[name], batch.inputs, views[name])
            out.append(bd.general_solution(ntil, gtil, z, self.basis))
        return out

    def evaluate(self, batch: PreparedBatch, flat=None, blend=True) -> FieldState:
        """Stacked ``(u, p)`` state; ``blend=False`` skips the initial-condition blend."""
        views = self.params.views(flat)
        z = _run(self.params.specs["main"], batch.inputs, views["main"])
        y = batch.main_scale * z
        for name, ntil, gtil, w, embed in batch.terms:
            sub = _run(self.params.specs[name], batch.inputs, views[name])
            ptil = bd.general_solution(ntil, gtil, sub, self.basis)
            if embed is not None:
                ptil = ptil @ embed
            y = y + w[:, None] * ptil
        if blend and batch.blend_scale is not None:
            y = y * batch.blend_scale + batch.blend_shift
        return FieldState(y, self.layout, batch.X, batch.t)

    def __call__(self, X, t=None, flat=None) -> FieldState:
        return self.evaluate(self.prepare(X, t), flat)

    def predict(self, X, t=None, flat=None) -> np.ndarray:
        """Stacked output values (N, M) as plain numbers."""
        st = self(X, t, flat)
        return np.asarray(ad.value_of(st.y.value))

    # -- diagnostics -----------------------------------------------------
    def boundary_residuals(self, X, t=None, flat=None, region=None, blend=True):
        """Per-condition ``|ntil . y_block - gtil|`` at points ``X`` on ``region``.

        In time-dependent problems the initial-condition blend generally breaks
        the boundary condition near ``t = 0`` (unless ``f`` satisfies it);
        ``blend=False`` measures the spatial part alone.
        """
        batch = self.prepare(X, t)
        y = np.asarray(ad.value_of(self.evaluate(batch, flat, blend).y.value))
        out = {}
        for slot, (name, ntil, gtil, _w, _e) in zip(self.slots, batch.terms):
            if region is not None and slot.region != region:
                continue
            nv = np.asarray(ntil.value)
            out[name] = np.abs(np.sum(nv * y[:, slot.block], axis=1) - np.asarray(gtil.value))
        return out

    def residual_bound(self, X, t=None, flat=None, region=None):
        """For points on ``region``: ``sum_{k != region} |ptil_k|`` restricted to shared components."""
        batch = self.prepare(X, t)
        sols = self.general_solutions(batch, flat)
        M = self.layout.width
        own = set()
        for s in self.slots:
            if s.region == region:
                own.update(s.block)
        total = np.zeros(len(batch.X))
        for slot, sol in zip(self.slots, sols):
            if slot.region == region:
                continue
            full = np.zeros((len(batch.X), M))
            full[:, slot.block] = np.asarray(ad.value_of(sol.value))
            total += np.linalg.norm(full[:, sorted(own)], axis=1)
        return total


def _seed_stream(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def assemble(
    problem,
    beta_s: float = 5.0,
    beta_t: float = 10.0,
    seed: int = 0,
    main_hidden=None,
    sub_hidden=None,
    n_probe: int = 4096,
    basis: str = "householder",
) -> HardConstraintAnsatz:
    """Wire networks, distances and hardness parameters for ``problem``."""
    if basis != "householder":
        raise AnsatzError("the assembled ansatz uses the householder basis")
    layout = problem.layout
    dom = problem.domain
    d_in = dom.dim + (1 if problem.time_horizon is not None else 0)
    main_hidden = tuple(problem.defaults.get("main_hidden", (50, 50, 50, 50)) if main_hidden is None else main_hidden)
    sub_hidden = tuple(problem.defaults.get("sub_hidden", (20, 20, 20)) if sub_hidden is None else sub_hidden)

    hard_bcs = [b for b in problem.bcs if not isinstance(b, bd.PeriodicBC)]
    if len(hard_bcs) != len(problem.bcs):
        raise AnsatzError(f"problem {problem.name!r} has periodic conditions; use a soft mode")
    slots = []
    region_components = {r: set() for r in dom.region_names}
    for i, b in enumerate(hard_bcs):
        if b.region not in dom.regions:
            raise AnsatzError(f"condition {i} refers to unknown region {b.region!r}")
        block = b.block(layout)
        if region_components[b.region] & set(block):
            raise AnsatzError(f"region {b.region!r} has overlapping conditions")
        region_components[b.region].update(block)
        slots.append(BcSlot(f"bc{i}_{b.region}", b, block, b.region))

    component_regions = [
        [r for r in dom.region_names if c in region_components[r]] for c in range(layout.width)
    ]

    alphas, mins = {}, {}
    for r in dom.region_names:
        if not region_components[r]:
            continue
        others = [q for q in dom.region_names if q != r and region_components[q] & region_components[r]]
        m = geo.estimate_min_offregion_distance(dom, r, n_probe, seed, among=others)
        if not m > 0:
            raise AnsatzError(f"region {r!r} touches another region it shares components with (min distance {m})")
        mins[r] = m
        alphas[r] = 0.0 if np.isinf(m) else beta_s / m

    seeds = _seed_stream(seed, 1 + len(slots))
    nets = {"main": nw.init(nw.MlpSpec((d_in, *main_hidden, layout.width)), seeds[0])}
    for s, sd in zip(slots, seeds[1:]):
        width = bd.basis_width(basis, len(s.block))
        nets[s.name] = nw.init(nw.MlpSpec((d_in, *sub_hidden, width)), sd)
    return HardConstraintAnsatz(
        problem, ParameterSet(nets), slots, alphas, beta_s, beta_t, component_regions, mins, basis
    )


# ---------------------------------------------------------------------------
# plain network ansatz


@dataclass
class PlainBatch:
    X: np.ndarray
    t: np.ndarray | None
    inputs: object


@dataclass
class PlainAnsatz:
    """Network outputs read directly as ``(u, p)`` (or ``u`` only), no constraints."""

    problem: object
    params: ParameterSet
    layout: bd.FieldLayout
    jet_axis: int | None = None

    @property
    def time_dependent(self):
        return self.problem.time_horizon is not None

    def prepare(self, X, t=None) -> PlainBatch:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if t is not None:
            t = np.broadcast_to(np.asarray(t, dtype=np.float64), (len(X),)).copy()
        Z = X if t is None else np.hstack([X, t[:, None]])
        if self.jet_axis is None:
            inputs = ad.lift_inputs(Z)
        else:
            inputs = Jet2.lift(Z, axis=self.jet_axis)
        return PlainBatch(X, t, inputs)

    def evaluate(self, batch: PlainBatch, flat=None) -> FieldState:
        views = self.params.views(flat)
        y = _run(self.params.specs["main"], batch.inputs, views["main"])
        return FieldState(y, self.layout, batch.X, batch.t)

    def __call__(self, X, t=None, flat=None):
        return self.evaluate(self.prepare(X, t), flat)

    def predict(self, X, t=None, flat=None):
        return np.asarray(ad.value_of(self(X, t, flat).y.value))


def soft_ansatz(problem, extra_fields: bool = True, seed: int = 0, hidden=None) -> PlainAnsatz:
    """Plain PINN ansatz; without extra fields the output has one column per field."""
    flags = problem.layout.extra if extra_fields else tuple(False for _ in problem.layout.extra)
    layout = bd.FieldLayout(flags, problem.domain.dim)
    d_in = problem.domain.dim + (1 if problem.time_horizon is not None else 0)
    hidden = tuple(problem.defaults.get("main_hidden", (50, 50, 50, 50)) if hidden is None else hidden)
    seeds = _seed_stream(seed, 1)
    net = nw.init(nw.MlpSpec((d_in, *hidden, layout.width)), seeds[0])
    jet_axis = None
    if not extra_fields:
        axis = problem.second_order_axis
        if axis is None:
            raise AnsatzError(
                f"problem {problem.name!r} needs second derivatives in several directions without extra fields"
            )
        jet_axis = axis
    return PlainAnsatz(problem, ParameterSet({"main": net}), layout, jet_axis)
