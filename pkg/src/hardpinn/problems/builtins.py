"""Built-in benchmark problems in extra-field form."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .. import autodiff as ad
from .. import geometry as geo
from ..boundary import BoundaryCondition, NormalComponentBC, PeriodicBC
from .base import ProblemError, ProblemSpec, sq_norm


# ---------------------------------------------------------------------------
# 1D Poisson: u'' = -a^2 sin(ax) on (0, 2 pi), u = 0 at both ends


def poisson1d(a: float = 2.0) -> ProblemSpec:
    L = 2.0 * np.pi
    domain = geo.Domain(
        outer=geo.Interval(0.0, L),
        regions={"left": geo.Interval(0.0, L, sides=["lo"]), "right": geo.Interval(0.0, L, sides=["hi"])},
    )

    def source(x):
        return a * a * np.sin(a * x[:, 0])

    def residuals(s):
        return [s.div_p(0) + source(s.x)]

    def plain(s):
        return [s.u_xx(0) + source(s.x)]

    def exact(x, t):
        ax = x[:, 0] * a
        return [ad.sin(ax), ad.cos(ax) * a]

    return ProblemSpec(
        name="poisson1d",
        domain=domain,
        fields=("u",),
        extra=(True,),
        bcs=[BoundaryCondition.dirichlet("left", 0.0), BoundaryCondition.dirichlet("right", 0.0)],
        residuals=residuals,
        plain_residuals=plain,
        second_order_axis=0,
        exact_fields=exact,
        constants={"a": a},
        defaults={"main_hidden": (50, 50, 50), "sub_hidden": (20, 20, 20), "lr": 1e-3, "n_f": 128, "n_b": 2},
    )


# ---------------------------------------------------------------------------
# 2D battery pack: T_t = k lap T with Robin conditions on every boundary

BATTERY = {
    "k": 1.0,
    "h": 1.0,
    "T_a": 0.1,
    "T_c": 5.0,
    "T_w": 1.0,
    "T_0": 0.1,
    "outer": (-6.5, 6.5, -4.5, 4.5),
    "cell_radius": 1.0,
    "pipe_radius": 0.4,
    "cells": [(-4.5, -2.5), (-1.5, -2.5), (1.5, -2.5), (4.5, -2.5), (-3.0, 0.0), (0.0, 0.0), (3.0, 0.0),
              (-4.5, 2.5), (-1.5, 2.5), (1.5, 2.5), (4.5, 2.5)],
    "pipes": [(-3.0, -5 / 3), (0.0, -5 / 3), (3.0, -5 / 3), (-3.0, 5 / 3), (0.0, 5 / 3), (3.0, 5 / 3)],
}


def battery_domain(distance_mode="anchored", beta=4.0) -> geo.Domain:
    c = BATTERY
    a1, a2, b1, b2 = c["outer"]
    cells = [geo.Circle(p, c["cell_radius"]) for p in c["cells"]]
    pipes = [geo.Circle(p, c["pipe_radius"]) for p in c["pipes"]]
    regions = {"outer": geo.Rectangle(a1, a2, b1, b2)}
    regions.update({f"cell{i}": s for i, s in enumerate(cells)})
    regions.update({f"pipe{i}": s for i, s in enumerate(pipes)})
    return geo.Domain(geo.Rectangle(a1, a2, b1, b2), cells + pipes, regions, distance_mode, beta)


def battery_pack(distance_mode="anchored") -> ProblemSpec:
    c = BATTERY
    k, h = c["k"], c["h"]
    domain = battery_domain(distance_mode)
    bcs = [BoundaryCondition.robin("outer", h, k, h * c["T_a"])]
    bcs += [BoundaryCondition.robin(f"cell{i}", h, k, h * c["T_c"]) for i in range(len(c["cells"]))]
    bcs += [BoundaryCondition.robin(f"pipe{i}", h, k, h * c["T_w"]) for i in range(len(c["pipes"]))]

    def residuals(s):
        return [s.u_t(0) - k * s.div_p(0)]

    return ProblemSpec(
        name="battery_pack",
        domain=domain,
        fields=("T",),
        extra=(True,),
        bcs=bcs,
        residuals=residuals,
        time_horizon=1.0,
        ics=[c["T_0"]],
        constants={x: c[x] for x in ("k", "h", "T_a", "T_c", "T_w", "T_0")},
        defaults={"main_hidden": (50,) * 4, "sub_hidden": (20,) * 3, "lr": 1e-2, "n_f": 8192, "n_b": 512, "n_i": 512},
    )


# ---------------------------------------------------------------------------
# 2D steady Navier-Stokes around an airfoil


def airfoil_polygon(path=None, chord=1.0, offset=(0.0, 0.0)):
    if path is None:
        path = resources.files("hardpinn.problems") / "data" / "naca2412.dat"
    v = geo.load_polygon(path)
    return v * chord + np.asarray(offset)


def airfoil_ns(nu: float = 1 / 50, polygon_path=None) -> ProblemSpec:
    box = (-1.0, 2.0, -1.0, 1.0)
    a1, a2, b1, b2 = box
    foil = geo.Polygon(airfoil_polygon(polygon_path))
    domain = geo.Domain(
        outer=geo.Rectangle(*box),
        holes=[foil],
        regions={
            "walls": geo.HalfOpenRectangle(*box, excluded="right"),
            "outlet": geo.Rectangle(*box, sides=["right"]),
            "airfoil": foil,
        },
    )
    # layout: u1, p1 (2), u2, p2 (2), pressure
    bcs = [
        BoundaryCondition.dirichlet("walls", 1.0, field=0),
        BoundaryCondition.dirichlet("walls", 0.0, field=1),
        BoundaryCondition.dirichlet("outlet", 1.0, field=2),
        NormalComponentBC("airfoil", (0, 1), 0.0),
    ]

    def residuals(s):
        u1, u2 = s.u(0), s.u(1)
        out = []
        for i in range(2):
            conv = u1 * s.p_component(i, 0) + u2 * s.p_component(i, 1)
            out.append(conv + s.u_x(2, axis=i) - nu * s.div_p(i))
        out.append(s.p_component(0, 0) + s.p_component(1, 1))
        return out

    return ProblemSpec(
        name="airfoil_ns",
        domain=domain,
        fields=("u1", "u2", "p"),
        extra=(True, True, False),
        bcs=bcs,
        residuals=residuals,
        constants={"nu": nu, "u0": (1.0, 0.0), "outlet_pressure": 1.0, "box": box},
        defaults={"main_hidden": (50,) * 6, "sub_hidden": (40,) * 4, "lr": 1e-3, "n_f": 10000, "n_b": 2048},
    )


# ---------------------------------------------------------------------------
# heat equation in the d-dimensional unit ball with a known solution


def highdim_heat(d: int = 10) -> ProblemSpec:
    d = int(d)
    if d < 1:
        raise ProblemError("highdim_heat needs d >= 1")
    k = 1.0 / d
    domain = geo.Domain(outer=geo.Ball(np.zeros(d), 1.0), regions={"sphere": geo.Ball(np.zeros(d), 1.0)})

    def g(x, t):
        return ad.exp(sq_norm(x) * 0.5 + t)

    def source(x, t):
        r2 = np.sum(x * x, axis=1)
        return -k * r2 * np.exp(0.5 * r2 + t)

    def residuals(s):
        return [s.u_t(0) - k * s.div_p(0) - source(s.x, s.t)]

    def exact(x, t):
        u = ad.exp(sq_norm(x) * 0.5 + t)
        return [u] + [x[:, i] * u for i in range(d)]

    return ProblemSpec(
        name="highdim_heat",
        domain=domain,
        fields=("u",),
        extra=(True,),
        bcs=[BoundaryCondition.neumann("sphere", g)],
        residuals=residuals,
        time_horizon=1.0,
        ics=[lambda x: ad.exp(sq_norm(x) * 0.5)],
        exact_fields=exact,
        constants={"d": d, "k": k},
        defaults={"main_hidden": (50,) * 4, "sub_hidden": (20,) * 3, "lr": 1e-2, "n_f": 1000},
    )


# ---------------------------------------------------------------------------
# nonlinear Schroedinger equation, h = u + i v, periodic in x


def schrodinger() -> ProblemSpec:
    domain = geo.Domain(
        outer=geo.Interval(-5.0, 5.0),
        regions={"left": geo.Interval(-5.0, 5.0, sides=["lo"]), "right": geo.Interval(-5.0, 5.0, sides=["hi"])},
    )

    def residuals(s):
        u, v = s.u(0), s.u(1)
        m = u * u + v * v
        return [
            -s.u_t(1) + 0.5 * s.dp(0, 0, 0) + m * u,
            s.u_t(0) + 0.5 * s.dp(1, 0, 0) + m * v,
        ]

    def plain(s):
        u, v = s.u(0), s.u(1)
        m = u * u + v * v
        return [-s.u_t(1) + 0.5 * s.u_xx(0) + m * u, s.u_t(0) + 0.5 * s.u_xx(1) + m * v]

    return ProblemSpec(
        name="schrodinger",
        domain=domain,
        fields=("u", "v"),
        extra=(True, True),
        bcs=[PeriodicBC((0, 1), axis=0)],
        residuals=residuals,
        time_horizon=np.pi / 2,
        ics=[lambda x: 2.0 / ad.cosh(x[:, 0]), 0.0],
        plain_residuals=plain,
        second_order_axis=0,
        defaults={"main_hidden": (50, 50, 50), "lr": 1e-3, "n_f": 1000, "n_b": 20, "n_i": 200},
    )


# ---------------------------------------------------------------------------
# manufactured Robin problem on an annulus: u = exp(|x|^2 / 2)


def robin_annulus(r_in: float = 0.5, r_out: float = 1.0) -> ProblemSpec:
    inner = geo.Circle((0.0, 0.0), r_in)
    outer = geo.Ball((0.0, 0.0), r_out)
    domain = geo.Domain(outer=outer, holes=[inner], regions={"outer": outer, "inner": inner})
    g_out = np.exp(0.5 * r_out**2) * (1.0 + r_out)
    g_in = np.exp(0.5 * r_in**2) * (1.0 - r_in)

    def residuals(s):
        r2 = np.sum(s.x * s.x, axis=1)
        return [s.div_p(0) - (2.0 + r2) * np.exp(0.5 * r2)]

    def exact(x, t):
        u = ad.exp(sq_norm(x) * 0.5)
        return [u, x[:, 0] * u, x[:, 1] * u]

    return ProblemSpec(
        name="robin_annulus",
        domain=domain,
        fields=("u",),
        extra=(True,),
        bcs=[BoundaryCondition.robin("outer", 1.0, 1.0, g_out), BoundaryCondition.robin("inner", 1.0, 1.0, g_in)],
        residuals=residuals,
        exact_fields=exact,
        constants={"r_in": r_in, "r_out": r_out, "g_outer": g_out, "g_inner": g_in},
        defaults={"main_hidden": (50, 50, 50), "sub_hidden": (20, 20, 20), "lr": 1e-2, "n_f": 1000, "n_b": 256},
    )


REGISTRY = {
    "poisson1d": poisson1d,
    "battery_pack": battery_pack,
    "airfoil_ns": airfoil_ns,
    "highdim_heat": highdim_heat,
    "schrodinger": schrodinger,
    "robin_annulus": robin_annulus,
}


def builtin(name: str, **params) -> ProblemSpec:
    """Build a named problem; ``highdim_heat`` takes ``d``, ``poisson1d`` takes ``a``."""
    if name not in REGISTRY:
        raise ProblemError(f"unknown problem {name!r}; known: {', '.join(sorted(REGISTRY))}")
    return REGISTRY[name](**params)
