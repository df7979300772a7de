"""Acceptance criteria, one test per criterion.

Every test records a pass/fail line that is printed in the
"acceptance criteria" section of the pytest summary. The training criteria
(6-9) take a few minutes each; criterion 10 reruns them.
"""

import json

import numpy as np
import pytest

from hardpinn import ansatz as an
from hardpinn import boundary as bd
from hardpinn import geometry as geo
from hardpinn import network as nw
from hardpinn import runner
from hardpinn.config import RunConfig
from hardpinn.problems import builtin
from hardpinn.training import hc_loss, make_points

from conftest import SLOW

POISSON = {
    "problem": {"name": "poisson1d"},
    "network": {"main_hidden": [50, 50, 50], "sub_hidden": [20, 20, 20]},
    "points": {"n_f": 128},
    "adam": {"iters": 10000, "lr": 1e-3},
    "test": {"n_points": 512},
    "seed": 0,
}
HEAT5 = {
    "problem": {"name": "highdim_heat", "params": {"d": 5}},
    "points": {"n_f": 500},
    "adam": {"iters": 3000, "lr": 1e-2},
    "lbfgs": {"max_iters": 500},
    "seed": 0,
}
ABLATION = {
    "problem": {"name": "poisson1d"},
    "mode": "soft_extra_fields",
    "network": {"main_hidden": [50, 50, 50]},
    "points": {"n_f": 128, "n_b": 2},
    "adam": {"iters": 10000, "lr": 1e-3},
    "ablation": {"constant_lr": True, "window": 500},
    "seed": 0,
}
ANNULUS = {
    "problem": {"name": "robin_annulus"},
    "points": {"n_f": 1000},
    "hardness": {"beta_s": 5.0},
    "adam": {"iters": 3000, "lr": 1e-2},
    "seed": 0,
}


def _unit(rng, n, k):
    v = rng.normal(size=(n, k))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# 1-5: exactness and gradient checks


def test_c1_projector_suite(acceptance_log):
    worst = {"Bn": 0.0, "idem": 0.0, "eig": 0.0}
    for d in (1, 2, 3, 10):
        ntil = _unit(np.random.default_rng(d), 10_000, d + 1)
        B = bd.householder_basis(ntil)
        worst["Bn"] = max(worst["Bn"], np.max(np.linalg.norm(np.einsum("nij,nj->ni", B, ntil), axis=1)))
        worst["idem"] = max(worst["idem"], np.max(np.abs(B @ B - B)))
        ev = np.sort(np.linalg.eigvalsh(B), axis=1)
        expected = np.concatenate([[0.0], np.ones(d)])
        worst["eig"] = max(worst["eig"], np.max(np.abs(ev - expected)))
    ok = worst["Bn"] <= 1e-12 and worst["idem"] <= 1e-12 and worst["eig"] <= 1e-10
    acceptance_log("C01 projector suite", ok, f"|Bn|={worst['Bn']:.1e} |B^2-B|={worst['idem']:.1e} eig={worst['eig']:.1e}")
    assert ok


def test_c2_boundary_exactness(acceptance_log):
    circle = geo.Circle((1.5, 2.5), 1.0)
    X, n = geo.sample_boundary(circle, 1000, seed=0)
    layout = bd.FieldLayout((True,), 2)
    g = lambda x, t: np.sin(x[:, 0]) + x[:, 1] ** 2
    conditions = {
        "dirichlet": bd.BoundaryCondition.dirichlet("c", g),
        "neumann": bd.BoundaryCondition.neumann("c", g),
        "battery robin": bd.BoundaryCondition.robin("c", 1.0, 1.0, 5.0),
    }
    spec = nw.MlpSpec((2, 20, 20, 20, 3))
    worst = {}
    for name, bc in conditions.items():
        ntil, gtil = bc.constraint(X, None, n, layout)
        r = 0.0
        for s in range(10):
            p = bd.general_solution(ntil, gtil, nw.forward(nw.init(spec, 100 + s), X))
            r = max(r, np.max(np.abs(np.sum(ntil * p, axis=1) - gtil)))
        worst[name] = r
    ok = max(worst.values()) <= 1e-10
    acceptance_log("C02 BC exactness", ok, " ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert ok


def test_c3_initial_condition_exactness(acceptance_log):
    worst = 0.0
    for name, params, f in (
        ("highdim_heat", {"d": 3}, lambda X: np.exp(0.5 * np.sum(X * X, axis=1))),
        ("battery_pack", {}, lambda X: np.full(len(X), 0.1)),
    ):
        a = an.assemble(builtin(name, **params), main_hidden=(20, 20), sub_hidden=(10,), n_probe=512)
        X = geo.sample_interior(a.domain, 1000, seed=1)
        rng = np.random.default_rng(2)
        for chunk in np.array_split(np.arange(1000), 10):
            flat = a.params.flat + rng.normal(size=a.params.size)
            u = a.predict(X[chunk], 0.0, flat)[:, 0]
            worst = max(worst, np.max(np.abs(u - f(X[chunk]))))
    ok = worst <= 1e-12
    acceptance_log("C03 IC exactness", ok, f"max |u(x,0)-f(x)|={worst:.1e}")
    assert ok


def _battery_max_residual(beta_s, seed):
    p = builtin("battery_pack")
    a = an.assemble(p, beta_s=beta_s, seed=seed, main_hidden=(50,) * 4, sub_hidden=(20,) * 3, n_probe=2048)
    worst = 0.0
    rng = np.random.default_rng(seed)
    for i, r in enumerate(p.domain.region_names):
        X, _ = geo.sample_boundary(p.domain.regions[r], 200, seed=1000 + i)
        t = rng.uniform(0.0, 1.0, len(X))
        res = a.boundary_residuals(X, t, region=r, blend=False)
        worst = max(worst, max(float(np.max(v)) for v in res.values()))
    return worst


def test_c4_hardness_monotonicity(acceptance_log):
    betas = (1.0, 2.0, 5.0, 10.0)
    ok = True
    lines = []
    for seed in range(3):
        vals = [_battery_max_residual(b, seed) for b in betas]
        ok &= all(b < a for a, b in zip(vals, vals[1:]))
        lines.append("/".join(f"{v:.1e}" for v in vals))
    acceptance_log("C04 hardness monotonicity", ok, "beta_s=1/2/5/10: " + "; ".join(lines))
    assert ok


@pytest.mark.parametrize("name", ["poisson1d", "robin_annulus", "battery_pack"])
def test_c5_gradient_oracle(name, acceptance_log):
    p = builtin(name)
    a = an.assemble(p, main_hidden=(10, 10), sub_hidden=(6,), n_probe=512)
    pts = make_points(a, 12, seed=1)
    flat = a.params.flat + 0.1 * np.random.default_rng(2).normal(size=a.params.size)
    grad = hc_loss(a, pts, flat).grad
    idx = np.random.default_rng(3).choice(a.params.size, 20, replace=False)
    worst = 0.0
    for i in idx:
        h = 1e-6 * max(1.0, abs(flat[i]))
        e = np.zeros_like(flat)
        e[i] = h
        fd = (hc_loss(a, pts, flat + e, False).total - hc_loss(a, pts, flat - e, False).total) / (2 * h)
        worst = max(worst, abs(grad[i] - fd) / max(abs(fd), 1e-3))
    ok = worst <= 1e-5
    acceptance_log(f"C05 gradient oracle ({name})", ok, f"max rel err={worst:.1e} over 20 parameters")
    assert ok


# ---------------------------------------------------------------------------
# 6-10: training runs


@pytest.fixture(scope="module")
def poisson_run(tmp_path_factory):
    return runner.run(RunConfig.model_validate(POISSON), tmp_path_factory.mktemp("c6"))


@pytest.fixture(scope="module")
def heat_run(tmp_path_factory):
    return runner.run(RunConfig.model_validate(HEAT5), tmp_path_factory.mktemp("c7"))


@pytest.fixture(scope="module")
def ablation_run(tmp_path_factory):
    return runner.ablate(RunConfig.model_validate(ABLATION), tmp_path_factory.mktemp("c8"))


@pytest.fixture(scope="module")
def annulus_run(tmp_path_factory):
    return runner.run(RunConfig.model_validate(ANNULUS), tmp_path_factory.mktemp("c9"))


def test_c6_poisson_convergence(poisson_run, acceptance_log):
    mae = poisson_run.summary["metrics"]["all"]["u"]["mae"]
    ok = mae <= 1e-2
    acceptance_log("C06 1D Poisson", ok, f"MAE={mae:.2e} (limit 1e-2)")
    assert ok


def test_c7_heat_d5(heat_run, acceptance_log):
    mape = heat_run.summary["metrics"]["average"]["u"]["mape"]
    ok = mape <= 0.01
    acceptance_log("C07 heat d=5", ok, f"average MAPE={100 * mape:.3f}% (limit 1%)")
    assert ok


@pytest.mark.slow
@pytest.mark.skipif(not SLOW, reason="set HARDPINN_SLOW=1 for the d=10 reproduction")
def test_c7_heat_d10_slow(tmp_path, acceptance_log):
    cfg = RunConfig.model_validate({
        **HEAT5,
        "problem": {"name": "highdim_heat", "params": {"d": 10}},
        "points": {"n_f": 1000},
        "adam": {"iters": 5000, "lr": 1e-2},
        "lbfgs": {"max_iters": 5000},
    })
    mape = runner.run(cfg, tmp_path).summary["metrics"]["average"]["u"]["mape"]
    ok = mape <= 0.005
    acceptance_log("C07 heat d=10 (slow)", ok, f"average MAPE={100 * mape:.3f}% (limit 0.5%)")
    assert ok


def test_c8_extra_field_ablation(ablation_run, acceptance_log):
    s = ablation_run.summary
    frac = s["fraction_above_one"]
    ok = len(ablation_run.ratio) == 10000 - 998 and frac is not None and frac >= 0.6
    acceptance_log("C08 MovVar ablation", ok, f"{100 * frac:.1f}% of {s['n_samples']} samples > 1, median {s['median_ratio']:.2f}")
    assert ok


def test_c9_robin_annulus(annulus_run, acceptance_log):
    s = annulus_run.summary
    mae = s["metrics"]["all"]["u"]["mae"]
    within = all(b["within_bound"] for b in s["boundary"].values())
    ok = mae <= 5e-2 and within
    detail = ", ".join(f"{r}: {b['max_residual']:.1e}<={b['max_bound']:.1e}" for r, b in s["boundary"].items())
    acceptance_log("C09 Robin annulus", ok, f"MAE={mae:.2e} (limit 5e-2); {detail}")
    assert ok


def test_c10_determinism(poisson_run, heat_run, ablation_run, annulus_run, tmp_path, acceptance_log):
    reruns = {
        "poisson": (poisson_run.out_dir, runner.run(RunConfig.model_validate(POISSON), tmp_path / "c6").out_dir),
        "heat": (heat_run.out_dir, runner.run(RunConfig.model_validate(HEAT5), tmp_path / "c7").out_dir),
        "ablation": (ablation_run.out_dir, runner.ablate(RunConfig.model_validate(ABLATION), tmp_path / "c8").out_dir),
        "annulus": (annulus_run.out_dir, runner.run(RunConfig.model_validate(ANNULUS), tmp_path / "c9").out_dir),
    }
    files = ["metrics.csv", "summary.json", "checkpoint.json"]
    diffs = []
    for name, (a, b) in reruns.items():
        names = ["plain/metrics.csv", "extra/metrics.csv", "ratio.csv", "ablation.json"] if name == "ablation" else files
        diffs += [f"{name}/{f}" for f in names if (a / f).read_bytes() != (b / f).read_bytes()]
    ok = not diffs
    acceptance_log("C10 determinism", ok, "byte-identical reruns" if ok else "differ: " + ", ".join(diffs))
    assert ok
