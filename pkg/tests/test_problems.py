import numpy as np
import pytest

from hardpinn import autodiff as ad
from hardpinn.ansatz import FieldState
from hardpinn.autodiff import DualScalar
from hardpinn.problems import (
    REGISTRY,
    ProblemError,
    ReferenceError,
    ReferenceTable,
    builtin,
    compute_metrics,
    evaluate_metrics,
    field_metrics,
    load_reference,
)
from hardpinn.problems.base import _duals


def test_registry_names():
    assert set(REGISTRY) == {"poisson1d", "battery_pack", "airfoil_ns", "highdim_heat", "schrodinger", "robin_annulus"}
    with pytest.raises(ProblemError):
        builtin("nope")
    with pytest.raises(ProblemError):
        builtin("highdim_heat", d=0)


def test_all_builtins_construct():
    for name in REGISTRY:
        p = builtin(name)
        assert p.layout.width == sum(1 + (p.dim if e else 0) for e in p.extra)


def test_poisson_solution():
    p = builtin("poisson1d")
    x = np.linspace(0, 2 * np.pi, 9)
    assert np.allclose(p.solution(x)[:, 0], np.sin(2 * x), atol=1e-15)


def test_heat_solution_and_boundary():
    p = builtin("highdim_heat", d=4)
    X = np.random.default_rng(0).normal(size=(5, 4))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    t = np.linspace(0, 1, 5)
    st = p.exact_state(X, t)
    # Neumann data on the unit sphere: du/dn = exp(1/2 + t)
    dudn = np.sum(np.asarray(st.p(0)) * X, axis=1)
    assert np.allclose(dudn, np.exp(0.5 + t), rtol=1e-14)
    assert p.constants["k"] == 0.25


def test_annulus_robin_data():
    p = builtin("robin_annulus")
    for name, r, sgn in (("outer", 1.0, 1.0), ("inner", 0.5, -1.0)):
        X = np.array([[r, 0.0]])
        bc = next(b for b in p.bcs if b.region == name)
        st = p.exact_state(X)
        n = np.array([[sgn, 0.0]])  # outward from the domain
        block = np.concatenate([np.asarray(st.u(0))[:, None], np.asarray(st.p(0))], axis=1)
        assert abs(bc.residual(block, n, X)[0]) <= 1e-13


def test_battery_conditions():
    p = builtin("battery_pack")
    robin = [b for b in p.bcs if b.kind == "robin"]
    assert len(robin) == len(p.bcs) == 18
    assert all(b.a == 1.0 and b.b == 1.0 for b in robin)
    assert p.ics == [0.1] and p.time_horizon == 1.0


def _soliton_state(X, t):
    xd, td = _duals(X, t)
    x = xd[:, 0]
    sech = 1.0 / ad.cosh(x)
    dsech = -sech * ad.tanh(x)
    c, s = ad.cos(td * 0.5), ad.sin(td * 0.5)
    cols = [sech * c, dsech * c, sech * s, dsech * s]
    y = DualScalar.concat([col[:, None] for col in cols], axis=-1)
    return y


def test_schrodinger_soliton_residual():
    # h = sech(x) exp(i t / 2) solves i h_t + h_xx / 2 + |h|^2 h = 0
    p = builtin("schrodinger")
    X = np.linspace(-4, 4, 41)[:, None]
    t = np.linspace(0, 1.5, 41)
    st = FieldState(_soliton_state(X, t), p.layout, X, t)
    for r in p.residuals(st):
        assert np.max(np.abs(np.asarray(r))) <= 1e-13


def test_schrodinger_conjugation_symmetry():
    # conj(h)(x, -t) is a solution whenever h(x, t) is
    p = builtin("schrodinger")
    X = np.linspace(-3, 3, 25)[:, None]
    t = np.linspace(0, 1, 25)
    y = _soliton_state(X, -t)
    flip = np.array([1.0, 1.0, -1.0, -1.0])
    tang = np.asarray(y.tangent) * flip
    tang[1] *= -1.0  # d/dt of h(x, -t)
    conj = DualScalar(np.asarray(y.value) * flip, tang)
    st = FieldState(conj, p.layout, X, t)
    for r in p.residuals(st):
        assert np.max(np.abs(np.asarray(r))) <= 1e-13


def test_field_metrics_examples():
    truth = np.array([1.0, -2.0, 4.0, 0.0])
    assert field_metrics(truth, truth) == {"mae": 0.0, "mape": 0.0, "wmape": 0.0}
    m = field_metrics(truth + 0.5, truth)
    assert m["mae"] == 0.5
    assert m["mape"] == pytest.approx(np.mean([0.5, 0.25, 0.125]))
    assert m["wmape"] == pytest.approx(2.0 / 7.0)
    c = np.full(10, -4.0)
    assert field_metrics(c + 0.1, c)["mape"] == pytest.approx(0.1 / 4)


def test_metrics_errors_and_names():
    with pytest.raises(ValueError):
        field_metrics(np.zeros(3), np.zeros(4))
    out = compute_metrics(np.zeros((3, 2)), np.ones((3, 2)), ["a", "b"])
    assert set(out) == {"a", "b"} and out["b"]["mae"] == 1.0


def test_evaluate_metrics_slices():
    X = np.linspace(0, 1, 5)[:, None]
    truth = lambda X, t: (X[:, 0] + (0 if t is None else t))[:, None]
    pred = lambda X, t: truth(X, t) + 0.01
    steady = evaluate_metrics(pred, truth, X, ["u"])
    assert list(steady) == ["all"] and steady["all"]["u"]["mae"] == pytest.approx(0.01)
    timed = evaluate_metrics(pred, truth, X, ["u"], time_horizon=2.0)
    assert list(timed) == ["t=0", "t=0.5", "t=1", "average"]


def test_reference_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    coords = rng.uniform(size=(20, 3))
    vals = rng.normal(size=(20, 2))
    tab = ReferenceTable(coords, vals, ["T", "q"], has_time=True)
    tab.save(tmp_path / "ref.csv")
    back = load_reference(tmp_path / "ref.csv")
    assert back.header == ["x1", "x2", "t", "T", "q"]
    assert np.array_equal(back.coords, coords) and np.array_equal(back.values, vals)
    assert np.array_equal(back.lookup(coords[:5, :2], coords[:5, 2], mode="exact"), vals[:5])
    near = back.lookup(coords[:5, :2] + 1e-9, coords[:5, 2])
    assert np.array_equal(near, vals[:5])
    with pytest.raises(ReferenceError):
        back.lookup(coords[:1, :2] + 1e-3, coords[:1, 2], mode="exact")
    with pytest.raises(ReferenceError):
        back.lookup(coords[:1, :2])


@pytest.mark.parametrize(
    "text,msg",
    [
        ("", "empty"),
        ("u,v\n1,2\n", "x1"),
        ("x1,x3,u\n1,2,3\n", "order"),
        ("x1,u\n1,2\n3\n", ":3:"),
        ("x1,u\n1,abc\n", ":2:"),
        ("x1\n1\n", "field"),
    ],
)
def test_malformed_reference(tmp_path, text, msg):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(ReferenceError, match=msg):
        load_reference(f)
