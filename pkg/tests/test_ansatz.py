import numpy as np
import pytest

from hardpinn import ansatz as an
from hardpinn import geometry as geo
from hardpinn.boundary import BoundaryCondition
from hardpinn.problems import ProblemSpec, builtin

from conftest import central_diff


def _randomise(ansatz, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return ansatz.params.flat + scale * rng.normal(size=ansatz.params.size)


@pytest.fixture(scope="module")
def heat2():
    return an.assemble(builtin("highdim_heat", d=2), main_hidden=(16, 16), sub_hidden=(8,))


@pytest.fixture(scope="module")
def poisson():
    return an.assemble(builtin("poisson1d"), main_hidden=(16, 16), sub_hidden=(8,))


def test_initial_condition_is_exact(heat2):
    X = geo.sample_interior(heat2.domain, 500, seed=1)
    f = np.exp(0.5 * np.sum(X * X, axis=1))
    for s in range(5):
        u = heat2.predict(X, 0.0, _randomise(heat2, s))[:, 0]
        assert np.max(np.abs(u - f)) <= 1e-12


def test_single_boundary_is_exact(heat2):
    X, _ = geo.sample_boundary(heat2.domain.regions["sphere"], 500, seed=2)
    t = np.random.default_rng(3).uniform(0, 1, 500)
    for s in range(5):
        r = heat2.boundary_residuals(X, t, _randomise(heat2, s), blend=False)
        assert max(np.max(v) for v in r.values()) <= 1e-10


def test_single_region_has_zero_hardness(heat2):
    assert heat2.alphas == {"sphere": 0.0}


def test_multi_boundary_residual_within_bound(poisson):
    flat = _randomise(poisson, 4)
    for region, x in (("left", 0.0), ("right", 2 * np.pi)):
        X = np.array([[x]])
        r = poisson.boundary_residuals(X, flat=flat, region=region)
        bound = np.exp(-poisson.beta_s) * poisson.residual_bound(X, flat=flat, region=region)
        assert max(float(v[0]) for v in r.values()) <= bound[0] * (1 + 1e-9) + 1e-14


def test_hardness_scales_with_beta_s():
    p = builtin("poisson1d")
    a5 = an.assemble(p, beta_s=5.0, main_hidden=(4,), sub_hidden=(4,))
    a10 = an.assemble(p, beta_s=10.0, main_hidden=(4,), sub_hidden=(4,))
    for r in a5.alphas:
        assert a10.alphas[r] == pytest.approx(2 * a5.alphas[r], rel=1e-12)
        assert a5.alphas[r] == pytest.approx(5.0 / (2 * np.pi), rel=1e-12)


def test_hardness_on_unit_separation():
    dom = geo.Domain(
        outer=geo.Interval(0.0, 1.0),
        regions={"a": geo.Interval(0.0, 1.0, sides=["lo"]), "b": geo.Interval(0.0, 1.0, sides=["hi"])},
    )
    prob = ProblemSpec(
        "rod", dom, ("T",), (True,),
        [BoundaryCondition.robin("a", 1.0, 1.0, 5.0), BoundaryCondition.robin("b", 1.0, 1.0, 5.0)],
        residuals=lambda s: [s.div_p(0)],
    )
    a = an.assemble(prob, beta_s=5.0, main_hidden=(4,), sub_hidden=(4,))
    assert a.alphas == {"a": pytest.approx(5.0), "b": pytest.approx(5.0)}


def test_input_gradient_matches_finite_differences(heat2):
    flat = _randomise(heat2, 5, 0.3)
    x0 = np.array([0.2, -0.4, 0.6])  # (x1, x2, t)
    st = heat2(x0[None, :2], x0[2:], flat)
    for c in range(heat2.layout.width):
        fd = central_diff(lambda z: heat2.predict(z[None, :2], z[2:], flat)[0, c], x0)
        assert np.allclose(st.y.tangent[:, 0, c], fd, rtol=1e-6, atol=1e-8)


def test_battery_components_and_networks():
    a = an.assemble(builtin("battery_pack"), main_hidden=(4,), sub_hidden=(4,), n_probe=512)
    assert len(a.slots) == 18
    assert set(a.params.names) == {"main"} | {s.name for s in a.slots}
    assert all(v > 0 for v in a.alphas.values())


def test_periodic_problem_is_rejected():
    with pytest.raises(an.AnsatzError):
        an.assemble(builtin("schrodinger"))


def test_soft_ansatz_layout_and_zero_network():
    p = builtin("poisson1d")
    soft = an.soft_ansatz(p, hidden=(8,))
    assert soft.layout.width == 2
    X = np.linspace(0.1, 6, 7)[:, None]
    assert np.array_equal(soft.predict(X, flat=np.zeros(soft.params.size)), np.zeros((7, 2)))
    plain = an.soft_ansatz(p, extra_fields=False, hidden=(8,))
    assert plain.layout.width == 1 and plain.jet_axis == 0
    with pytest.raises(an.AnsatzError):
        an.soft_ansatz(builtin("robin_annulus"), extra_fields=False)


def test_checkpoint_round_trip(tmp_path, poisson):
    from hardpinn import network as nw

    flat = _randomise(poisson, 6)
    nw.save_checkpoint(tmp_path / "c.json", poisson.params.networks(flat))
    fresh = an.assemble(builtin("poisson1d"), main_hidden=(16, 16), sub_hidden=(8,), seed=9)
    fresh.params.load(nw.load_checkpoint(tmp_path / "c.json"))
    assert np.array_equal(fresh.params.flat, flat)
