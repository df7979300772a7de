import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hardpinn import autodiff as ad
from hardpinn import network as nw

from conftest import central_diff


def test_init_is_deterministic():
    spec = nw.MlpSpec((2, 5, 3,))
    assert np.array_equal(nw.init(spec, 7).flat, nw.init(spec, 7).flat)
    assert not np.array_equal(nw.init(spec, 7).flat, nw.init(spec, 8).flat)


def test_parameter_count():
    assert nw.MlpSpec((1, 4, 1,)).n_params == 13


def test_glorot_bound_and_zero_bias():
    spec = nw.MlpSpec((50, 50, 50,))
    p = nw.init(spec, 0)
    lim = np.sqrt(6 / 100)
    for w, b in nw.unflatten(spec, p.flat):
        assert np.all(np.abs(w) <= lim)
        assert np.all(b == 0)


@pytest.mark.parametrize("widths", [[3], [2, 0, 1], []])
def test_invalid_spec(widths):
    with pytest.raises(ValueError):
        nw.MlpSpec(tuple(widths))


def test_zero_network():
    spec = nw.MlpSpec((2, 4, 3,))
    p = nw.MlpParams(spec, np.zeros(spec.n_params), 0)
    y = nw.forward(p, ad.lift_inputs(np.ones((2, 2))))
    assert np.all(y.value == 0) and np.all(y.tangent == 0)


def test_one_hidden_layer_by_hand():
    spec = nw.MlpSpec((1, 1, 1,))
    w, b, c = 0.7, -0.2, 1.9
    p = nw.MlpParams(spec, np.array([w, b, c, 0.0]), 0)
    x = 0.35
    assert nw.forward(p, np.array([[x]]))[0, 0] == pytest.approx(c * np.tanh(w * x + b))


def test_forward_tangent_matches_finite_differences():
    spec = nw.MlpSpec((3, 10, 10, 2,))
    p = nw.init(spec, 5)
    x = np.array([0.1, -0.4, 0.8])
    y = nw.forward(p, ad.lift_inputs(x[None]))
    for o in range(2):
        fd = central_diff(lambda z: nw.forward(p, z[None])[0, o], x)
        assert np.allclose(y.tangent[:, 0, o], fd, rtol=1e-6, atol=1e-10)


def test_dimension_mismatch():
    p = nw.init(nw.MlpSpec((2, 3, 1,)), 0)
    with pytest.raises(ValueError):
        nw.forward(p, np.ones((4, 3)))


@given(st.floats(0.1, 10.0))
def test_positive_homogeneity_in_last_layer(alpha):
    spec = nw.MlpSpec((2, 6, 2,))
    p = nw.init(spec, 1)
    x = np.random.default_rng(0).normal(size=(4, 2))
    base = nw.forward(p, x)
    scaled = p.flat.copy()
    ws, bs = spec.layer_slices()[-1][0], spec.layer_slices()[-1][2]
    scaled[ws] *= alpha
    scaled[bs] *= alpha
    assert np.allclose(nw.forward(p, x, scaled), alpha * base, rtol=1e-12, atol=1e-14)


@given(st.integers(0, 33), st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3))
def test_single_coordinate_perturbation(i, delta):
    spec = nw.MlpSpec((2, 5, 4,))
    p = nw.init(spec, 2)
    flat = p.flat.copy()
    flat[i] += delta
    before = nw.unflatten(spec, p.flat)
    after = nw.unflatten(spec, flat)
    changed = sum(int(np.sum(a != b)) for (wa, ba), (wb, bb) in zip(before, after) for a, b in ((wa, wb), (ba, bb)))
    assert changed == 1
    assert np.array_equal(nw.flatten(after), flat)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    spec = nw.MlpSpec((2, 4, 1,))
    p = nw.init(spec, 9)
    p.flat[:] += np.random.default_rng(0).normal(size=spec.n_params) * np.pi
    path = tmp_path / "ck.json"
    nw.save_checkpoint(path, {"main": p}, extra={"note": "x"})
    back = nw.load_checkpoint(path)["main"]
    assert back.spec == spec and back.seed == 9
    assert back.flat.tobytes() == p.flat.tobytes()
    assert json.loads(path.read_text())["format"].startswith("hardpinn-checkpoint")
