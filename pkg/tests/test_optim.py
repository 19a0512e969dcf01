import numpy as np
import pytest

from hoggcn.autodiff import Tensor
from hoggcn.optim import Adam, AdamSettings


def make(*values):
    return {f"p{i}": Tensor(np.array(v, dtype=float), requires_grad=True)
            for i, v in enumerate(values)}


def test_zero_gradient_leaves_parameters():
    params = make([1.0, -2.0], [[3.0]])
    before = {k: p.value.copy() for k, p in params.items()}
    opt = Adam(params, AdamSettings(weight_decay=0.0))
    for _ in range(5):
        opt.step({k: np.zeros_like(p.value) for k, p in params.items()})
    for k in params:
        assert np.array_equal(params[k].value, before[k])
    assert opt.t == 5


@pytest.mark.parametrize("g", [0.3, -4.0, 1e-3])
def test_first_step_closed_form(g):
    s = AdamSettings(lr=0.01, weight_decay=0.0)
    params = make([0.5])
    Adam(params, s).step({"p0": np.array([g])})
    # bias-corrected moments are g and g^2 on the first step
    expected = 0.5 - s.lr * g / (abs(g) + s.eps)
    assert params["p0"].value[0] == pytest.approx(expected, rel=1e-15, abs=1e-15)
    assert abs(params["p0"].value[0] - 0.5) == pytest.approx(s.lr, rel=1e-4)


def test_identical_parameters_get_identical_updates():
    params = make([1.0, 2.0], [1.0, 2.0])
    opt = Adam(params)
    rng = np.random.default_rng(0)
    for _ in range(4):
        g = rng.standard_normal(2)
        opt.step({"p0": g, "p1": g.copy()})
    assert np.array_equal(params["p0"].value, params["p1"].value)


def test_zero_learning_rate_is_bit_identical():
    rng = np.random.default_rng(1)
    params = make(rng.standard_normal((3, 4)))
    before = params["p0"].value.copy()
    opt = Adam(params, AdamSettings(lr=0.0))
    for _ in range(3):
        opt.step({"p0": rng.standard_normal((3, 4))})
    assert np.array_equal(params["p0"].value, before)


def test_nonfinite_gradient_names_parameter():
    params = make([1.0])
    with pytest.raises(FloatingPointError, match="p0"):
        Adam(params).step({"p0": np.array([np.nan])})


def test_weight_decay_only_on_selected():
    params = make([1.0], [1.0])
    opt = Adam(params, AdamSettings(lr=0.1, weight_decay=0.5), decay={"p0"})
    opt.step({"p0": np.zeros(1), "p1": np.zeros(1)})
    assert params["p0"].value[0] < 1.0
    assert params["p1"].value[0] == 1.0


def test_moment_shapes_and_step_counter():
    params = make(np.zeros((2, 3)), np.zeros(4))
    opt = Adam(params)
    for t in range(1, 4):
        opt.step({k: np.ones_like(p.value) for k, p in params.items()})
        assert opt.t == t
    for k, p in params.items():
        assert opt.m[k].shape == p.value.shape == opt.v[k].shape
