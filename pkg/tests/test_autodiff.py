"""Reverse-mode engine: gradients vs central differences, optimizer math."""

import numpy as np
import pytest

from conftest import assert_close, central_difference
from nearmiss import autodiff as ad
from nearmiss.autodiff import Tensor
from nearmiss.errors import ContractError, DimensionError, TrainingError
from nearmiss.nn import ParamStore, adam_step, dense


def test_linear_gradient():
    w = Tensor(2.0, requires_grad=True)
    loss = w * 3.0
    loss.backward()
    assert w.grad == 3.0


def test_power_rule():
    w = Tensor(2.0, requires_grad=True)
    (w**2).backward()
    assert w.grad == 4.0


def test_backward_requires_scalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        (w * 2.0).backward()


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError) as err:
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 5)))
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)


PRIMITIVES = [
    ("exp", ad.exp),
    ("log", lambda t: ad.log(t + 3.0)),
    ("tanh", ad.tanh),
    ("sigmoid", ad.sigmoid),
    ("relu", ad.relu),
    ("softplus", ad.softplus),
    ("silu", ad.silu),
    ("square", lambda t: t**2),
    ("mean", lambda t: t.mean(axis=0)),
]


@pytest.mark.parametrize("name,op", PRIMITIVES, ids=[p[0] for p in PRIMITIVES])
def test_primitive_gradients_match_finite_differences(name, op):
    rng = np.random.default_rng(hash(name) % 2**32)
    x = Tensor(rng.uniform(-2.0, 2.0, (4, 3)), requires_grad=True)
    op(x).sum().backward()
    for index in [(0, 0), (1, 2), (3, 1)]:
        fd = central_difference(lambda: op(x).sum().item(), x.data, index)
        assert_close(x.grad[index], fd, label=name)


def test_three_layer_network_gradients():
    rng = np.random.default_rng(7)
    store = ParamStore()
    w1 = store.add("w1", rng.uniform(-1, 1, (5, 8)))
    b1 = store.add("b1", rng.uniform(-1, 1, 8))
    w2 = store.add("w2", rng.uniform(-1, 1, (8, 8)))
    b2 = store.add("b2", rng.uniform(-1, 1, 8))
    w3 = store.add("w3", rng.uniform(-1, 1, (8, 1)))
    x = rng.uniform(-2, 2, (6, 5))

    def forward():
        h = dense(x, w1, b1, "tanh")
        h = dense(h, w2, b2, "silu")
        return dense(h, w3).sum()

    forward().backward()
    grads = {name: tensor.grad.copy() for name, tensor in store.items()}
    for name, tensor in store.items():
        flat = [tuple(np.unravel_index(i, tensor.shape)) for i in
                np.random.default_rng(0).choice(tensor.data.size, 3, replace=False)]
        for index in flat:
            fd = central_difference(lambda: forward().item(), tensor.data, index)
            assert_close(grads[name][index], fd, label="3-layer net")


def test_gradient_of_sum_is_sum_of_gradients():
    rng = np.random.default_rng(3)
    x = Tensor(rng.uniform(-2, 2, 5), requires_grad=True)
    (ad.exp(x).sum() + ad.tanh(x).sum()).backward()
    combined = x.grad.copy()
    x.grad = None
    ad.exp(x).sum().backward()
    first = x.grad.copy()
    x.grad = None
    ad.tanh(x).sum().backward()
    assert_close(combined, first + x.grad, rtol=1e-12, atol=0)


def test_forward_deterministic():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((3, 3)))
    w = Tensor(rng.standard_normal((3, 3)))
    a = (ad.silu(x @ w)).data
    b = (ad.silu(x @ w)).data
    assert np.array_equal(a, b)


# -- linear scan -------------------------------------------------------------


def test_scan_toy_recurrence():
    a = Tensor(np.full((1, 3, 1), 0.5))
    b = Tensor(np.ones((1, 3, 1)))
    expected = [1.0, 1.5, 1.75]
    assert np.allclose(ad.linear_scan(a, b).data.ravel(), expected)
    assert np.allclose(ad.linear_scan(a, b, parallel=True).data.ravel(), expected)


@pytest.mark.parametrize("parallel", [False, True], ids=["sequential", "parallel"])
def test_scan_gradients(parallel):
    rng = np.random.default_rng(5)
    a = Tensor(rng.uniform(0.1, 0.9, (2, 6, 3)), requires_grad=True)
    b = Tensor(rng.uniform(-1, 1, (2, 6, 3)), requires_grad=True)
    weights = rng.standard_normal((2, 6, 3))

    def forward():
        return (ad.linear_scan(a, b, parallel=parallel) * Tensor(weights)).sum()

    forward().backward()
    grads = {"a": a.grad.copy(), "b": b.grad.copy()}
    for name, tensor in (("a", a), ("b", b)):
        for index in [(0, 0, 0), (1, 3, 2), (0, 5, 1)]:
            fd = central_difference(lambda: forward().item(), tensor.data, index)
            assert_close(grads[name][index], fd, label="scan")


def test_scan_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.linear_scan(Tensor(np.ones((1, 3, 2))), Tensor(np.ones((1, 4, 2))))


# -- dense layer -------------------------------------------------------------


def test_dense_identity_map():
    out = dense([1.0, 0.0], np.eye(2), np.zeros(2))
    assert np.array_equal(out.data, [1.0, 0.0])


def test_dense_relu_clamp():
    out = dense([-1.0], np.ones((1, 1)), np.zeros(1), "relu")
    assert np.array_equal(out.data, [0.0])


def test_dense_sigmoid_value():
    out = dense([1.0], np.ones((1, 1)), np.zeros(1), "sigmoid")
    assert_close(out.data, [0.7310585786300049], rtol=1e-12, atol=0)


def test_dense_unknown_activation():
    with pytest.raises(ContractError):
        dense([1.0], np.ones((1, 1)), activation="softmax")


# -- Adam --------------------------------------------------------------------


def test_adam_zero_gradient_only_increments_step():
    store = ParamStore()
    store.add("w", [1.0, -2.0])
    before = store["w"].data.copy()
    adam_step(store, {"w": np.zeros(2)}, lr=0.1)
    assert np.array_equal(store["w"].data, before)
    assert store.step_count("w") == 1


def test_adam_first_step_magnitude():
    store = ParamStore()
    store.add("w", [0.0, 0.0])
    adam_step(store, {"w": np.array([0.3, -4.0])}, lr=0.01)
    # bias-corrected first step is lr * g / (|g| + eps) ~= lr * sign(g)
    assert_close(store["w"].data, [-0.01, 0.01], rtol=1e-6)


def test_adam_second_moment_after_two_identical_steps():
    store = ParamStore()
    store.add("w", [0.0])
    g = np.array([0.7])
    adam_step(store, {"w": g}, lr=0.0)
    adam_step(store, {"w": g}, lr=0.0)
    v = store._moment2["w"]
    v_hat = v / (1.0 - 0.999**2)
    assert_close(v_hat, g * g, rtol=1e-12, atol=0)


def test_adam_rejects_non_finite_gradient():
    store = ParamStore()
    store.add("layer/w", [1.0])
    with pytest.raises(TrainingError) as err:
        adam_step(store, {"layer/w": np.array([np.nan])}, lr=0.1)
    assert "layer/w" in str(err.value)


def test_param_store_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    store = ParamStore()
    store.add("a/w", rng.standard_normal((3, 4)))
    store.add("b", rng.standard_normal(5))
    path = tmp_path / "store.json"
    store.save(str(path))
    restored = ParamStore.load(str(path))
    assert restored.names() == store.names()
    for name in store.names():
        assert np.array_equal(restored[name].data, store[name].data)
