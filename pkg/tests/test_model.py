import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isal.exceptions import ContractViolation, ConvergenceError
from isal.model import FixedCurvatureModel, LogisticModel, MLPModel, TrainConfig, make_model
from isal.oracle import finite_diff_gradient, finite_diff_hvp


def test_zero_weights_loss_is_ln2():
    m = LogisticModel(3, 2)
    assert m.loss(np.zeros(m.dim), np.array([0.3, -1.0, 2.0]), 0) == pytest.approx(np.log(2), abs=1e-12)


def test_logit_two_loss():
    m = LogisticModel(1, 2, l2=0.0)
    theta = m.pack([[0.0], [2.0]], [0.0, 0.0])
    assert m.loss(theta, np.array([1.0]), 1) == pytest.approx(-np.log(1 / (1 + np.exp(-2.0))), abs=1e-12)
    assert m.loss(theta, np.array([1.0]), 1) == pytest.approx(0.126928, abs=1e-6)


def test_l2_term_is_part_of_loss():
    m0, m1 = LogisticModel(2, 2, l2=0.0), LogisticModel(2, 2, l2=0.5)
    theta = np.arange(6, dtype=float) / 10
    x = np.array([1.0, -1.0])
    assert m1.loss(theta, x, 1) - m0.loss(theta, x, 1) == pytest.approx(0.25 * theta @ theta)


@pytest.mark.parametrize("model", [LogisticModel(2, 3), MLPModel(2, 3, hidden=4)])
def test_nan_params_rejected(model):
    theta = np.zeros(model.dim)
    theta[1] = np.nan
    with pytest.raises(ContractViolation):
        model.loss(theta, np.zeros(2), 0)


def test_dimension_mismatch_rejected():
    m = LogisticModel(2, 3)
    with pytest.raises(ContractViolation):
        m.loss(np.zeros(m.dim + 1), np.zeros(2), 0)
    with pytest.raises(ContractViolation):
        m.grad(np.zeros(m.dim), np.zeros(3), 0)
    with pytest.raises(ContractViolation):
        m.hvp(np.zeros(m.dim), np.zeros((1, 2)), [0], np.zeros(2))


def test_tied_binary_gradient_bias_pattern():
    m = LogisticModel(2, 2, l2=1e-3)
    g = m.grad(np.zeros(m.dim), np.array([0.4, 0.1]), 0)
    W, b = m.unpack(g)
    np.testing.assert_allclose(b, [-0.5, 0.5], atol=1e-15)
    g1 = m.grad(np.zeros(m.dim), np.array([0.4, 0.1]), 1)
    np.testing.assert_allclose(m.unpack(g1)[1], [0.5, -0.5], atol=1e-15)


@pytest.mark.parametrize("model", [LogisticModel(4, 3), MLPModel(3, 3, hidden=5)])
def test_grad_matches_finite_differences(model):
    rng = np.random.default_rng(1)
    for _ in range(5):
        theta = 0.5 * rng.standard_normal(model.dim)
        x = rng.standard_normal(model.num_features)
        label = int(rng.integers(model.num_classes))
        fd = finite_diff_gradient(model, theta, x, label, 1e-5)
        assert np.max(np.abs(model.grad(theta, x, label) - fd)) < 1e-6


def test_duplicate_equals_double_weight():
    m = LogisticModel(3, 2, l2=0.0)
    rng = np.random.default_rng(2)
    theta = rng.standard_normal(m.dim)
    X = rng.standard_normal((3, 3))
    y = np.array([0, 1, 1])
    dup = m.mean_grad(theta, np.vstack([X, X[:1]]), np.append(y, 0))
    weighted = m.mean_grad(theta, X, y, weights=[2.0, 1.0, 1.0])
    np.testing.assert_allclose(dup, weighted, rtol=1e-13, atol=1e-15)


def test_mean_grad_cases():
    m = LogisticModel(3, 3)
    rng = np.random.default_rng(3)
    theta = rng.standard_normal(m.dim)
    X = rng.standard_normal((5, 3))
    y = np.array([0, 2, 1, 1, 0])
    np.testing.assert_array_equal(m.mean_grad(theta, X[:1], y[:1]), m.grad(theta, X[0], y[0]))
    np.testing.assert_allclose(m.mean_grad(theta, X[[0, 0]], y[[0, 0]]), m.grad(theta, X[0], y[0]),
                               rtol=0, atol=1e-15)
    brute = sum(m.grad(theta, X[i], y[i]) for i in range(5)) / 5
    np.testing.assert_allclose(m.mean_grad(theta, X, y), brute, rtol=0, atol=1e-12)
    with pytest.raises(ContractViolation):
        m.mean_grad(theta, np.zeros((0, 3)), np.zeros(0, dtype=int))


def test_hvp_zero_vector():
    m = MLPModel(2, 2, hidden=3)
    theta = np.random.default_rng(0).standard_normal(m.dim)
    out = m.hvp(theta, np.ones((2, 2)), [0, 1], np.zeros(m.dim))
    np.testing.assert_array_equal(out, np.zeros(m.dim))


@pytest.mark.parametrize("model", [LogisticModel(6, 5), MLPModel(3, 3, hidden=4)])
def test_hvp_matches_finite_differences(model):
    assert model.dim <= 50
    rng = np.random.default_rng(4)
    theta = 0.5 * rng.standard_normal(model.dim)
    X = rng.standard_normal((7, model.num_features))
    y = rng.integers(model.num_classes, size=7)
    v = rng.standard_normal(model.dim)
    hv = model.hvp(theta, X, y, v)
    fd = finite_diff_hvp(model, theta, X, y, v, 1e-4)
    assert np.linalg.norm(hv - fd) / np.linalg.norm(fd) < 1e-5


def test_pure_l2_hvp():
    m = FixedCurvatureModel(LogisticModel(3, 2, l2=10.0), mu=10.0)
    v = np.arange(m.dim, dtype=float)
    np.testing.assert_array_equal(m.hvp(np.zeros(m.dim), np.zeros((1, 3)), [0], v), 10 * v)


def test_analytic_hessian_matches_hvp_columns():
    m = LogisticModel(3, 3, l2=1e-2)
    rng = np.random.default_rng(5)
    theta = rng.standard_normal(m.dim)
    X = rng.standard_normal((10, 3))
    y = rng.integers(3, size=10)
    H = m.hessian(theta, X, y)
    cols = np.column_stack([m.hvp(theta, X, y, e) for e in np.eye(m.dim)])
    np.testing.assert_allclose(H, cols, atol=1e-13)


def test_logistic_convexity_witness():
    m = LogisticModel(3, 4, l2=1e-3)
    rng = np.random.default_rng(6)
    X = rng.standard_normal((20, 3))
    y = rng.integers(4, size=20)
    for _ in range(50):
        theta = 2 * rng.standard_normal(m.dim)
        v = rng.standard_normal(m.dim)
        assert v @ m.hvp(theta, X, y, v) >= m.l2 * (v @ v) * (1 - 1e-12)


def test_predict_cases():
    m = LogisticModel(1, 2, l2=0.0)
    np.testing.assert_allclose(m.predict(np.zeros(m.dim), np.array([5.0])), [0.5, 0.5])
    theta = m.pack([[0.0], [0.0]], [2.0, 0.0])
    np.testing.assert_allclose(m.predict(theta, np.array([1.0])), [0.880797, 0.119203], atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=3, max_size=3), st.floats(-100, 100))
def test_softmax_shift_invariance(logits, c):
    m = LogisticModel(1, 3, l2=0.0)
    a = m.predict(m.pack(np.zeros((3, 1)), logits), np.zeros(1))
    b = m.predict(m.pack(np.zeros((3, 1)), np.array(logits) + c), np.zeros(1))
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-15)
    assert a.sum() == pytest.approx(1.0)


def test_single_example_training_converges():
    m = LogisticModel(2, 2, l2=1e-3)
    fit = m.train(np.array([[1.0, -1.0]]), np.array([1]))
    assert fit.grad_norm <= 1e-8


def test_nonconvergence_carries_grad_norm():
    m = LogisticModel(2, 2, l2=1e-3)
    rng = np.random.default_rng(7)
    X = rng.standard_normal((30, 2))
    y = (X[:, 0] > 0).astype(int)
    with pytest.raises(ConvergenceError) as info:
        m.train(X, y, TrainConfig(max_iter=1))
    assert info.value.grad_norm > 1e-8


def test_training_is_deterministic_and_stationary():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((25, 2))
    y = (X[:, 0] + 0.5 * rng.standard_normal(25) > 0).astype(int)
    m = LogisticModel(2, 2, l2=1e-3)
    a, b = m.train(X, y).params, m.train(X, y).params
    assert a.tobytes() == b.tobytes()
    assert np.max(np.abs(m.mean_grad(a, X, y))) <= 1e-8
    mlp = MLPModel(2, 2, hidden=4)
    cfg = TrainConfig(epochs=20)
    p1 = mlp.train(X, y, cfg, np.random.default_rng(3)).params
    p2 = mlp.train(X, y, cfg, np.random.default_rng(3)).params
    assert p1.tobytes() == p2.tobytes()


def test_embeddings():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((6, 3))
    lm = LogisticModel(3, 2)
    np.testing.assert_array_equal(lm.embedding(np.zeros(lm.dim), X), X)
    mlp = MLPModel(3, 2, hidden=5)
    theta = mlp.pack(np.zeros((5, 3)), np.zeros(5), rng.standard_normal((2, 5)), np.zeros(2))
    E = mlp.embedding(theta, X)
    assert E.shape == (6, 5)
    np.testing.assert_array_equal(E, 0.0)


def test_make_model_names():
    assert make_model("logistic", 2, 3).family == "multinomial-logistic"
    assert make_model("mlp-2layer", 2, 3, hidden=4).dim == 4 * 2 + 4 + 3 * 4 + 3
    with pytest.raises(ContractViolation):
        make_model("resnet", 2, 3)
