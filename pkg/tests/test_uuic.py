import numpy as np
import pytest

from isal.data import gen_blobs
from isal.exceptions import ContractViolation
from isal.influence import exact_inverse_hvp, influence_score
from isal.model import LogisticModel
from isal.uuic import ExpectedGradientConfig, expected_gradient, expected_gradients, top_classes, uuic_score


def two_class_setup(logit_gap):
    m = LogisticModel(1, 2, l2=0.0)
    theta = m.pack([[0.5], [-0.5]], [logit_gap, 0.0])
    return m, theta, np.array([1.0])


def test_k1_is_weighted_argmax_gradient():
    m, theta, x = two_class_setup(np.log(7 / 3) - 1.0)
    p = m.predict(theta, x)
    np.testing.assert_allclose(p, [0.7, 0.3])
    G = expected_gradient(m, theta, x, ExpectedGradientConfig(1))
    np.testing.assert_allclose(G, p[0] * m.grad(theta, x, 0), rtol=1e-15)


def test_k2_weighted_sum():
    m, theta, x = two_class_setup(np.log(7 / 3) - 1.0)
    g0, g1 = m.grad(theta, x, 0), m.grad(theta, x, 1)
    G = expected_gradient(m, theta, x, ExpectedGradientConfig(2))
    np.testing.assert_allclose(G, 0.7 * g0 + 0.3 * g1, atol=1e-15)


def test_uniform_tie_uses_class_order():
    m = LogisticModel(2, 2, l2=1e-3)
    theta = np.zeros(m.dim)
    x = np.array([0.3, -0.2])
    np.testing.assert_array_equal(top_classes(m.predict(theta, x), 2), [0, 1])
    np.testing.assert_array_equal(top_classes(np.array([0.25, 0.25, 0.5]), 3), [2, 0, 1])
    G = expected_gradient(m, theta, x, ExpectedGradientConfig(2))
    np.testing.assert_allclose(G, (m.grad(theta, x, 0) + m.grad(theta, x, 1)) / 2, atol=1e-16)


def test_top_k_above_c_rejected():
    m = LogisticModel(2, 3)
    with pytest.raises(ContractViolation):
        expected_gradient(m, np.zeros(m.dim), np.zeros(2), ExpectedGradientConfig(4))
    with pytest.raises(ContractViolation):
        ExpectedGradientConfig(0)


def test_k_equals_c_is_posterior_average_over_all_classes():
    m = LogisticModel(3, 4, l2=1e-3)
    rng = np.random.default_rng(0)
    theta = rng.standard_normal(m.dim)
    X = rng.standard_normal((6, 3))
    G = expected_gradients(m, theta, X, ExpectedGradientConfig(4))
    for x, row in zip(X, G):
        p = m.predict(theta, x)
        brute = sum(p[c] * m.grad(theta, x, c) for c in range(4))
        np.testing.assert_allclose(row, brute, atol=1e-14)


def test_zero_s_test_scores_zero():
    m = LogisticModel(2, 3)
    theta = np.random.default_rng(1).standard_normal(m.dim)
    for x in np.random.default_rng(2).standard_normal((4, 2)):
        assert uuic_score(np.zeros(m.dim), m, theta, x) == 0.0


def test_well_separated_point_matches_true_label_score():
    data = gen_blobs(2, 30, centers=[[-4.0, 0.0], [4.0, 0.0]], spread=0.5, seed=0)
    m = LogisticModel(2, 2, l2=1e-3)
    theta = m.train(data.X, data.y).params
    s = exact_inverse_hvp(m, theta, data.X, data.y, m.mean_grad(theta, data.X, data.y) + 0.1)
    x = np.array([12.0, 0.0])
    assert m.predict(theta, x)[1] > 1 - 1e-7
    true_score = influence_score(s, m.grad(theta, x, 1))
    assert uuic_score(s, m, theta, x) == pytest.approx(true_score, abs=1e-6)


def test_gradient_cancellation_near_uniform():
    m = LogisticModel(2, 2, l2=0.0)
    theta = m.pack([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0])
    x = np.array([1e-3, 0.5])
    g1 = m.grad(theta, x, int(np.argmax(m.predict(theta, x))))
    G1 = expected_gradient(m, theta, x, ExpectedGradientConfig(1))
    G2 = expected_gradient(m, theta, x, ExpectedGradientConfig(2))
    assert np.linalg.norm(G2) < 1e-9 * np.linalg.norm(g1)
    assert np.linalg.norm(G2) < np.linalg.norm(G1)
