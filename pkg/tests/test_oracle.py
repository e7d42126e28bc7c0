import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isal.checks import logistic_instance
from isal.exceptions import ContractViolation
from isal.model import LogisticModel, QuadraticModel
from isal.oracle import (predicted_parameter_change, quadratic_newton_check, rank_correlation,
                         retrain_influence, retrain_influences)


def test_rank_correlation_cases():
    a = {i: float(i) for i in range(6)}
    assert rank_correlation(a, a) == pytest.approx((1.0, 1.0))
    assert rank_correlation(a, {k: -v for k, v in a.items()}) == pytest.approx((-1.0, -1.0))
    rho, _ = rank_correlation(dict(enumerate([1, 2, 3, 5, 4])), dict(enumerate([1, 2, 3, 4, 5])))
    assert rho == pytest.approx(0.9, abs=1e-12)
    with pytest.raises(ContractViolation):
        rank_correlation({0: 1.0, 1: 2.0}, {0: 1.0, 2: 2.0})


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=20, unique=True),
       st.permutations(range(20)))
def test_rank_correlation_invariance_and_symmetry(values, perm):
    a = dict(enumerate(values))
    rho, tau = rank_correlation(a, {k: 4.0 * v for k, v in a.items()})
    assert rho == pytest.approx(1.0) and tau == pytest.approx(1.0)
    b = {k: float(perm[k]) for k in a}
    assert rank_correlation(a, b) == pytest.approx(rank_correlation(b, a))


def test_newton_step_is_exact_on_quadratics():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    m = QuadraticModel(A, l2=0.1)
    X = np.random.default_rng(0).standard_normal((5, 2))
    theta = m.train(X).params
    err, size = quadratic_newton_check(m, theta, X, None, (np.array([3.0, -2.0]), None))
    assert size > 0.1
    assert err < 1e-10


def test_newton_step_close_for_duplicate_candidate():
    ratios = []
    for seed in range(5):
        (X, y), _, _ = logistic_instance(seed)
        m = LogisticModel(4, 2)
        theta = m.train(X, y).params
        err, size = quadratic_newton_check(m, theta, X, y, (X[0], y[0]))
        ratios.append(err / size)
    assert max(ratios) < 0.2


def test_parameter_change_is_linear_in_epsilon():
    m = QuadraticModel(np.diag([1.0, 3.0]), l2=0.5)
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    theta = m.train(X).params
    cand = (np.array([4.0, -1.0]), None)
    d1 = predicted_parameter_change(m, theta, X, None, cand, 1 / 3)
    d2 = predicted_parameter_change(m, theta, X, None, cand, 2 / 3)
    np.testing.assert_allclose(d2, 2 * d1, rtol=1e-14)


def test_duplicate_moves_less_than_novel_candidate():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal([-2, 0], 0.4, (15, 2)), rng.normal([2, 0], 0.4, (15, 2))])
    y = np.repeat([0, 1], 15)
    m = LogisticModel(2, 2, l2=1e-3)
    # the reference set covers a third region that the labeled set never saw
    Xr = np.vstack([X, rng.normal([0, 3], 0.4, (10, 2))])
    yr = np.concatenate([y, np.ones(10, dtype=int)])
    dup = retrain_influence(m, X, y, (X[3], y[3]), Xr, yr)
    novel = retrain_influence(m, X, y, (np.array([0.0, 3.0]), 1), Xr, yr)
    assert abs(dup) < abs(novel)


def test_retrain_influences_matches_single_calls():
    (X, y), (Xp, yp), (Xr, yr) = logistic_instance(1, n_pool=4)
    m = LogisticModel(4, 2)
    batch = retrain_influences(m, X, y, Xp, yp, Xr, yr)
    single = [retrain_influence(m, X, y, (Xp[i], yp[i]), Xr, yr) for i in range(4)]
    np.testing.assert_allclose(batch, single, rtol=1e-9, atol=1e-14)


def test_pool_guard():
    m = LogisticModel(1, 2)
    with pytest.raises(ContractViolation):
        retrain_influences(m, np.zeros((2, 1)), [0, 1], np.zeros((501, 1)), np.zeros(501, int),
                           np.zeros((1, 1)), [0])
