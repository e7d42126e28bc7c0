"""Brute-force references: retraining, dense Newton steps, finite differences, rank correlation.

These are deliberately slow and only meant for desk-scale instances.
"""
from __future__ import annotations

import numpy as np
from scipy import stats

from .exceptions import ContractViolation
from .influence import exact_inverse_hvp
from .model import Model, TrainConfig

MAX_POOL = 500
MAX_DIM = 2000


def _append(X, y, x, label):
    X2 = np.vstack([X, np.atleast_2d(x)])
    y2 = None if y is None else np.append(np.asarray(y), label)
    return X2, y2


def retrain_influence(model: Model, X, y, candidate, X_ref, y_ref,
                      config: TrainConfig | None = None, base_params=None) -> float:
    """Change in mean reference loss after retraining on the labeled set plus ``candidate``.

    ``candidate`` is ``(features, true_label)``. Negative values mean the
    candidate helped. ``base_params`` may carry an already-trained optimum for
    the unaugmented set; it is recomputed otherwise.
    """
    if model.dim > MAX_DIM:
        raise ContractViolation(f"retraining oracle limited to d <= {MAX_DIM}")
    if base_params is None:
        base_params = model.train(X, y, config).params
    x, label = candidate
    X2, y2 = _append(X, y, x, label)
    # warm start only affects runtime for convex families: the optimum is unique
    new = model.train(X2, y2, config, init=base_params).params
    return model.mean_loss(new, X_ref, y_ref) - model.mean_loss(base_params, X_ref, y_ref)


def retrain_influences(model: Model, X, y, X_pool, y_pool, X_ref, y_ref,
                       config: TrainConfig | None = None) -> np.ndarray:
    """:func:`retrain_influence` for every pool row."""
    if len(X_pool) > MAX_POOL:
        raise ContractViolation(f"retraining oracle limited to pools of {MAX_POOL}")
    base = model.train(X, y, config).params
    return np.array([retrain_influence(model, X, y, (X_pool[i], y_pool[i]), X_ref, y_ref,
                                       config, base_params=base)
                     for i in range(len(X_pool))])


def quadratic_newton_check(model: Model, params, X, y, candidate, config=None):
    """Compare the retrained parameter change with one Newton step on the augmented loss.

    Returns ``(||delta - newton||, ||delta||)`` where ``delta`` is the change
    obtained by retraining on the labeled set plus ``candidate``.
    """
    x, label = candidate
    X2, y2 = _append(X, y, x, label)
    g = model.mean_grad(params, X2, y2)
    newton = -exact_inverse_hvp(model, params, X2, y2, g)
    delta = model.train(X2, y2, config, init=params).params - params
    return float(np.linalg.norm(delta - newton)), float(np.linalg.norm(delta))


def predicted_parameter_change(model: Model, params, X, y, candidate, epsilon: float) -> np.ndarray:
    """First-order change ``-epsilon H^{-1} grad l(candidate)`` from upweighting by ``epsilon``."""
    x, label = candidate
    return -epsilon * exact_inverse_hvp(model, params, X, y, model.grad(params, x, label))


def finite_diff_gradient(model: Model, params, x, label, epsilon: float = 1e-5) -> np.ndarray:
    params = model.check_params(params)
    out = np.empty(model.dim)
    e = np.zeros(model.dim)
    for j in range(model.dim):
        e[j] = epsilon
        out[j] = (model.loss(params + e, x, label) - model.loss(params - e, x, label)) / (2 * epsilon)
        e[j] = 0.0
    return out


def finite_diff_hvp(model: Model, params, X, y, v, epsilon: float = 1e-4) -> np.ndarray:
    """Central difference of the mean gradient along ``v``."""
    v = np.asarray(v, dtype=np.float64)
    return (model.mean_grad(params + epsilon * v, X, y)
            - model.mean_grad(params - epsilon * v, X, y)) / (2 * epsilon)


def rank_correlation(a: dict, b: dict) -> tuple[float, float]:
    """Spearman (average ranks for ties) and Kendall tau-b between two keyed score maps."""
    if set(a) != set(b):
        raise ContractViolation("score maps have different keys")
    if len(a) < 2:
        raise ContractViolation("need at least two keys")
    keys = sorted(a)
    va = np.array([a[k] for k in keys], dtype=np.float64)
    vb = np.array([b[k] for k in keys], dtype=np.float64)
    rho = stats.spearmanr(va, vb).statistic
    tau = stats.kendalltau(va, vb, variant="b").statistic
    return float(rho), float(tau)
