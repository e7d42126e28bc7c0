"""Pseudo-label expected gradients and influence of unlabeled samples.

For an unlabeled sample the true label is unknown, so the gradient is replaced
by the posterior-weighted sum of gradients for its top-K predicted classes:

    G = sum_{i<K} pred_i * grad l(z, label_i)

and the score is ``-s_test . G``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractViolation
from .influence import influence_score, influence_scores
from .model import Model


@dataclass(frozen=True)
class ExpectedGradientConfig:
    top_k: int = 1

    def __post_init__(self):
        if self.top_k < 1:
            raise ContractViolation("top_k must be >= 1")


def top_classes(probs, k: int) -> np.ndarray:
    """Indices of the ``k`` most probable classes; equal probabilities keep ascending index."""
    probs = np.asarray(probs)
    return np.argsort(-probs, axis=-1, kind="stable")[..., :k]


def _check_k(model, cfg):
    if cfg.top_k > model.num_classes:
        raise ContractViolation(f"top_k={cfg.top_k} exceeds number of classes {model.num_classes}")


def expected_gradient(model: Model, params, x, cfg: ExpectedGradientConfig | None = None) -> np.ndarray:
    return expected_gradients(model, params, np.atleast_2d(x), cfg)[0]


def expected_gradients(model: Model, params, X, cfg: ExpectedGradientConfig | None = None) -> np.ndarray:
    """Row ``i`` is the expected gradient of ``X[i]``; shape ``(n, d)``."""
    cfg = cfg or ExpectedGradientConfig()
    _check_k(model, cfg)
    P = model.predict_proba(params, X)
    order = top_classes(P, cfg.top_k)
    rows = np.arange(len(P))
    G = np.zeros((len(P), model.dim))
    for r in range(cfg.top_k):
        labels = order[:, r]
        G += P[rows, labels][:, None] * model.per_example_grads(params, X, labels)
    return G


def uuic_score(s_test, model: Model, params, x, cfg: ExpectedGradientConfig | None = None) -> float:
    return influence_score(s_test, expected_gradient(model, params, x, cfg))


def uuic_scores(s_test, model: Model, params, X, cfg: ExpectedGradientConfig | None = None) -> np.ndarray:
    return influence_scores(s_test, expected_gradients(model, params, X, cfg))
