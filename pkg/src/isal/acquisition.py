"""Batch selection strategies.

Strategies only ever see pool features and ids. Every ranking breaks ties by
ascending example id.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import ContractViolation
from .influence import LissaConfig, estimate_s_test
from .model import Model
from .uuic import ExpectedGradientConfig, expected_gradients

STRATEGIES = ("isal", "grad_sim", "random", "entropy", "margin", "coreset")


@dataclass(frozen=True)
class SelectionRequest:
    pool_ids: np.ndarray
    pool_features: np.ndarray
    batch_size: int
    strategy: str = "isal"
    expected_gradient: ExpectedGradientConfig = field(default_factory=ExpectedGradientConfig)
    lissa: LissaConfig = field(default_factory=LissaConfig)
    seed: int = 0

    def __post_init__(self):
        ids = np.asarray(self.pool_ids, dtype=np.int64)
        feats = np.atleast_2d(np.asarray(self.pool_features, dtype=np.float64))
        if len(np.unique(ids)) != len(ids):
            raise ContractViolation("pool ids must be distinct")
        if feats.shape[0] != len(ids):
            raise ContractViolation("one feature row per pool id required")
        if not 1 <= self.batch_size <= len(ids):
            raise ContractViolation(f"batch_size {self.batch_size} not in [1, {len(ids)}]")
        if self.strategy not in STRATEGIES:
            raise ContractViolation(f"unknown strategy {self.strategy!r}")
        object.__setattr__(self, "pool_ids", ids)
        object.__setattr__(self, "pool_features", feats)


@dataclass
class SelectionResult:
    chosen_ids: np.ndarray
    scores: dict | None = None
    rng_trace: int | None = None
    diagnostics: dict = field(default_factory=dict)


def rank_ascending(ids, keys, k):
    """First ``k`` ids ordered by ``keys`` ascending, then by id."""
    order = np.lexsort((ids, keys))
    return np.asarray(ids)[order[:k]]


def _score_result(request, scores, chosen, **diag):
    scores = np.asarray(scores, dtype=np.float64)
    return SelectionResult(
        chosen_ids=chosen,
        scores=dict(zip(request.pool_ids.tolist(), scores.tolist())),
        rng_trace=request.seed,
        diagnostics={"score_min": float(scores.min()), "score_median": float(np.median(scores)),
                     "score_max": float(scores.max()), **diag},
    )


def select_isal(request: SelectionRequest, model: Model, params, labeled, reference) -> SelectionResult:
    """Influence selection: one s_test per call, then ``-s_test . G`` for every pool sample.

    ``labeled`` and ``reference`` are ``(X, y)`` pairs. The batch is the
    ``batch_size`` most negative scores.
    """
    X_ref, y_ref = reference
    if len(X_ref) == 0:
        raise ContractViolation("reference set is empty")
    X_lab, y_lab = labeled
    v = model.mean_grad(params, X_ref, y_ref)
    est = estimate_s_test(model, params, X_lab, y_lab, v, request.lissa)
    G = expected_gradients(model, params, request.pool_features, request.expected_gradient)
    scores = -(G @ est.s_test)
    chosen = rank_ascending(request.pool_ids, scores, request.batch_size)
    return _score_result(request, scores, chosen, s_test_scale=est.scale,
                         s_test_change=float(max(est.diagnostics)))


def select_grad_similarity(request: SelectionRequest, model: Model, params, labeled, reference) -> SelectionResult:
    """Like ISAL with the inverse Hessian dropped: score ``-grad l(R) . G``."""
    X_ref, y_ref = reference
    if len(X_ref) == 0:
        raise ContractViolation("reference set is empty")
    v = model.mean_grad(params, X_ref, y_ref)
    G = expected_gradients(model, params, request.pool_features, request.expected_gradient)
    scores = -(G @ v)
    return _score_result(request, scores, rank_ascending(request.pool_ids, scores, request.batch_size))


def select_random(request: SelectionRequest, rng=None) -> SelectionResult:
    rng = np.random.default_rng(request.seed if rng is None else rng)
    picked = rng.choice(len(request.pool_ids), size=request.batch_size, replace=False)
    return SelectionResult(np.sort(request.pool_ids[picked]), None, request.seed)


def entropy(P) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    return 0.0 - terms.sum(axis=-1)


def margin(P) -> np.ndarray:
    top2 = -np.sort(-np.asarray(P, dtype=np.float64), axis=-1)[..., :2]
    return top2[..., 0] - top2[..., 1]


def select_entropy(request: SelectionRequest, model: Model, params) -> SelectionResult:
    """Highest posterior entropy first."""
    H = entropy(model.predict_proba(params, request.pool_features))
    return _score_result(request, H, rank_ascending(request.pool_ids, -H, request.batch_size))


def select_margin(request: SelectionRequest, model: Model, params) -> SelectionResult:
    """Smallest gap between the two most probable classes first."""
    M = margin(model.predict_proba(params, request.pool_features))
    return _score_result(request, M, rank_ascending(request.pool_ids, M, request.batch_size))


def select_coreset_kcenter(request: SelectionRequest, embeddings_labeled, embeddings_pool) -> SelectionResult:
    """Greedy k-center: repeatedly take the pool point farthest from all current centers.

    ``embeddings_pool`` rows align with ``request.pool_ids``. The recorded
    ``pick_distances`` (the max-min distance at each pick) never increase.
    """
    E_lab = np.atleast_2d(np.asarray(embeddings_labeled, dtype=np.float64))
    E_pool = np.atleast_2d(np.asarray(embeddings_pool, dtype=np.float64))
    if E_lab.size == 0 or len(E_lab) == 0:
        raise ContractViolation("k-center needs at least one labeled center")
    if E_lab.shape[1] != E_pool.shape[1]:
        raise ContractViolation("labeled and pool embeddings differ in length")
    order = np.argsort(request.pool_ids, kind="stable")
    ids = request.pool_ids[order]
    E_pool = E_pool[order]
    dmin = cdist(E_pool, E_lab).min(axis=1)
    chosen, picks = [], []
    for _ in range(request.batch_size):
        j = int(np.argmax(dmin))        # first maximum = lowest id
        chosen.append(ids[j])
        picks.append(float(dmin[j]))
        dmin = np.minimum(dmin, cdist(E_pool, E_pool[j:j + 1])[:, 0])
        dmin[j] = -np.inf
    return SelectionResult(np.array(chosen, dtype=np.int64), None, request.seed,
                           {"pick_distances": picks})


def select(request: SelectionRequest, model: Model, params, labeled=None, reference=None) -> SelectionResult:
    """Dispatch on ``request.strategy``."""
    s = request.strategy
    if s == "isal":
        return select_isal(request, model, params, labeled, reference)
    if s == "grad_sim":
        return select_grad_similarity(request, model, params, labeled, reference)
    if s == "random":
        return select_random(request)
    if s == "entropy":
        return select_entropy(request, model, params)
    if s == "margin":
        return select_margin(request, model, params)
    return select_coreset_kcenter(request, model.embedding(params, labeled[0]),
                                  model.embedding(params, request.pool_features))
