"""Inverse-Hessian-vector products and influence scores.

``estimate_s_test`` runs the truncated Neumann recursion

    s_0 = v,   s_i = v + (I - H~_{z_i}) s_{i-1},   H~_z = (H_z + lambda I) / sigma

with one labeled example per step (cycling through ``sample_count`` distinct examples
drawn without replacement), then returns ``s_k / sigma``. Averaging
``repeats_p`` independent runs gives the final estimate. ``exact_inverse_hvp``
is the dense-solve reference used to check it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import ContractViolation, DivergenceError, NotPositiveDefinite
from .model import DENSE_LIMIT, Model

DIVERGENCE_FACTOR = 1e8


@dataclass(frozen=True)
class LissaConfig:
    depth_k: int = 1000
    repeats_p: int = 4
    sample_count: int = 250        # clipped to the labeled-set size
    damping_lambda: float = 0.01
    scale_sigma: float | None = None   # None: see choose_scale
    seed: int = 0

    def __post_init__(self):
        if self.depth_k < 1 or self.repeats_p < 1 or self.sample_count < 1:
            raise ContractViolation("depth_k, repeats_p and sample_count must be >= 1")
        if self.damping_lambda < 0:
            raise ContractViolation("damping_lambda must be >= 0")
        if self.scale_sigma is not None and not self.scale_sigma > 0:
            raise ContractViolation("scale_sigma must be > 0")


@dataclass
class STestResult:
    s_test: np.ndarray
    per_repeat: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)   # final relative change per repeat
    scale: float = 1.0


def top_eigenvalue(model: Model, params, X, y, damping=0.0, steps=5, seed=0) -> float:
    """Power-iteration estimate of the largest eigenvalue of ``H + damping * I``."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(model.dim)
    u /= np.linalg.norm(u)
    est = 0.0
    for _ in range(steps):
        w = model.hvp(params, X, y, u) + damping * u
        est = float(u @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        u = w / nw
    return float(max(est, u @ (model.hvp(params, X, y, u) + damping * u)))


def choose_scale(eigenvalue: float, depth: int = 1, damping: float = 0.0) -> float:
    """Power-of-two scale for the recursion.

    At least the smallest power of two at or above ``eigenvalue`` (stability:
    every sampled step is then non-expansive). When the depth budget allows,
    the scale grows to the largest power of two at or below
    ``depth * damping / 2``: the damping alone still contracts the error by
    ``exp(-2)`` or better, while the final iterate's sampling noise shrinks
    roughly like ``1 / sqrt(scale)``.
    """
    stable = 1.0 if eigenvalue <= 0 else 2.0 ** math.ceil(math.log2(eigenvalue) - 1e-9)
    budget = depth * damping / 2.0
    if budget >= 1.0:
        stable = max(stable, 2.0 ** math.floor(math.log2(budget)))
    return stable


def lissa_recursion(hvp_step, v, depth, damping=0.0, scale=1.0, trace=None):
    """Core recursion. ``hvp_step(i, x)`` returns the sampled Hessian at step ``i`` times ``x``.

    Returns ``(s_k / scale, relative change of the last step)``. If ``trace`` is a
    list, every iterate ``s_0 .. s_k`` (before un-scaling) is appended to it.
    """
    v = np.asarray(v, dtype=np.float64)
    limit = DIVERGENCE_FACTOR * max(np.linalg.norm(v), np.finfo(float).tiny)
    s = v.copy()
    if trace is not None:
        trace.append(s.copy())
    change = 0.0
    for i in range(depth):
        nxt = v + s - (hvp_step(i, s) + damping * s) / scale
        norm = np.linalg.norm(nxt)
        if not np.isfinite(norm) or norm > limit:
            raise DivergenceError(
                f"s_test recursion diverged at step {i + 1} (norm {norm:.3e}); "
                "increase damping_lambda or scale_sigma")
        change = np.linalg.norm(nxt - s) / max(norm, np.finfo(float).tiny)
        s = nxt
        if trace is not None:
            trace.append(s.copy())
    return s / scale, float(change)


def estimate_s_test(model: Model, params, X, y, v, cfg: LissaConfig | None = None) -> STestResult:
    """Stochastic estimate of ``(H + lambda I)^{-1} v`` over the labeled set ``(X, y)``."""
    cfg = cfg or LissaConfig()
    params = model.check_params(params)
    v = model._check_vector(v)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = len(X)
    if n == 0:
        raise ContractViolation("labeled set is empty")
    m = min(cfg.sample_count, n)
    draws = [np.random.default_rng([cfg.seed, run]).permutation(n)[:m]
             for run in range(cfg.repeats_p)]
    if cfg.scale_sigma is None:
        # every sampled H~_z must stay below I, otherwise single steps expand
        scale = choose_scale(max(
            top_eigenvalue(model, params, X[j:j + 1], y[j:j + 1], cfg.damping_lambda, seed=cfg.seed)
            for j in np.unique(np.concatenate(draws))), cfg.depth_k, cfg.damping_lambda)
    else:
        scale = float(cfg.scale_sigma)

    ops = {}

    def operator(j):
        if j not in ops:
            ops[j] = model.hvp_operator(params, X[j:j + 1], y[j:j + 1])
        return ops[j]

    per_repeat, diag = [], []
    for drawn in draws:
        def step(i, x, drawn=drawn):
            return operator(drawn[i % m])(x)

        s, change = lissa_recursion(step, v, cfg.depth_k, cfg.damping_lambda, scale)
        per_repeat.append(s)
        diag.append(change)
    s_test = np.mean(per_repeat, axis=0)
    return STestResult(s_test, per_repeat, diag, scale)


def exact_inverse_hvp(model: Model, params, X, y, v, damping: float = 0.0) -> np.ndarray:
    """Solve ``(H + damping I) x = v`` with a dense Cholesky factorization."""
    params = model.check_params(params)
    v = model._check_vector(v)
    if model.dim > DENSE_LIMIT:
        raise ContractViolation(f"dense solve limited to d <= {DENSE_LIMIT}, got {model.dim}")
    d = model.dim
    op = model.hvp_operator(params, X, y)
    H = np.empty((d, d))
    e = np.zeros(d)
    for j in range(d):
        e[j] = 1.0
        H[:, j] = op(e)
        e[j] = 0.0
    H = 0.5 * (H + H.T) + damping * np.eye(d)
    try:
        factor = scipy.linalg.cho_factor(H)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"Hessian is not positive definite: {exc}") from None
    return scipy.linalg.cho_solve(factor, v)


def influence_score(s_test, g) -> float:
    """``-s_test . g``; more negative means the sample lowers reference loss more."""
    s_test = np.asarray(s_test, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if s_test.shape != g.shape:
        raise ContractViolation(f"length mismatch: {s_test.shape} vs {g.shape}")
    return -float(s_test @ g)


def influence_scores(s_test, G) -> np.ndarray:
    """Vectorized :func:`influence_score` over the rows of ``G``."""
    G = np.atleast_2d(np.asarray(G, dtype=np.float64))
    if G.shape[1] != np.shape(s_test)[0]:
        raise ContractViolation("length mismatch between s_test and gradients")
    return -(G @ s_test)
