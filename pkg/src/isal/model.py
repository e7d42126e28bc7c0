"""Model families exposing loss, gradients, Hessian-vector products and posteriors.

Parameters are flat float64 vectors. Set-level operations take a feature matrix
``X`` of shape ``(n, f)`` and integer labels ``y``; rows are expected in
ascending example-id order so that reductions are reproducible.

The per-example loss is cross-entropy plus ``l2 / 2 * ||theta||^2``, so the mean
over a set equals mean cross-entropy plus one copy of the penalty.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from scipy.special import log_softmax

from .exceptions import ContractViolation, ConvergenceError

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class TrainConfig:
    tol: float = 1e-8          # convex families: stop when ||grad||_inf <= tol
    max_iter: int = 100        # Newton iterations
    epochs: int = 300          # MLP only
    lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 16


class TrainResult(NamedTuple):
    params: np.ndarray
    grad_norm: float
    iterations: int


class Model:
    """Shared plumbing; subclasses implement the batched primitives."""

    num_classes: int
    l2: float
    convex: bool = False

    @property
    def dim(self) -> int:
        raise NotImplementedError

    # -- validation ------------------------------------------------------
    def check_params(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.dim,):
            raise ContractViolation(f"expected parameter vector of length {self.dim}, got {params.shape}")
        if not np.all(np.isfinite(params)):
            raise ContractViolation("parameter vector contains NaN or Inf")
        return params

    def _check_batch(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.num_features:
            raise ContractViolation(f"expected features of width {self.num_features}, got {X.shape}")
        if X.shape[0] == 0:
            raise ContractViolation("empty example set")
        if y is None:
            return X
        y = np.atleast_1d(np.asarray(y, dtype=np.int64))
        if y.shape != (X.shape[0],):
            raise ContractViolation("labels do not match number of examples")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ContractViolation(f"label out of range [0, {self.num_classes})")
        return X, y

    def _check_vector(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ContractViolation(f"expected vector of length {self.dim}, got {v.shape}")
        return v

    # -- per-example API --------------------------------------------------
    def loss(self, params, x, label) -> float:
        return float(self.losses(params, x, label)[0])

    def grad(self, params, x, label) -> np.ndarray:
        return self.per_example_grads(params, x, label)[0]

    def predict(self, params, x) -> np.ndarray:
        return self.predict_proba(params, x)[0]

    # -- set API ------------------------------------------------------------
    def mean_loss(self, params, X, y) -> float:
        return float(np.mean(self.losses(params, X, y)))

    def mean_grad(self, params, X, y, weights=None) -> np.ndarray:
        """Mean of per-example gradients (weighted mean if ``weights`` given)."""
        G = self.per_example_grads(params, X, y)
        if weights is None:
            return G.mean(axis=0)
        w = np.asarray(weights, dtype=np.float64)
        return (w @ G) / w.sum()

    def hvp(self, params, X, y, v) -> np.ndarray:
        """Mean Hessian of the per-example loss over ``(X, y)`` times ``v``."""
        return self.hvp_operator(params, X, y)(self._check_vector(v))

    def hvp_operator(self, params, X, y):
        """Return ``v -> H v`` with the forward pass over ``(X, y)`` cached."""
        raise NotImplementedError

    def hessian(self, params, X, y) -> np.ndarray:
        """Dense mean Hessian assembled column by column from :meth:`hvp`."""
        d = self.dim
        if d > DENSE_LIMIT:
            raise ContractViolation(f"refusing to materialize a {d}x{d} Hessian (limit {DENSE_LIMIT})")
        H = np.empty((d, d))
        e = np.zeros(d)
        for j in range(d):
            e[j] = 1.0
            H[:, j] = self.hvp(params, X, y, e)
            e[j] = 0.0
        return 0.5 * (H + H.T)

    def predict_proba(self, params, X) -> np.ndarray:
        return np.exp(log_softmax(self.logits(params, X), axis=1))

    def losses(self, params, X, y) -> np.ndarray:
        params = self.check_params(params)
        X, y = self._check_batch(X, y)
        logp = log_softmax(self._logits(params, X), axis=1)
        return -logp[np.arange(len(y)), y] + 0.5 * self.l2 * (params @ params)

    def logits(self, params, X) -> np.ndarray:
        return self._logits(self.check_params(params), self._check_batch(X))

    def train(self, X, y, config: TrainConfig | None = None, rng=None, init=None) -> TrainResult:
        raise NotImplementedError


def _onehot(y, C):
    Y = np.zeros((len(y), C))
    Y[np.arange(len(y)), y] = 1.0
    return Y


class LogisticModel(Model):
    """Multinomial logistic regression with weights ``W (C x f)`` followed by biases ``b (C)``.

    Strictly convex whenever ``l2 > 0``.
    """

    family = "multinomial-logistic"

    def __init__(self, num_features: int, num_classes: int, l2: float = 1e-3):
        if l2 < 0:
            raise ContractViolation("l2 must be non-negative")
        self.num_features = num_features
        self.num_classes = num_classes
        self.l2 = float(l2)
        self.convex = l2 > 0

    @property
    def dim(self):
        return self.num_classes * (self.num_features + 1)

    def unpack(self, params):
        C, f = self.num_classes, self.num_features
        return params[:C * f].reshape(C, f), params[C * f:]

    def pack(self, W, b):
        return np.concatenate([np.asarray(W, float).ravel(), np.asarray(b, float)])

    def _logits(self, params, X):
        W, b = self.unpack(params)
        return X @ W.T + b

    def per_example_grads(self, params, X, y) -> np.ndarray:
        params = self.check_params(params)
        X, y = self._check_batch(X, y)
        P = np.exp(log_softmax(self._logits(params, X), axis=1))
        D = P - _onehot(y, self.num_classes)
        gW = (D[:, :, None] * X[:, None, :]).reshape(len(y), -1)
        return np.hstack([gW, D]) + self.l2 * params

    def hvp_operator(self, params, X, y):
        params = self.check_params(params)
        X, y = self._check_batch(X, y)
        P = np.exp(log_softmax(self._logits(params, X), axis=1))
        n, C, f, l2 = len(y), self.num_classes, self.num_features, self.l2

        def apply(v):
            V = v[:C * f].reshape(C, f)
            RO = X @ V.T + v[C * f:]
            RP = P * RO - P * np.sum(P * RO, axis=1, keepdims=True)
            return np.concatenate([(RP.T @ X).ravel() / n, RP.sum(axis=0) / n]) + l2 * v

        return apply

    def hessian(self, params, X, y) -> np.ndarray:
        """Closed form: mean over rows of (diag(p) - p p^T) kron (x~ x~^T), plus l2 * I."""
        params = self.check_params(params)
        X, y = self._check_batch(X, y)
        C, f = self.num_classes, self.num_features
        P = np.exp(log_softmax(self._logits(params, X), axis=1))
        A = np.hstack([X, np.ones((len(X), 1))])
        S = P[:, :, None] * (np.eye(C)[None] - P[:, None, :])
        H4 = np.einsum("nab,ni,nj->aibj", S, A, A) / len(X)
        # reorder (class, feature-or-bias) axes into the packed W-then-b layout
        order = np.empty((C, f + 1), dtype=np.int64)
        order[:, :f] = np.arange(C * f).reshape(C, f)
        order[:, f] = C * f + np.arange(C)
        idx = order.ravel()
        H = np.empty((self.dim, self.dim))
        H[np.ix_(idx, idx)] = H4.reshape(C * (f + 1), C * (f + 1))
        H[np.diag_indices_from(H)] += self.l2
        return H

    def embedding(self, params, X) -> np.ndarray:
        return self._check_batch(X).copy()

    def init_params(self, rng=None) -> np.ndarray:
        return np.zeros(self.dim)

    def train(self, X, y, config=None, rng=None, init=None) -> TrainResult:
        """Damped Newton on the mean loss until ``||grad||_inf <= config.tol``."""
        cfg = config or TrainConfig()
        X, y = self._check_batch(X, y)
        theta = self.init_params() if init is None else self.check_params(init).copy()
        return newton_minimize(self, X, y, theta, cfg.tol, cfg.max_iter)


class MLPModel(Model):
    """One tanh hidden layer; packed as ``W1 (h x f), b1 (h), W2 (C x h), b2 (C)``.

    Non-convex, trained with seeded minibatch SGD for a fixed number of epochs.
    """

    family = "mlp-2layer"
    convex = False

    def __init__(self, num_features: int, num_classes: int, hidden: int = 8, l2: float = 1e-3):
        if l2 < 0:
            raise ContractViolation("l2 must be non-negative")
        self.num_features = num_features
        self.num_classes = num_classes
        self.hidden = hidden
        self.l2 = float(l2)

    @property
    def dim(self):
        f, h, C = self.num_features, self.hidden, self.num_classes
        return h * f + h + C * h + C

    def unpack(self, params):
        f, h, C = self.num_features, self.hidden, self.num_classes
        i = 0
        W1 = params[i:i + h * f].reshape(h, f); i += h * f
        b1 = params[i:i + h]; i += h
        W2 = params[i:i + C * h].reshape(C, h); i += C * h
        b2 = params[i:i + C]
        return W1, b1, W2, b2

    @staticmethod
    def pack(W1, b1, W2, b2):
        return np.concatenate([np.ravel(W1), b1, np.ravel(W2), b2])

    def _forward(self, params, X):
        W1, b1, W2, b2 = self.unpack(params)
        Hh = np.tanh(X @ W1.T + b1)
        return Hh, Hh @ W2.T + b2

    def _logits(self, params, X):
        return self._forward(params, X)[1]

    def per_example_grads(self, params, X, y) -> np.ndarray:
        params = self.check_params(params)
        X, y = self._check_batch(X, y)
        _, _, W2, _ = self.unpack(params)
        Hh, O = self._forward(params, X)
        D = np.exp(log_softmax(O, axis=1)) - _onehot(y, self.num_classes)
        dA = (D @ W2) * (1.0 - Hh ** 2)
        n = len(y)
        G = np.hstack([(dA[:, :, None] * X[:, None, :]).reshape(n, -1), dA,
                       (D[:, :, None] * Hh[:, None, :]).reshape(n, -1), D])
        return G + self.l2 * params

    def _batch_mean_grad(self, params, X, Y):
        # training inner loop: no validation, one-hot labels precomputed
        W1, b1, W2, b2 = self.unpack(params)
        Hh = np.tanh(X @ W1.T + b1)
        D = np.exp(log_softmax(Hh @ W2.T + b2, axis=1)) - Y
        dA = (D @ W2) * (1.0 - Hh ** 2)
        n = len(X)
        return self.pack(dA.T @ X / n, dA.mean(0), D.T @ Hh / n, D.mean(0)) + self.l2 * params

    def hvp_operator(self, params, X, y):
        """Exact H v by forward-mode differentiation of the backward pass."""
        params = self.check_params(params)
        X, y = self._check_batch(X, y)
        W1, b1, W2, b2 = self.unpack(params)
        Hh, O = self._forward(params, X)
        P = np.exp(log_softmax(O, axis=1))
        D = P - _onehot(y, self.num_classes)
        dphi = 1.0 - Hh ** 2
        curv = -2.0 * (D @ W2) * Hh
        n, l2 = len(y), self.l2
        unpack, pack = self.unpack, self.pack

        def apply(v):
            V1, vb1, V2, vb2 = unpack(v)
            # directional derivatives along v
            RH = dphi * (X @ V1.T + vb1)
            RO = RH @ W2.T + Hh @ V2.T + vb2
            RD = P * RO - P * np.sum(P * RO, axis=1, keepdims=True)
            RdA = (D @ V2 + RD @ W2) * dphi + curv * RH
            out = pack(RdA.T @ X / n, RdA.sum(0) / n, (RD.T @ Hh + D.T @ RH) / n, RD.sum(0) / n)
            return out + l2 * v

        return apply

    def embedding(self, params, X) -> np.ndarray:
        params = self.check_params(params)
        return self._forward(params, self._check_batch(X))[0]

    def init_params(self, rng) -> np.ndarray:
        f, h, C = self.num_features, self.hidden, self.num_classes
        W1 = rng.standard_normal((h, f)) / np.sqrt(f)
        W2 = rng.standard_normal((C, h)) / np.sqrt(h)
        return self.pack(W1, np.zeros(h), W2, np.zeros(C))

    def train(self, X, y, config=None, rng=None, init=None) -> TrainResult:
        cfg = config or TrainConfig()
        X, y = self._check_batch(X, y)
        rng = np.random.default_rng(rng)
        theta = self.init_params(rng) if init is None else self.check_params(init).copy()
        Y = _onehot(y, self.num_classes)
        n = len(y)
        bs = min(cfg.batch_size, n)
        velocity = np.zeros_like(theta)
        for _ in range(cfg.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, bs):
                idx = np.sort(perm[start:start + bs])
                g = self._batch_mean_grad(theta, X[idx], Y[idx])
                velocity = cfg.momentum * velocity - cfg.lr * g
                theta = theta + velocity
        if not np.all(np.isfinite(theta)):
            raise ConvergenceError("SGD produced non-finite parameters", float("inf"))
        gn = float(np.max(np.abs(self.mean_grad(theta, X, y))))
        return TrainResult(theta, gn, cfg.epochs)


class QuadraticModel(Model):
    """Per-example loss ``0.5 (theta - c)^T A (theta - c) + l2/2 ||theta||^2``.

    The example's feature vector is its center ``c``; labels are ignored. Every
    second-order expansion of this family is exact, which makes it the reference
    case for the LiSSA recursion and the Newton-step check.
    """

    family = "quadratic"
    num_classes = 1

    def __init__(self, A, l2: float = 0.0):
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        if A.shape[0] != A.shape[1]:
            raise ContractViolation("curvature matrix must be square")
        self.A = A
        self.l2 = float(l2)
        self.num_features = A.shape[0]
        self.convex = bool(np.all(np.linalg.eigvalsh(0.5 * (A + A.T)) + l2 > 0))

    @property
    def dim(self):
        return self.num_features

    def losses(self, params, X, y=None):
        params = self.check_params(params)
        X = self._check_batch(X)
        R = params - X
        return 0.5 * np.einsum("ni,ij,nj->n", R, self.A, R) + 0.5 * self.l2 * (params @ params)

    def per_example_grads(self, params, X, y=None):
        params = self.check_params(params)
        X = self._check_batch(X)
        return (params - X) @ self.A.T + self.l2 * params

    def hvp_operator(self, params, X, y):
        self.check_params(params)
        self._check_batch(X)
        A, l2 = self.A, self.l2
        return lambda v: A @ v + l2 * v

    def hessian(self, params, X, y):
        return self.A + self.l2 * np.eye(self.dim)

    def predict_proba(self, params, X):
        raise NotImplementedError("quadratic family has no posterior")

    def embedding(self, params, X):
        return self._check_batch(X).copy()

    def init_params(self, rng=None):
        return np.zeros(self.dim)

    def train(self, X, y=None, config=None, rng=None, init=None) -> TrainResult:
        X = self._check_batch(X)
        H = self.A + self.l2 * np.eye(self.dim)
        theta = np.linalg.solve(H, self.A @ X.mean(axis=0))
        gn = float(np.max(np.abs(self.mean_grad(theta, X, None))))
        return TrainResult(theta, gn, 1)


class FixedCurvatureModel(Model):
    """Wraps another model but reports the Hessian of a pure L2 penalty, ``mu * I``.

    Losses, gradients and posteriors come from ``base`` unchanged, so pool
    scores still depend on the example; only the curvature seen by the
    inverse-HVP machinery is degenerate. With ``mu = 1`` the influence score
    reduces to the plain gradient-similarity score.
    """

    family = "fixed-curvature"
    convex = True

    def __init__(self, base: Model, mu: float = 1.0):
        self.base = base
        self.mu = float(mu)
        self.num_features = base.num_features
        self.num_classes = base.num_classes
        self.l2 = base.l2

    @property
    def dim(self):
        return self.base.dim

    def _logits(self, params, X):
        return self.base._logits(params, X)

    def losses(self, params, X, y):
        return self.base.losses(params, X, y)

    def per_example_grads(self, params, X, y):
        return self.base.per_example_grads(params, X, y)

    def hvp_operator(self, params, X, y):
        self.check_params(params)
        self._check_batch(X)
        mu = self.mu
        return lambda v: mu * v

    def hessian(self, params, X, y):
        return self.mu * np.eye(self.dim)

    def embedding(self, params, X):
        return self.base.embedding(params, X)

    def init_params(self, rng=None):
        return self.base.init_params(rng)

    def train(self, X, y, config=None, rng=None, init=None):
        return self.base.train(X, y, config, rng, init)


def newton_minimize(model: Model, X, y, theta, tol=1e-8, max_iter=100) -> TrainResult:
    """Newton's method with Armijo backtracking on the mean loss of ``(X, y)``."""
    gn = np.inf
    for it in range(max_iter + 1):
        g = model.mean_grad(theta, X, y)
        gn = float(np.max(np.abs(g)))
        if gn <= tol:
            return TrainResult(theta, gn, it)
        if it == max_iter:
            break
        if model.dim <= DENSE_LIMIT:
            step = scipy.linalg.solve(model.hessian(theta, X, y), g, assume_a="sym")
        else:
            op = scipy.sparse.linalg.LinearOperator(
                (model.dim, model.dim), matvec=lambda u: model.hvp(theta, X, y, u))
            step, _ = scipy.sparse.linalg.cg(op, g, rtol=1e-10, maxiter=10 * model.dim)
        f0 = model.mean_loss(theta, X, y)
        slope = float(g @ step)
        t = 1.0
        while True:
            cand = theta - t * step
            f1 = model.mean_loss(cand, X, y)
            # slack of a few ulps lets the final quadratic-convergence steps through
            if f1 <= f0 - 1e-4 * t * slope + 1e-14 * abs(f0) or t < 1e-12:
                break
            t *= 0.5
        theta = cand
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations", gn)


def make_model(family: str, num_features: int, num_classes: int, l2: float = 1e-3,
               hidden: int = 8) -> Model:
    if family in ("multinomial-logistic", "logistic"):
        return LogisticModel(num_features, num_classes, l2)
    if family in ("mlp-2layer", "mlp"):
        return MLPModel(num_features, num_classes, hidden, l2)
    raise ContractViolation(f"unknown model family {family!r}")


def train(model: Model, X, y, config: TrainConfig | None = None, rng=None, init=None) -> TrainResult:
    """Fit ``model`` on a labeled set; see each family's ``train`` for the method."""
    return model.train(X, y, config, rng, init)
