"""
Predicted influence against brute-force retraining
==================================================

Train a multinomial logistic model, predict how each pool example would change
the reference loss if it were added, then check the prediction by actually
retraining once per candidate.
"""
import numpy as np

from isal.checks import logistic_instance
from isal.influence import LissaConfig, estimate_s_test, exact_inverse_hvp
from isal.model import LogisticModel
from isal.oracle import rank_correlation, retrain_influences

(X, y), (X_pool, y_pool), (X_ref, y_ref) = logistic_instance(seed=0)
model = LogisticModel(num_features=4, num_classes=2, l2=1e-3)
theta = model.train(X, y).params
print(f"trained on {len(X)} points, d = {model.dim}")

# s_test is solved once and reused for every candidate
v = model.mean_grad(theta, X_ref, y_ref)
s_exact = exact_inverse_hvp(model, theta, X, y, v)
s_lissa = estimate_s_test(model, theta, X, y, v, LissaConfig(depth_k=1000, damping_lambda=0.01)).s_test

G = model.per_example_grads(theta, X_pool, y_pool)
predicted = -(G @ s_exact)
approx = -(G @ s_lissa)

# adding one point to a mean over n points upweights it by 1/n
delta = retrain_influences(model, X, y, X_pool, y_pool, X_ref, y_ref) * len(X)

rho, tau = rank_correlation(dict(enumerate(predicted)), dict(enumerate(delta)))
print(f"exact influence vs retraining: spearman {rho:.3f}, kendall {tau:.3f}")
rho, tau = rank_correlation(dict(enumerate(approx)), dict(enumerate(predicted)))
print(f"LiSSA vs exact influence:      spearman {rho:.3f}, kendall {tau:.3f}")

ratio = delta / predicted
print(f"retrained / predicted: median {np.median(ratio):.2f}")

# the strongest candidates move the optimum furthest, where the linear
# prediction overshoots most
best = np.argsort(predicted)[:5]
print("five most helpful candidates (predicted, retrained):")
for i in best:
    print(f"  pool {i:3d}: {predicted[i]:+.4f}  {delta[i]:+.4f}")
