"""
How the stochastic inverse-HVP estimate converges with depth
============================================================
"""
import numpy as np

from isal.checks import logistic_instance
from isal.influence import LissaConfig, estimate_s_test, exact_inverse_hvp, lissa_recursion
from isal.model import LogisticModel

# a one-parameter quadratic with curvature 1/2: the iterates follow a geometric series
trace = []
lissa_recursion(lambda i, s: 0.5 * s, np.array([1.0]), depth=6, trace=trace)
print("quadratic iterates:", [float(t[0]) for t in trace], "-> limit 2")

(X, y), _, (X_ref, y_ref) = logistic_instance(seed=3, num_classes=3, n_labeled=60)
model = LogisticModel(4, 3, l2=1e-3)
theta = model.train(X, y).params
v = model.mean_grad(theta, X_ref, y_ref)
exact = exact_inverse_hvp(model, theta, X, y, v, damping=0.01)

print("\ndepth  scale  relative error")
for depth in (50, 200, 1000, 5000):
    est = estimate_s_test(model, theta, X, y, v, LissaConfig(depth_k=depth, damping_lambda=0.01))
    err = np.linalg.norm(est.s_test - exact) / np.linalg.norm(exact)
    print(f"{depth:5d}  {est.scale:5.0f}  {err:.4f}")
