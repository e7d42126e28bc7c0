"""
Uncertainty and diversity baselines side by side
================================================
"""
import numpy as np

from isal.acquisition import SelectionRequest, entropy, margin, select_coreset_kcenter

# the points on a line used to explain k-center greedy
pool = np.array([[1.0], [2.0], [10.0]])
req = SelectionRequest([1, 2, 10], pool, batch_size=2, strategy="coreset")
res = select_coreset_kcenter(req, np.array([[0.0]]), pool)
print("k-center picks:", res.chosen_ids.tolist(), "at distances", res.diagnostics["pick_distances"])

P = np.array([[0.5, 0.5], [0.7, 0.3], [0.95, 0.05], [1.0, 0.0]])
for p, h, m in zip(P, entropy(P), margin(P)):
    print(f"posterior {p}: entropy {h:.6f} nats, margin {m:.2f}")
