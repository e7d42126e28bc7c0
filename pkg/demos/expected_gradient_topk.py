"""
Pseudo-label expected gradients and the choice of K
===================================================
"""
import numpy as np

from isal.al_loop import ALConfig, k_sweep
from isal.data import gen_blobs
from isal.influence import LissaConfig
from isal.model import LogisticModel
from isal.uuic import ExpectedGradientConfig, expected_gradient

# a point almost on the boundary of a mirrored two-class model
model = LogisticModel(2, 2, l2=0.0)
theta = model.pack([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0])
x = np.array([1e-3, 0.5])
print("posterior:", model.predict(theta, x))
for k in (1, 2):
    G = expected_gradient(model, theta, x, ExpectedGradientConfig(k))
    print(f"K={k}: |G| = {np.linalg.norm(G):.3e}")
# with every class included the weighted class gradients sum to the L2 term, zero here

data = gen_blobs(3, 40, spread=1.5, seed=7)
cfg = ALConfig(dataset=data, initial_labeled_size=9, validation_size=30, batch_size=6,
               num_steps=5, lissa=LissaConfig(depth_k=300))
for k, records in k_sweep(cfg).items():
    print(f"K={k}:", " ".join(f"{r.accuracy:.3f}" for r in records))
