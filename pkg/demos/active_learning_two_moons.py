"""
Active learning on two moons: influence selection against random sampling
=========================================================================

A small tanh network labels 10 points, then requests 10 more per step. Each
strategy starts from the same split, so step 1 is identical.
"""
import sys

import numpy as np

from isal.al_loop import area_under_curve, run_active_learning
from isal.checks import desk_config

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
curves = {}
for strategy in ("random", "entropy", "isal"):
    runs = [run_active_learning(desk_config(s, strategy)) for s in seeds]
    curves[strategy] = runs
    acc = np.mean([[r.accuracy for r in run] for run in runs], axis=0)
    auc = np.mean([area_under_curve(run) for run in runs])
    print(f"{strategy:8s} " + " ".join(f"{a:.3f}" for a in acc) + f"   AUC {auc:.4f}")

labeled = [r.labeled_count for r in curves["isal"][0]]
print("labeled  " + " ".join(f"{n:5d}" for n in labeled))
