"""Oracle checks backing ``isal verify`` and the acceptance tests.

Each ``check_*`` function builds its own seeded instances, runs one criterion at
its fixed tolerance and returns a :class:`CheckResult`.
"""
from __future__ import annotations

import filecmp
import itertools
import tempfile
import time
from fractions import Fraction
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .acquisition import SelectionRequest, select_coreset_kcenter, select_grad_similarity, select_isal
from .al_loop import ALConfig, Annotator, area_under_curve, k_sweep, run_active_learning
from .data import gen_blobs, gen_two_moons
from .experiment import ExperimentConfig, run_sweep
from .influence import LissaConfig, estimate_s_test, exact_inverse_hvp, lissa_recursion
from .model import FixedCurvatureModel, LogisticModel, MLPModel, QuadraticModel, TrainConfig
from .oracle import finite_diff_hvp, rank_correlation, retrain_influences
from .uuic import ExpectedGradientConfig, expected_gradient


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def logistic_instance(seed, num_features=4, num_classes=2, n_labeled=40, n_pool=200,
                      n_ref=100, teacher_scale=1.5):
    """Gaussian features with labels sampled from a random softmax teacher (not separable)."""
    rng = np.random.default_rng(seed)
    W = teacher_scale * rng.standard_normal((num_classes, num_features))

    def draw(n):
        X = rng.standard_normal((n, num_features))
        y = np.argmax(X @ W.T + rng.gumbel(size=(n, num_classes)), axis=1)
        return X, y

    return draw(n_labeled), draw(n_pool), draw(n_ref)


def _rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


# -- 1 ------------------------------------------------------------------------

def check_grad_hvp_fidelity(pairs=100, tol=1e-5, seed=0) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = {}
    for model in (LogisticModel(5, 3, l2=1e-3), MLPModel(4, 3, hidden=6, l2=1e-3)):
        g_err = h_err = 0.0
        for _ in range(pairs):
            theta = rng.standard_normal(model.dim)
            x = rng.standard_normal(model.num_features)
            label = int(rng.integers(model.num_classes))
            g = model.grad(theta, x, label)
            fd = np.empty(model.dim)
            e = np.zeros(model.dim)
            for j in range(model.dim):
                e[j] = 1e-5
                fd[j] = (model.loss(theta + e, x, label) - model.loss(theta - e, x, label)) / 2e-5
                e[j] = 0.0
            g_err = max(g_err, _rel(g, fd))
            v = rng.standard_normal(model.dim)
            hv = model.hvp(theta, x[None], [label], v)
            h_err = max(h_err, _rel(hv, finite_diff_hvp(model, theta, x[None], [label], v, 1e-4)))
        worst[model.family] = (g_err, h_err)
    ok = all(g < tol and h < tol for g, h in worst.values())
    detail = "; ".join(f"{k}: grad {g:.1e}, hvp {h:.1e}" for k, (g, h) in worst.items())
    dt = time.perf_counter() - t0
    return CheckResult("1 gradient/HVP fidelity", ok and dt < 10, f"{detail} (max rel err, tol {tol:g})",
                       dt, {"worst": worst})


# -- 2 ------------------------------------------------------------------------

def check_lissa(seeds=10, tol=0.05) -> CheckResult:
    t0 = time.perf_counter()
    quad = QuadraticModel([[0.5]])
    trace = []
    lissa_recursion(lambda i, s: quad.hvp(np.zeros(1), np.zeros((1, 1)), None, s),
                    np.array([1.0]), 3, 0.0, 1.0, trace)
    iterates = [float(s[0]) for s in trace]
    exact_iterates = iterates == [1.0, 1.5, 1.75, 1.875]

    errs_deep, errs_shallow = [], []
    for seed in range(seeds):
        (X, y), _, (Xr, yr) = logistic_instance(seed, num_features=4, num_classes=3, n_labeled=60)
        model = LogisticModel(4, 3, l2=1e-3)
        theta = model.train(X, y).params
        v = model.mean_grad(theta, Xr, yr)
        exact = exact_inverse_hvp(model, theta, X, y, v, damping=0.01)
        for depth, sink in ((5000, errs_deep), (50, errs_shallow)):
            est = estimate_s_test(model, theta, X, y, v,
                                  LissaConfig(depth_k=depth, repeats_p=4, damping_lambda=0.01, seed=seed))
            sink.append(_rel(est.s_test, exact))
    mean_deep = float(np.mean(errs_deep))
    monotone = all(a < b for a, b in zip(errs_deep, errs_shallow))
    dt = time.perf_counter() - t0
    ok = exact_iterates and max(errs_deep) < tol and monotone and dt < 60
    return CheckResult(
        "2 LiSSA correctness", ok,
        f"iterates {iterates}; d=15 depth 5000 rel err max {max(errs_deep):.3f} (mean {mean_deep:.3f}, "
        f"tol {tol} per seed); depth 5000 < depth 50 on {sum(a < b for a, b in zip(errs_deep, errs_shallow))}/{seeds}",
        dt, {"iterates": iterates, "errors_5000": errs_deep, "errors_50": errs_shallow})


# -- 3, 4 ---------------------------------------------------------------------

def check_influence_vs_retraining(seeds=10, rho_min=0.8, lissa_rho_min=0.95) -> CheckResult:
    t0 = time.perf_counter()
    rho_exact, rho_lissa = [], []
    for seed in range(seeds):
        (X, y), (Xp, yp), (Xr, yr) = logistic_instance(seed)
        model = LogisticModel(4, 2, l2=1e-3)
        theta = model.train(X, y).params
        v = model.mean_grad(theta, Xr, yr)
        G = model.per_example_grads(theta, Xp, yp)
        predicted = -(G @ exact_inverse_hvp(model, theta, X, y, v))
        delta = retrain_influences(model, X, y, Xp, yp, Xr, yr)
        rho_exact.append(rank_correlation(dict(enumerate(predicted)), dict(enumerate(delta)))[0])
        damped = -(G @ exact_inverse_hvp(model, theta, X, y, v, damping=0.01))
        est = estimate_s_test(model, theta, X, y, v,
                              LissaConfig(depth_k=1000, repeats_p=4, damping_lambda=0.01, seed=seed))
        rho_lissa.append(rank_correlation(dict(enumerate(-(G @ est.s_test))), dict(enumerate(damped)))[0])
    m1, m2 = float(np.mean(rho_exact)), float(np.mean(rho_lissa))
    dt = time.perf_counter() - t0
    ok = m1 >= rho_min and m2 >= lissa_rho_min and dt < 300
    return CheckResult(
        "3 influence vs retraining", ok,
        f"Spearman(exact influence, retrain delta) mean {m1:.3f} (min {min(rho_exact):.3f}, need >= {rho_min}); "
        f"Spearman(LiSSA, exact) mean {m2:.3f} (need >= {lissa_rho_min})",
        dt, {"rho_exact": rho_exact, "rho_lissa": rho_lissa})


def check_self_influence(seeds=10, tol=1e-10) -> CheckResult:
    t0 = time.perf_counter()
    worst = -np.inf
    count = 0
    for seed in range(seeds):
        for C in (2, 3):
            (X, y), _, _ = logistic_instance(seed, num_classes=C)
            model = LogisticModel(4, C, l2=1e-3)
            theta = model.train(X, y).params
            for x, label in zip(X, y):
                g = model.grad(theta, x, label)
                worst = max(worst, -float(g @ exact_inverse_hvp(model, theta, X, y, g)))
                count += 1
    return CheckResult("4 self-influence sign", worst <= tol,
                       f"max -g^T H^-1 g = {worst:.3e} over {count} trained examples (need <= {tol:g})",
                       time.perf_counter() - t0)


# -- 5 ------------------------------------------------------------------------

def check_identity_collapse(requests=20) -> CheckResult:
    t0 = time.perf_counter()
    same = 0
    for seed in range(requests):
        (X, y), (Xp, _), (Xr, yr) = logistic_instance(1000 + seed, num_classes=3, n_pool=60)
        base = LogisticModel(4, 3, l2=1e-3)
        model = FixedCurvatureModel(base, mu=1.0)
        theta = base.train(X, y).params
        req = SelectionRequest(np.arange(len(Xp)), Xp, batch_size=10, strategy="isal",
                               lissa=LissaConfig(depth_k=50, damping_lambda=0.0, seed=seed), seed=seed)
        a = select_isal(req, model, theta, (X, y), (Xr, yr))
        b = select_grad_similarity(replace(req, strategy="grad_sim"), model, theta, (X, y), (Xr, yr))
        same += bool(np.array_equal(a.chosen_ids, b.chosen_ids))
    return CheckResult("5 H=I collapse", same == requests,
                       f"identical ISAL / grad-sim batches on {same}/{requests} requests",
                       time.perf_counter() - t0)


# -- 6 ------------------------------------------------------------------------

def check_uuic_k(run_sweep_harness=True) -> CheckResult:
    t0 = time.perf_counter()
    # two classes mirrored about the origin, probe point almost on the boundary
    model = LogisticModel(2, 2, l2=0.0)
    theta = model.pack([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0])
    x = np.array([1e-3, 0.5])
    probs = model.predict(theta, x)
    g1 = model.grad(theta, x, int(np.argmax(probs)))
    G1 = expected_gradient(model, theta, x, ExpectedGradientConfig(1))
    G2 = expected_gradient(model, theta, x, ExpectedGradientConfig(2))
    ratio = float(np.linalg.norm(G2) / np.linalg.norm(g1))
    ok = ratio < 1e-9 and np.linalg.norm(G1) > 0.4 * np.linalg.norm(g1)
    detail = f"posterior {probs.round(6).tolist()}, |G_K=2|/|g1| = {ratio:.1e} (need < 1e-9)"
    if run_sweep_harness:
        data = gen_blobs(3, 40, spread=1.5, seed=7)
        sweep = k_sweep(ALConfig(dataset=data, model="logistic", initial_labeled_size=9,
                                 validation_size=30, batch_size=6, num_steps=4, seed=0,
                                 lissa=LissaConfig(depth_k=200)))
        finals = {k: recs[-1].accuracy for k, recs in sweep.items()}
        ok = ok and sorted(sweep) == [1, 2, 3] and all(len(r) == 4 for r in sweep.values())
        detail += f"; K-sweep final accuracy {finals}"
    return CheckResult("6 UUIC K behavior", bool(ok), detail, time.perf_counter() - t0)


# -- 7 ------------------------------------------------------------------------

def _covering_radius(points, centers):
    return float(cdist(points, centers).min(axis=1).max())


def check_coreset(instances=200, seed=0) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_ratio, monotone = 0.0, True
    for _ in range(instances):
        n = int(rng.integers(4, 13))
        n_lab = int(rng.integers(1, 3))
        P = rng.standard_normal((n, 2)) * rng.uniform(0.5, 3.0)
        k = int(rng.integers(1, n - n_lab + 1))
        lab, pool = P[:n_lab], P[n_lab:]
        req = SelectionRequest(np.arange(len(pool)), pool, batch_size=k, strategy="coreset")
        res = select_coreset_kcenter(req, lab, pool)
        greedy = _covering_radius(P, np.vstack([lab, pool[res.chosen_ids]]))
        best = min(_covering_radius(P, np.vstack([lab, pool[list(c)]]))
                   for c in itertools.combinations(range(len(pool)), k))
        if best > 0:
            worst_ratio = max(worst_ratio, greedy / best)
        elif greedy > 1e-12:
            worst_ratio = np.inf
        d = res.diagnostics["pick_distances"]
        monotone &= all(a >= b for a, b in zip(d, d[1:]))
    ok = worst_ratio <= 2.0 + 1e-12 and monotone
    return CheckResult("7 coreset 2-approximation", ok,
                       f"worst greedy/optimal radius {worst_ratio:.3f} over {instances} instances (<= 2); "
                       f"pick distances non-increasing: {monotone}", time.perf_counter() - t0)


# -- 8, 9 ---------------------------------------------------------------------

DESK_TRAIN = TrainConfig(epochs=1000, lr=0.1, momentum=0.9, batch_size=16)
DESK_LISSA = LissaConfig(depth_k=1000, repeats_p=4, damping_lambda=0.1)


def desk_config(seed, strategy="random", reference_mode="validation", noise=0.2) -> ALConfig:
    return ALConfig(dataset=gen_two_moons(400, noise, seed), model="mlp", hidden=8, l2=1e-3,
                    train=DESK_TRAIN, strategy=strategy, lissa=DESK_LISSA,
                    initial_labeled_size=10, validation_size=100, batch_size=10, num_steps=8,
                    reference_mode=reference_mode, seed=seed)


def desk_runs(seeds=20, variants=("random", "isal")):
    """Accuracy curves keyed by strategy label; one run per seed."""
    runs = {}
    for v in variants:
        strategy, mode = {"isal_v2": ("isal", "initial_labeled"),
                          "isal_v3": ("isal", "current_labeled")}.get(v, (v, "validation"))
        runs[v] = [run_active_learning(desk_config(s, strategy, mode)) for s in range(seeds)]
    return runs


def _exact_mean(values, denominator):
    """Mean of accuracies that are exact fractions ``k / denominator``, free of rounding."""
    return sum(Fraction(v).limit_denominator(denominator) for v in values) / len(values)


def check_desk_al(runs=None, seeds=20) -> CheckResult:
    """Paired comparison of ISAL and random; runs are generated (and timed) unless given."""
    t0 = time.perf_counter()
    runs = runs or desk_runs(seeds)
    n_val = desk_config(0).validation_size
    fin = {k: [r[-1].accuracy for r in v] for k, v in runs.items()}
    auc = {k: np.array([area_under_curve(r) for r in v]) for k, v in runs.items()}
    d_fin = _exact_mean(fin["isal"], n_val) - _exact_mean(fin["random"], n_val)
    d_auc = float(np.mean(auc["isal"] - auc["random"]))
    return CheckResult(
        "8 desk-scale AL (ISAL vs random)", d_fin >= 0 and d_auc >= 0,
        f"final acc isal {np.mean(fin['isal']):.4f} vs random {np.mean(fin['random']):.4f} "
        f"(diff {float(d_fin):+.4f}); AUC isal {auc['isal'].mean():.4f} vs random "
        f"{auc['random'].mean():.4f} (diff {d_auc:+.4f})",
        time.perf_counter() - t0, {"runs": runs, "final_diff": float(d_fin), "auc_diff": d_auc})


def check_reference_variants(runs=None, seeds=20) -> CheckResult:
    """All three reference-set choices finish the desk workload with the same table shape.

    ``runs`` may already hold some variants (e.g. ``isal`` from the desk check);
    missing ones are generated.
    """
    t0 = time.perf_counter()
    runs = dict(runs or {})
    missing = [v for v in ("isal", "isal_v2", "isal_v3") if v not in runs]
    runs.update(desk_runs(seeds, missing))
    runs = {k: runs[k] for k in ("isal", "isal_v2", "isal_v3")}
    shapes = {k: [(r.step, r.labeled_count) for r in v[0]] for k, v in runs.items()}
    complete = all(len(v) == seeds and all(len(r) == 8 for r in v) for v in runs.values())
    comparable = len({tuple(s) for s in shapes.values()}) == 1
    means = {k: round(float(np.mean([r[-1].accuracy for r in v])), 4) for k, v in runs.items()}
    return CheckResult("9 reference-set variants", complete and comparable,
                       f"all variants completed {seeds} seeds x 8 steps with matching step tables; "
                       f"mean final accuracy {means}", time.perf_counter() - t0)


# -- 10 -----------------------------------------------------------------------

def check_determinism() -> CheckResult:
    t0 = time.perf_counter()
    al = ALConfig(dataset={"kind": "blobs", "num_classes": 3, "per_class": 30, "spread": 1.2, "seed": 3},
                  model="logistic", strategy="isal", initial_labeled_size=6, validation_size=20,
                  batch_size=5, num_steps=4, lissa=LissaConfig(depth_k=200))
    cfg = ExperimentConfig(al, repeat_seeds=(0, 1), emit=("csv", "json"))
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        run_sweep(cfg, a)
        run_sweep(cfg, b)
        names = sorted(p.name for p in Path(a).iterdir())
        match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
        identical = not mismatch and not errors and len(match) == len(names) == 6
    audits = []
    for strategy in ("isal", "random", "coreset"):
        cfg1 = replace(al, strategy=strategy, seed=5)
        ann = Annotator(gen_blobs(3, 30, spread=1.2, seed=3))
        recs = run_active_learning(cfg1, ann)
        expected = cfg1.initial_labeled_size + cfg1.validation_size + (len(recs) - 1) * cfg1.batch_size
        audits.append(ann.reveals == expected)
    return CheckResult("10 determinism and audit", identical and all(audits),
                       f"{len(names)} output files byte-identical: {identical}; reveal counts exact: {audits}",
                       time.perf_counter() - t0)


def run_checks(quick=False, only=None) -> list[CheckResult]:
    plan = [
        ("1", lambda: check_grad_hvp_fidelity(20 if quick else 100)),
        ("2", lambda: check_lissa(3 if quick else 10)),
        ("3", lambda: check_influence_vs_retraining(2 if quick else 10)),
        ("4", lambda: check_self_influence(2 if quick else 10)),
        ("5", check_identity_collapse),
        ("6", check_uuic_k),
        ("7", lambda: check_coreset(50 if quick else 200)),
        ("10", check_determinism),
    ]
    results = [fn() for key, fn in plan if only is None or key in only]
    if not quick:
        desk = None
        if only is None or "8" in only:
            desk = check_desk_al()
            results.append(desk)
        if only is None or "9" in only:
            results.append(check_reference_variants({"isal": desk.values["runs"]["isal"]} if desk else None))
    return sorted(results, key=lambda r: int(r.name.split()[0]))
