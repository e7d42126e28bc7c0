"""The pool-based loop: split, then train / evaluate / select / annotate for a fixed number of steps."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .acquisition import STRATEGIES, SelectionRequest, select
from .data import Dataset, build_dataset
from .exceptions import ContractViolation
from .influence import LissaConfig
from .model import Model, TrainConfig, make_model
from .uuic import ExpectedGradientConfig

REFERENCE_MODES = ("validation", "initial_labeled", "current_labeled")
_VARIANT_SUFFIX = {"validation": "", "initial_labeled": "_v2", "current_labeled": "_v3"}


@dataclass(frozen=True)
class ALConfig:
    dataset: Dataset | dict
    model: str = "logistic"
    hidden: int = 8
    l2: float = 1e-3
    train: TrainConfig = field(default_factory=TrainConfig)
    strategy: str = "isal"
    top_k: int = 1
    lissa: LissaConfig = field(default_factory=LissaConfig)
    initial_labeled_size: int = 10
    validation_size: int = 100
    batch_size: int = 10
    num_steps: int = 8
    reference_mode: str = "validation"
    seed: int = 0
    warm_start: bool = False
    target_accuracy: float | None = None
    name: str | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ContractViolation(f"unknown strategy {self.strategy!r}")
        if self.reference_mode not in REFERENCE_MODES:
            raise ContractViolation(f"unknown reference_mode {self.reference_mode!r}")
        if self.num_steps < 1 or self.batch_size < 1 or self.initial_labeled_size < 1:
            raise ContractViolation("num_steps, batch_size and initial_labeled_size must be >= 1")
        if self.validation_size < 1 and (self.strategy in ("isal", "grad_sim")
                                         and self.reference_mode == "validation"):
            raise ContractViolation("validation reference set requires validation_size >= 1")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.strategy == "isal":
            return "isal" + _VARIANT_SUFFIX[self.reference_mode]
        return self.strategy


@dataclass
class StepRecord:
    step: int
    labeled_count: int
    accuracy: float
    train_grad_norm: float
    score_min: float = float("nan")
    score_median: float = float("nan")
    score_max: float = float("nan")
    wall_time: float = 0.0
    strategy: str = ""
    seed: int = 0
    labeled_ids: tuple = ()


class Annotator:
    """Reveals stored labels and counts every reveal."""

    def __init__(self, dataset: Dataset):
        self._y = dataset.y
        self.reveals = 0

    def reveal(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        self.reveals += len(ids)
        return self._y[ids].copy()


class RunAborted(RuntimeError):
    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


def split_initial(dataset: Dataset, initial_labeled_size: int, validation_size: int, rng):
    """Random disjoint ``(L1, V, U1)`` id arrays, each sorted ascending."""
    n = len(dataset)
    if initial_labeled_size + validation_size > n:
        raise ContractViolation(
            f"initial_labeled_size + validation_size = {initial_labeled_size + validation_size} > {n}")
    perm = np.random.default_rng(rng).permutation(n)
    a, b = initial_labeled_size, initial_labeled_size + validation_size
    return np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:])


def evaluate(model: Model, params, X, y) -> float:
    """Accuracy of the argmax posterior (ties go to the lowest class index)."""
    pred = np.argmax(model.predict_proba(params, X), axis=1)
    return float(np.mean(pred == np.asarray(y)))


def _step_seed(seed, step):
    return int(seed) * 100_003 + step


def run_active_learning(cfg: ALConfig, annotator: Annotator | None = None) -> list[StepRecord]:
    dataset = cfg.dataset if isinstance(cfg.dataset, Dataset) else build_dataset(cfg.dataset)
    needed = cfg.initial_labeled_size + cfg.validation_size + (cfg.num_steps - 1) * cfg.batch_size
    if needed > len(dataset):
        raise ContractViolation(f"budget needs {needed} examples, dataset has {len(dataset)}")
    annotator = annotator or Annotator(dataset)
    model = make_model(cfg.model, dataset.feature_dim, dataset.num_classes, cfg.l2, cfg.hidden)
    X = dataset.X

    L, V, U = split_initial(dataset, cfg.initial_labeled_size, cfg.validation_size,
                            np.random.default_rng([cfg.seed, 0]))
    labels = dict(zip(L.tolist(), annotator.reveal(L).tolist()))
    yV = annotator.reveal(V)
    L1, yL1 = L, np.array([labels[i] for i in L])

    records: list[StepRecord] = []
    params = None
    diag = {}
    for step in range(1, cfg.num_steps + 1):
        t0 = time.perf_counter()
        if step > 1:
            yL = np.array([labels[i] for i in L])
            reference = {"validation": (X[V], yV),
                         "initial_labeled": (X[L1], yL1),
                         "current_labeled": (X[L], yL)}[cfg.reference_mode]
            seed = _step_seed(cfg.seed, step)
            request = SelectionRequest(
                pool_ids=U, pool_features=X[U], batch_size=cfg.batch_size,
                strategy=cfg.strategy, expected_gradient=ExpectedGradientConfig(cfg.top_k),
                lissa=replace(cfg.lissa, seed=seed), seed=seed)
            try:
                result = select(request, model, params, (X[L], yL), reference)
            except Exception as exc:
                raise RunAborted(f"selection failed at step {step}: {exc}", records) from exc
            S = result.chosen_ids
            labels.update(zip(S.tolist(), annotator.reveal(S).tolist()))
            L = np.sort(np.concatenate([L, S]))
            U = np.setdiff1d(U, S)
            diag = result.diagnostics
        yL = np.array([labels[i] for i in L])
        init = params if (cfg.warm_start and params is not None) else None
        try:
            fit = model.train(X[L], yL, cfg.train, np.random.default_rng([cfg.seed, 1, step]), init)
        except Exception as exc:
            raise RunAborted(f"training failed at step {step}: {exc}", records) from exc
        params = fit.params
        acc = evaluate(model, params, X[V], yV)
        records.append(StepRecord(
            step=step, labeled_count=len(L), accuracy=acc, train_grad_norm=fit.grad_norm,
            score_min=diag.get("score_min", float("nan")),
            score_median=diag.get("score_median", float("nan")),
            score_max=diag.get("score_max", float("nan")),
            wall_time=time.perf_counter() - t0, strategy=cfg.label, seed=cfg.seed,
            labeled_ids=tuple(L.tolist())))
        if cfg.target_accuracy is not None and acc >= cfg.target_accuracy:
            break
    return records


def k_sweep(cfg: ALConfig, ks=None) -> dict[int, list[StepRecord]]:
    """Run the ISAL loop once per expected-gradient ``top_k``; defaults to ``{1, 2, C}``."""
    if ks is None:
        dataset = cfg.dataset if isinstance(cfg.dataset, Dataset) else build_dataset(cfg.dataset)
        ks = sorted({1, min(2, dataset.num_classes), dataset.num_classes})
        cfg = replace(cfg, dataset=dataset)
    return {k: run_active_learning(replace(cfg, top_k=k, name=f"{cfg.label}_k{k}")) for k in ks}


def area_under_curve(records: list[StepRecord]) -> float:
    """Trapezoid area under accuracy vs labeled count, normalized by the count range."""
    x = np.array([r.labeled_count for r in records], dtype=float)
    a = np.array([r.accuracy for r in records])
    if len(x) < 2:
        return float(a[0])
    return float(np.trapezoid(a, x) / (x[-1] - x[0]))
