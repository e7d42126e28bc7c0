"""JSON experiment configs, multi-seed sweeps and table output."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .al_loop import ALConfig, RunAborted, StepRecord, run_active_learning
from .exceptions import ContractViolation
from .influence import LissaConfig
from .model import TrainConfig

STEP_COLUMNS = ("step", "labeled_count", "accuracy", "strategy", "seed",
                "train_grad_norm", "score_min", "score_median", "score_max")
AGGREGATE_COLUMNS = ("step", "labeled_count", "strategy", "num_seeds", "accuracy_mean", "accuracy_std")
EMIT_KINDS = ("csv", "json")


class ConfigError(ValueError):
    """Invalid experiment config; the message starts with the offending field path."""


@dataclass(frozen=True)
class ExperimentConfig:
    al: ALConfig
    repeat_seeds: tuple = (0,)
    output_dir: str = "results"
    emit: tuple = ("csv",)

    def __post_init__(self):
        if not self.repeat_seeds:
            raise ConfigError("repeat_seeds: must be non-empty")
        if len(set(self.repeat_seeds)) != len(self.repeat_seeds):
            raise ConfigError("repeat_seeds: seeds must be distinct")
        bad = sorted(set(self.emit) - set(EMIT_KINDS))
        if bad:
            raise ConfigError(f"emit: unknown output kinds {bad}")


# -- parsing -------------------------------------------------------------------

_NESTED = {"train": TrainConfig, "lissa": LissaConfig}
_TOP_LEVEL = {"repeat_seeds", "output_dir", "emit"}


def _check_type(path, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
        want = "boolean"
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
        want = "integer"
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        want = "number"
    elif isinstance(default, str):
        ok = isinstance(value, str)
        want = "string"
    else:
        return value
    if not ok:
        raise ConfigError(f"{path}: expected {want}, got {value!r}")
    return float(value) if want == "number" else value


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        p = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"{p}: unknown key")
        if key in _NESTED:
            kwargs[key] = _build(_NESTED[key], value, p)
            continue
        f = known[key]
        default = f.default if f.default is not dataclasses.MISSING else None
        if value is not None:
            value = _check_type(p, value, default)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ContractViolation as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected an object")
    if "dataset" not in data:
        raise ConfigError("dataset: required")
    if not isinstance(data["dataset"], dict):
        raise ConfigError("dataset: expected an object")
    if "seed" in data:
        raise ConfigError("seed: use repeat_seeds")
    al_part = {k: v for k, v in data.items() if k not in _TOP_LEVEL}
    al = _build(ALConfig, al_part, "")
    seeds = data.get("repeat_seeds", [0])
    if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("repeat_seeds: expected a list of integers")
    out = data.get("output_dir", "results")
    if not isinstance(out, str):
        raise ConfigError("output_dir: expected string")
    emit = data.get("emit", ["csv"])
    if not isinstance(emit, list) or not all(isinstance(e, str) for e in emit):
        raise ConfigError("emit: expected a list of strings")
    return ExperimentConfig(al, tuple(seeds), out, tuple(emit))


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<root>: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"<root>: cannot read {path} ({exc.strerror})") from None
    return parse_config(data)


# -- formatting ----------------------------------------------------------------

def fmt(value) -> str:
    """17 significant digits for floats (round-trips float64), plain text otherwise."""
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return format(float(value), ".17g")
    return str(value)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row[c]) for c in columns])
    return buf.getvalue()


def _json_text(rows) -> str:
    def clean(v):
        if isinstance(v, float) and math.isnan(v):
            return None
        return v
    return json.dumps([{k: clean(v) for k, v in r.items()} for r in rows], indent=1) + "\n"


def record_rows(records: list[StepRecord]) -> list[dict]:
    return [{c: getattr(r, c) for c in STEP_COLUMNS} for r in records]


def aggregate(per_seed: list[list[StepRecord]]) -> list[dict]:
    """Per-step mean and sample standard deviation of accuracy across seeds."""
    steps = min(len(r) for r in per_seed)
    rows = []
    for i in range(steps):
        acc = np.array([recs[i].accuracy for recs in per_seed])
        first = per_seed[0][i]
        rows.append({"step": first.step, "labeled_count": first.labeled_count,
                     "strategy": first.strategy, "num_seeds": len(acc),
                     "accuracy_mean": float(acc.mean()),
                     "accuracy_std": float(acc.std(ddof=1)) if len(acc) > 1 else 0.0})
    return rows


def write_table(out_dir: Path, stem: str, columns, rows, emit):
    out_dir.mkdir(parents=True, exist_ok=True)
    if "csv" in emit:
        (out_dir / f"{stem}.csv").write_text(_csv_text(columns, rows), encoding="utf-8")
    if "json" in emit:
        (out_dir / f"{stem}.json").write_text(_json_text(rows), encoding="utf-8")


def run_sweep(cfg: ExperimentConfig, output_dir=None) -> list[list[StepRecord]]:
    """Run every seed, write per-seed tables and the aggregate. Raises RunAborted after
    writing whatever completed."""
    out = Path(output_dir or cfg.output_dir)
    label = cfg.al.label
    per_seed = []
    for seed in cfg.repeat_seeds:
        try:
            records = run_active_learning(replace(cfg.al, seed=seed))
        except RunAborted as exc:
            write_table(out, f"{label}_seed{seed}", STEP_COLUMNS, record_rows(exc.records), cfg.emit)
            raise
        write_table(out, f"{label}_seed{seed}", STEP_COLUMNS, record_rows(records), cfg.emit)
        per_seed.append(records)
    write_table(out, f"{label}_aggregate", AGGREGATE_COLUMNS, aggregate(per_seed), cfg.emit)
    return per_seed


def check_comparable(configs: list[ExperimentConfig]):
    base = configs[0]
    for i, c in enumerate(configs[1:], start=1):
        for name in ("dataset", "initial_labeled_size", "validation_size"):
            if getattr(c.al, name) != getattr(base.al, name):
                raise ConfigError(f"configs[{i}].{name}: differs from configs[0]")
        if tuple(c.repeat_seeds) != tuple(base.repeat_seeds):
            raise ConfigError(f"configs[{i}].repeat_seeds: differs from configs[0]")
    labels = [c.al.label for c in configs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"configs: duplicate strategy labels {labels}; set distinct 'name' fields")


def compare(configs: list[ExperimentConfig], output_dir=None) -> list[dict]:
    """Run each config over the shared seed list; write a table keyed by (step, strategy)."""
    check_comparable(configs)
    out = Path(output_dir or configs[0].output_dir)
    emit = configs[0].emit
    rows = []
    for c in configs:
        rows.extend(aggregate(run_sweep(c, out)))
    rows.sort(key=lambda r: (r["step"], r["strategy"]))
    write_table(out, "compare", AGGREGATE_COLUMNS, rows, emit)
    labels = [c.al.label for c in configs]
    wide = {}
    for r in rows:
        wide.setdefault(r["step"], {"step": r["step"]})[f"accuracy_{r['strategy']}"] = r["accuracy_mean"]
    write_table(out, "compare_wide", ["step"] + [f"accuracy_{lab}" for lab in sorted(labels)],
                [wide[s] for s in sorted(wide)], emit)
    return rows
