"""Experiment protocol: multi-seed training with validation-based early
stopping, two freezing modes, length-bucketed generalization evaluation,
and max/mean/std aggregation across seeds."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import nn_core
from .nn_core import (bptt_gradients, batch_loss, copy_params,
                      forward_batch, initialize, param_arrays, sgd_step)
from .sampling import DatasetSpec, build_dataset

# hidden-state sizes per grammar (sdim)
SDIM = {"dyck1": 2, "dyck2": 4, "dyck4": 8, "dyck6": 12,
        "anbncn": 6, "anbncndn": 8, "anbmambn": 8, "anbmambm": 8}


@dataclass(frozen=True)
class ExperimentConfig:
    grammar: str = "dyck1"
    hardness: str = "hard1"
    cell: str = "lstm"
    sdim: int = 0  # 0 = look up SDIM table
    init: str = ""  # "" = cell default strategy
    train_len_min: int = 2
    train_len_max: int = 40
    test_len_min: int = 41
    test_len_max: int = 500
    batch_size: int = 128
    lr: float = 0.01
    max_iters: int = 100_000
    val_every: int = 100
    patience_iters: int = 7_000
    seeds: tuple = tuple(range(10))
    freeze: str = "none"  # or "recurrent"
    float32: bool = False
    train_size: int = 10_000
    val_size: int = 1_000
    test_size: int = 2_000
    length_decay: float = 0.1
    data_seed: int = 1234
    bucket_width: int = 20

    def __post_init__(self):
        if self.patience_iters % self.val_every:
            raise ValueError("patience_iters must be a multiple of val_every")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")

    @property
    def hidden(self) -> int:
        return self.sdim or SDIM[self.grammar]

    @property
    def strategy(self) -> str:
        return self.init or nn_core.default_strategy(self.cell)

    @property
    def dtype(self):
        return np.float32 if self.float32 else np.float64


def desk_preset(**overrides) -> ExperimentConfig:
    """Small-scale preset used by the acceptance suite."""
    base = dict(max_iters=20_000, train_size=4_000, val_size=1_000,
                test_size=2_000, seeds=(0, 1, 2))
    base.update(overrides)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# Config file round trip (flat key=value text)
# ---------------------------------------------------------------------------

def config_to_text(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "seeds":
            v = ",".join(str(s) for s in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> ExperimentConfig:
    kwargs = {}
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in types:
            raise ValueError(f"unknown config key: {key}")
        if key == "seeds":
            kwargs[key] = tuple(int(s) for s in val.split(",") if s.strip())
        elif types[key] == "int":
            kwargs[key] = int(val)
        elif types[key] == "float":
            kwargs[key] = float(val)
        elif types[key] == "bool":
            kwargs[key] = val.lower() in ("1", "true", "yes")
        else:
            kwargs[key] = val
    return ExperimentConfig(**kwargs)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

def dataset_specs(cfg: ExperimentConfig):
    """Train/val/test DatasetSpecs; shared across training seeds so every
    cell/seed sees identical data."""
    mk = lambda lo, hi, size, off: DatasetSpec(
        cfg.grammar, cfg.hardness, lo, hi, size, cfg.length_decay,
        cfg.data_seed + off)
    return (mk(cfg.train_len_min, cfg.train_len_max, cfg.train_size, 0),
            mk(cfg.train_len_min, cfg.train_len_max, cfg.val_size, 1),
            mk(cfg.test_len_min, cfg.test_len_max, cfg.test_size, 2))


def load_datasets(cfg: ExperimentConfig):
    tr, va, te = dataset_specs(cfg)
    return build_dataset(tr), build_dataset(va), build_dataset(te)


# ---------------------------------------------------------------------------
# Early stopping
# ---------------------------------------------------------------------------

class EarlyStopper:
    """Stop when validation loss has not improved by more than min_delta
    for patience_iters consecutive iterations."""

    def __init__(self, patience_iters: int, val_every: int,
                 min_delta: float = 1e-6):
        self.patience_checks = patience_iters // val_every
        self.min_delta = min_delta
        self.best = math.inf
        self.best_iter = 0
        self.stale = 0

    def update(self, iteration: int, val_loss: float) -> bool:
        """Record one validation; True means stop now."""
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.best_iter = iteration
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience_checks


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainingResult:
    params: object
    classifier: object
    log: list  # (iteration, train_loss, val_loss)
    stopped_at: int
    diverged: bool
    best_val_loss: float


def run_training(cfg: ExperimentConfig, seed: int,
                 datasets=None) -> TrainingResult:
    """SGD on BCE with periodic validation; returns the
    best-validation-loss checkpoint."""
    g = DatasetSpec(cfg.grammar, cfg.hardness).grammar_obj()
    if datasets is None:
        train, val, _ = load_datasets(cfg)
    else:
        train, val = datasets[0], datasets[1]
    train_pairs = [(r.s, int(r.label)) for r in train]
    val_pairs = [(r.s, int(r.label)) for r in val]

    rng = np.random.default_rng(seed)
    params, clf = initialize(cfg.cell, cfg.hidden, g.alphabet_size,
                             cfg.strategy, seed, cfg.dtype)
    best = (copy_params(params), copy_params(clf))
    stopper = EarlyStopper(cfg.patience_iters, cfg.val_every)
    log = []
    diverged = False
    it = 0
    while it < cfg.max_iters:
        it += 1
        idx = rng.integers(len(train_pairs), size=cfg.batch_size)
        batch = [train_pairs[i] for i in idx]
        gp, gc, loss, _ = bptt_gradients(cfg.cell, params, clf, batch,
                                         cfg.freeze)
        if not math.isfinite(loss) or any(
                not np.all(np.isfinite(a)) for _, a in param_arrays(gp)):
            diverged = True
            break
        if cfg.freeze != "recurrent":
            params = sgd_step(params, gp, cfg.lr)
        clf = sgd_step(clf, gc, cfg.lr)
        if it % cfg.val_every == 0:
            val_loss = batch_loss(cfg.cell, params, clf, val_pairs)
            log.append((it, loss, val_loss))
            if not math.isfinite(val_loss):
                diverged = True
                break
            if val_loss < stopper.best - stopper.min_delta:
                best = (copy_params(params), copy_params(clf))
            if stopper.update(it, val_loss):
                break
    return TrainingResult(best[0], best[1], log, it, diverged,
                          stopper.best)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    accuracy: float  # percent
    per_length_bucket: dict  # bucket lower bound -> percent
    bucket_counts: dict
    per_example: list  # (length, correct) pairs


def evaluate(cell: str, params, clf, rows, bucket_width: int = 20,
             chunk: int = 256) -> EvalResult:
    """Accuracy of thresholded probabilities, overall and per length
    bucket (buckets aligned to the minimum observed length)."""
    per_example = []
    for i in range(0, len(rows), chunk):
        part = rows[i:i + chunk]
        probs, _, _ = forward_batch(cell, params, clf, [r.s for r in part])
        for r, p in zip(part, probs):
            per_example.append((len(r.s), (p > 0.5) == bool(r.label)))
    if not per_example:
        return EvalResult(0.0, {}, {}, [])
    lmin = min(l for l, _ in per_example)
    buckets: dict = {}
    counts: dict = {}
    for l, ok in per_example:
        lo = lmin + ((l - lmin) // bucket_width) * bucket_width
        buckets.setdefault(lo, 0)
        counts.setdefault(lo, 0)
        buckets[lo] += bool(ok)
        counts[lo] += 1
    acc = 100.0 * sum(ok for _, ok in per_example) / len(per_example)
    bucket_acc = {lo: 100.0 * buckets[lo] / counts[lo] for lo in buckets}
    return EvalResult(acc, bucket_acc, counts, per_example)


def accuracy_in_range(res: EvalResult, lo: int, hi: int) -> float:
    sel = [ok for l, ok in res.per_example if lo <= l <= hi]
    if not sel:
        return float("nan")
    return 100.0 * sum(sel) / len(sel)


# ---------------------------------------------------------------------------
# Aggregation over seeds
# ---------------------------------------------------------------------------

@dataclass
class MetricsSummary:
    per_seed_accuracy: list
    max: float
    mean: float
    std: float  # population std
    per_length_bucket: dict  # bucket -> mean accuracy over seeds
    diverged_seeds: list
    per_seed_results: list = field(default_factory=list)


def aggregate(per_seed_accuracy, per_seed_buckets=None,
              diverged_seeds=()) -> MetricsSummary:
    accs = list(per_seed_accuracy)
    buckets: dict = {}
    if per_seed_buckets:
        keys = set().union(*[set(b) for b in per_seed_buckets])
        for k in sorted(keys):
            vals = [b[k] for b in per_seed_buckets if k in b]
            buckets[k] = float(np.mean(vals))
    return MetricsSummary(accs, float(np.max(accs)), float(np.mean(accs)),
                          float(np.std(accs)), buckets, list(diverged_seeds))


def run_experiment(cfg: ExperimentConfig, datasets=None,
                   progress=None) -> MetricsSummary:
    """Train + evaluate per seed, then aggregate (max, mean, std)."""
    if datasets is None:
        datasets = load_datasets(cfg)
    _, _, test = datasets
    accs, bucket_list, diverged, details = [], [], [], []
    for seed in cfg.seeds:
        tr = run_training(cfg, seed, datasets)
        ev = evaluate(cfg.cell, tr.params, tr.classifier, test,
                      cfg.bucket_width)
        accs.append(ev.accuracy)
        bucket_list.append(ev.per_length_bucket)
        if tr.diverged:
            diverged.append(seed)
        details.append((seed, tr, ev))
        if progress:
            progress(cfg, seed, tr, ev)
    summary = aggregate(accs, bucket_list, diverged)
    summary.per_seed_results = details
    return summary


def run_sweep(base: ExperimentConfig, hardnesses=None, cells=None,
              inits=None, datasets_cache=None, progress=None):
    """Cartesian product of the given axes, each a full run_experiment.

    Returns rows of (config, MetricsSummary).  Datasets are cached per
    (grammar, hardness) so all cells compare on identical data."""
    hardnesses = hardnesses or [base.hardness]
    cells = cells or [base.cell]
    inits = inits or [base.init]
    cache = datasets_cache if datasets_cache is not None else {}
    rows = []
    for hard in hardnesses:
        for cell in cells:
            for init in inits:
                cfg = replace(base, hardness=hard, cell=cell, init=init)
                key = (cfg.grammar, hard)
                if key not in cache:
                    cache[key] = load_datasets(cfg)
                rows.append((cfg, run_experiment(cfg, cache[key],
                                                 progress=progress)))
    return rows


SWEEP_COLUMNS = ("grammar", "hardness", "cell", "freeze", "init", "sdim",
                 "seed_count", "max", "mean", "std")


def sweep_to_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for cfg, s in rows:
            w.writerow([cfg.grammar, cfg.hardness, cfg.cell, cfg.freeze,
                        cfg.strategy, cfg.hidden, len(cfg.seeds),
                        f"{s.max:.2f}", f"{s.mean:.2f}", f"{s.std:.2f}"])


def buckets_to_csv(path, summary: MetricsSummary):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bucket_min_len", "mean_accuracy"])
        for k in sorted(summary.per_length_bucket):
            w.writerow([k, f"{summary.per_length_bucket[k]:.4f}"])


def log_to_csv(path, log):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "train_loss", "val_loss"])
        for it, tl, vl in log:
            w.writerow([it, f"{tl:.6f}", f"{vl:.6f}"])
