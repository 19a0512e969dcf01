"""Per-split training with early stopping, the multi-split protocol and grid sweeps."""
from __future__ import annotations

import dataclasses
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .analysis import degree_distribution
from .autodiff import Tape
from .graph import Graph, Split
from .model import HogModel, ModelConfig, accuracy, save_checkpoint
from .optim import Adam, AdamSettings

THREADS_ENV = "HOGGCN_NUM_THREADS"


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainSettings:
    max_epochs: int = 500
    patience: int = 100
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4
    eval_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.eval_every < 1:
            raise ValueError("max_epochs, patience and eval_every must be >= 1")

    def adam(self) -> AdamSettings:
        return AdamSettings(self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)


@dataclass
class SplitRecord:
    split_seed: int
    run_seed: int
    best_epoch: int
    epochs_run: int
    best_val_acc: float
    val_acc: float
    test_acc: float
    train_acc: float
    h_intra_mean: float
    h_inter_mean: float
    curves: dict[str, list[float]] = field(default_factory=dict)


@dataclass
class TrainReport:
    records: list[SplitRecord]
    mean_acc: float
    std_acc: float
    config: dict

    @property
    def accuracies(self) -> list[float]:
        return [r.test_acc for r in self.records]

    def to_dict(self) -> dict:
        out = {"mean_acc": self.mean_acc, "std_acc": self.std_acc, "config": self.config,
               "splits": []}
        for r in self.records:
            d = asdict(r)
            d.pop("curves")
            out["splits"].append(d)
        return _round_floats(out)


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.9g}") if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def aggregate(accuracies) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single split)."""
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.size == 0:
        raise ValueError("no accuracies to aggregate")
    std = float(np.std(acc, ddof=1)) if acc.size > 1 else 0.0
    return float(np.mean(acc)), std


def run_seed(settings_seed: int, split_seed: int) -> int:
    return int(np.random.SeedSequence([settings_seed, split_seed]).generate_state(1)[0])


def train_one_split(graph: Graph, split: Split, config: ModelConfig,
                    settings: TrainSettings) -> tuple[HogModel, SplitRecord]:
    """Train on `split.train`, keep the parameters of the best validation epoch."""
    seed = run_seed(settings.seed, split.seed)
    model = HogModel(graph, config, seed=seed)
    opt = Adam(model.params, settings.adam(), decay=model.weight_names)
    labels = graph.labels
    train, val = split.train, split.val

    curves = {"gcn": [], "mlp": [], "lp": [], "val_acc": []}
    best_score, best_epoch, best_state = None, 0, model.get_state()
    since_best = 0
    epoch = 0
    for epoch in range(settings.max_epochs):
        with Tape() as tape:
            loss, parts, out = model.loss(train)
        if not np.isfinite(loss.item()):
            raise TrainingError(f"non-finite loss at epoch {epoch}: total={loss.item()} "
                                f"components={parts}")
        val_acc = accuracy(out.R, labels, val) if val.size else float("nan")
        if epoch % settings.eval_every == 0:
            if val.size:
                val_loss = float(ad.masked_cross_entropy(out.R.value, labels, val).value)
                score = (val_acc, -val_loss)
            else:
                score = (0.0, -parts["gcn"])
            if best_score is None or score > best_score:
                best_score, best_epoch, best_state = score, epoch, model.get_state()
                since_best = 0
        for key in ("gcn", "mlp", "lp"):
            curves[key].append(parts[key])
        curves["val_acc"].append(val_acc)
        tape.backward(loss)
        opt.step()
        since_best += 1
        if since_best > settings.patience:
            break

    model.set_state(best_state)
    out = model.forward(train)
    dist = degree_distribution(out.H.value, labels, model.support)
    record = SplitRecord(
        split_seed=int(split.seed), run_seed=seed, best_epoch=best_epoch, epochs_run=epoch + 1,
        best_val_acc=float(best_score[0]) if val.size else float("nan"),
        val_acc=accuracy(out.R, labels, val), test_acc=accuracy(out.R, labels, split.test),
        train_acc=accuracy(out.R, labels, train),
        h_intra_mean=dist.intra_mean, h_inter_mean=dist.inter_mean, curves=curves)
    return model, record


def _train_job(args):
    graph, split, config, settings = args
    model, record = train_one_split(graph, split, config, settings)
    return model.get_state(), record


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_protocol(graph: Graph, config: ModelConfig, settings: TrainSettings,
                 splits=None, workers: int | None = None, keep_models: bool = False):
    """Train every split independently and aggregate test accuracy.

    Returns the report, plus the trained models when `keep_models` is set.
    """
    splits = list(graph.splits if splits is None else splits)
    if not splits:
        raise ValueError("run_protocol needs at least one split")
    workers = default_workers() if workers is None else workers
    jobs = [(graph, s, config, settings) for s in splits]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_train_job, jobs))
    else:
        results = [_train_job(j) for j in jobs]
    records = [r for _, r in results]
    mean, std = aggregate([r.test_acc for r in records])
    report = TrainReport(records, mean, std,
                         {"model": asdict(config), "train": asdict(settings)})
    if not keep_models:
        return report
    models = []
    for state, record in results:
        model = HogModel(graph, config, seed=record.run_seed)
        model.set_state(state)
        models.append(model)
    return report, models


def write_report(report: TrainReport, run_dir, models=None) -> Path:
    """Write report.json, curves.tsv and (optionally) one checkpoint per split."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(run_dir / "curves.tsv", "w", encoding="utf-8") as fh:
        fh.write("split\tepoch\tL_gcn\tL_mlp\tL_lp\tval_acc\n")
        for i, r in enumerate(report.records):
            c = r.curves
            for e in range(len(c["gcn"])):
                fh.write(f"{i}\t{e}\t{c['gcn'][e]:.9g}\t{c['mlp'][e]:.9g}\t{c['lp'][e]:.9g}\t"
                         f"{c['val_acc'][e]:.9g}\n")
    if models:
        ckpt_dir = run_dir / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)
        for i, model in enumerate(models):
            save_checkpoint(model, ckpt_dir / f"split_{i}.npz")
    return run_dir


def sweep_points(axis: str, values) -> list[dict]:
    """Grid points for the `k` axis or the alpha x beta grid."""
    values = list(values)
    if axis == "k":
        if any(int(v) < 1 for v in values):
            raise ValueError("k values must be >= 1")
        return [{"k": int(v)} for v in values]
    if axis == "alphabeta":
        if any(v < 0 for v in values):
            raise ValueError("alpha/beta values must be >= 0")
        return [{"alpha": float(a), "beta": float(b)} for a, b in itertools.product(values, values)]
    raise ValueError(f"unknown sweep axis {axis!r}; expected 'k' or 'alphabeta'")


def sweep(graph: Graph, config: ModelConfig, settings: TrainSettings, axis: str, values,
          splits=None, workers: int | None = None) -> list[tuple[dict, TrainReport]]:
    rows = []
    for point in sweep_points(axis, values):
        cfg = dataclasses.replace(config, **point)
        rows.append((point, run_protocol(graph, cfg, settings, splits, workers)))
    return rows


def write_sweep(rows, path) -> Path:
    path = Path(path)
    keys = list(rows[0][0]) if rows else []
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(keys + ["mean_acc", "std_acc", "accuracies"]) + "\n")
        for point, report in rows:
            accs = ",".join(f"{a:.9g}" for a in report.accuracies)
            fields_ = [f"{point[k]:.9g}" if isinstance(point[k], float) else str(point[k])
                       for k in keys]
            fh.write("\t".join(fields_ + [f"{report.mean_acc:.9g}", f"{report.std_acc:.9g}",
                                         accs]) + "\n")
    return path
