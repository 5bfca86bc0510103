"""Adam training loop over a leave-one-domain-out split, plus evaluation.

Training consumes flattened clip features, optimizes the one-vs-all BCE
objective with Adam, measures val top-1 after every epoch in eval mode,
and returns the checkpoint with the best val top-1 (earliest epoch wins
ties). Gradient updates only ever see train ids; the id sets are checked
for disjointness up front.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mlp
from .dataset import FeatureSet, Manifest, pool_temporal
from .mlp import MlpParams
from .splits import SplitSpec

EVAL_BATCH = 512


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 128
    epochs: int = 100
    drop_prob: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning_rate, batch_size must be positive; epochs >= 0")
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValueError(f"drop_prob must be in [0, 1), got {self.drop_prob}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(t) for k, t in params.tensors().items()},
            v={k: np.zeros_like(t) for k, t in params.tensors().items()},
        )


def adam_step(params: MlpParams, grads: dict[str, np.ndarray], state: AdamState,
              config: TrainConfig) -> tuple[MlpParams, AdamState]:
    """Bias-corrected Adam update, applied to each parameter tensor in place."""
    state.step += 1
    t = state.step
    for name, tensor in params.tensors().items():
        g = grads[name]
        if g.shape != tensor.shape:
            raise ValueError(f"gradient shape {g.shape} != param {name} {tensor.shape}")
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient in {name} at Adam step {t}")
        state.m[name] = config.beta1 * state.m[name] + (1 - config.beta1) * g
        state.v[name] = config.beta2 * state.v[name] + (1 - config.beta2) * g * g
        m_hat = state.m[name] / (1 - config.beta1 ** t)
        v_hat = state.v[name] / (1 - config.beta2 ** t)
        tensor -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return params, state


@dataclass
class TrainingData:
    """Feature matrix and labels indexed by clip id, in manifest order."""

    X: np.ndarray  # (N, D')
    labels: np.ndarray  # (N,) class indices into categories
    ids: tuple[str, ...]
    row_domains: tuple[str, ...]
    categories: tuple[str, ...]
    domains: tuple[str, ...]
    row_of: dict[str, int] = field(repr=False, default_factory=dict)

    @classmethod
    def from_features(cls, manifest: Manifest, features: FeatureSet,
                      pool_mode: str = "flatten") -> "TrainingData":
        pooled = pool_temporal(features, pool_mode).astype(np.float64)
        class_index = {c: i for i, c in enumerate(manifest.categories)}
        rows = [r.row_index for r in manifest.records]
        data = cls(
            X=pooled[rows],
            labels=np.array([class_index[r.category] for r in manifest.records]),
            ids=tuple(r.clip_id for r in manifest.records),
            row_domains=tuple(r.domain for r in manifest.records),
            categories=manifest.categories,
            domains=manifest.domains,
        )
        data.row_of = {cid: i for i, cid in enumerate(data.ids)}
        return data

    @property
    def n_classes(self) -> int:
        return len(self.categories)

    def rows_for(self, ids) -> np.ndarray:
        missing = [cid for cid in ids if cid not in self.row_of]
        if missing:
            raise ValueError(f"unknown clip id(s): {missing[:5]}")
        return np.array([self.row_of[cid] for cid in ids], dtype=np.intp)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_top1: float


@dataclass
class EvalReport:
    split_id: str
    overall_top1: float
    per_domain: dict[str, float]
    confusion: np.ndarray  # (C, C), rows = true class, cols = predicted
    n_evaluated: int
    classes: tuple[str, ...]


def _eval_logits(params: MlpParams, X: np.ndarray) -> np.ndarray:
    parts = [mlp.forward(params, X[i:i + EVAL_BATCH], mode="eval")
             for i in range(0, X.shape[0], EVAL_BATCH)]
    return np.concatenate(parts, axis=0)


def _top1(params: MlpParams, X: np.ndarray, labels: np.ndarray) -> float:
    preds = mlp.predict(_eval_logits(params, X))
    return float((preds == labels).mean() * 100.0)


def train(data: TrainingData, split: SplitSpec, config: TrainConfig,
          hidden1: int = mlp.DEFAULT_HIDDEN1, hidden2: int = mlp.DEFAULT_HIDDEN2,
          init: MlpParams | None = None):
    """Train on split.train_ids, select by best val top-1.

    Returns (best_params, history) where history holds one EpochStats per
    epoch. With an empty val set the final-epoch weights are returned.
    """
    train_set, val_set, test_set = set(split.train_ids), set(split.val_ids), set(split.test_ids)
    if train_set & val_set or train_set & test_set or val_set & test_set:
        raise ValueError("split id lists overlap; refusing to train")
    if not split.train_ids:
        raise ValueError("empty train split")

    train_rows = data.rows_for(split.train_ids)
    val_rows = data.rows_for(split.val_ids)
    X_train, y_train = data.X[train_rows], data.labels[train_rows]
    X_val, y_val = data.X[val_rows], data.labels[val_rows]

    params = init.copy() if init is not None else mlp.init_params(
        data.X.shape[1], data.n_classes, seed=config.seed,
        hidden1=hidden1, hidden2=hidden2)
    state = AdamState.zeros_like(params)
    shuffle_rng = np.random.default_rng([config.seed, 0])
    dropout_rng = np.random.default_rng([config.seed, 1])

    n = X_train.shape[0]
    best_params = params.copy()
    best_top1 = -np.inf
    history: list[EpochStats] = []
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            rows = order[start:start + config.batch_size]
            logits, trace = mlp.forward(
                params, X_train[rows], mode="train",
                drop_prob=config.drop_prob, rng=dropout_rng)
            targets = mlp.one_hot(y_train[rows], data.n_classes)
            loss, grad_logits = mlp.ova_bce_loss(logits, targets)
            if not np.isfinite(loss):
                raise ValueError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            grads = mlp.backward(params, trace, grad_logits)
            params, state = adam_step(params, grads, state, config)
            loss_sum += loss * len(rows)
        val_top1 = _top1(params, X_val, y_val) if len(val_rows) else float("nan")
        history.append(EpochStats(epoch=epoch, train_loss=loss_sum / n, val_top1=val_top1))
        if val_top1 > best_top1:  # strict: ties keep the earlier epoch
            best_top1 = val_top1
            best_params = params.copy()

    if not len(val_rows) and config.epochs > 0:
        best_params = params.copy()
    return best_params, history


def evaluate(params: MlpParams, data: TrainingData, ids) -> EvalReport:
    """Eval-mode top-1 over the given clip ids, broken down by domain."""
    ids = list(ids)
    if not ids:
        raise ValueError("empty id list")
    rows = data.rows_for(ids)
    labels = data.labels[rows]
    preds = mlp.predict(_eval_logits(params, data.X[rows]))

    n_classes = data.n_classes
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    overall = float(np.trace(confusion) / len(ids) * 100.0)
    assert abs(overall - float((preds == labels).mean() * 100.0)) < 1e-9

    per_domain: dict[str, float] = {}
    row_domains = np.array([data.row_domains[i] for i in rows])
    for domain in sorted(set(row_domains)):
        sel = row_domains == domain
        per_domain[domain] = float((preds[sel] == labels[sel]).mean() * 100.0)
    return EvalReport(
        split_id="", overall_top1=overall, per_domain=per_domain,
        confusion=confusion, n_evaluated=len(ids), classes=data.categories,
    )


def uniform_random_baseline(n_classes: int, ids=None) -> float:
    """Expected top-1 (%) of a uniform random predictor: 100 / n_classes."""
    if n_classes < 1:
        raise ValueError(f"n_classes must be >= 1, got {n_classes}")
    return 100.0 / n_classes


def write_history_csv(history: list[EpochStats], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_top1"])
        for row in history:
            writer.writerow([row.epoch, repr(row.train_loss), repr(row.val_top1)])


def eval_report_to_dict(report: EvalReport) -> dict:
    return {
        "split_id": report.split_id,
        "overall_top1": report.overall_top1,
        "per_domain": report.per_domain,
        "n_evaluated": report.n_evaluated,
        "classes": list(report.classes),
        "confusion": report.confusion.tolist(),
    }


def write_eval_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(eval_report_to_dict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def read_eval_report(path: str | Path) -> EvalReport:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return EvalReport(
        split_id=obj["split_id"],
        overall_top1=obj["overall_top1"],
        per_domain=obj["per_domain"],
        confusion=np.array(obj["confusion"], dtype=np.int64),
        n_evaluated=obj["n_evaluated"],
        classes=tuple(obj["classes"]),
    )
