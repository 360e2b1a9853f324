"""Linear softmax encoder over concatenated pre-computed tensors.

Stands in for a backbone encoder: enough capacity to exploit an echoed
self-label, nothing more.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import LabelMatrix, SplitAssignment
from .errors import ConfigError, NumericError, SplitError
from .labelprop import precompute
from .propagation import PropagatedTensor

log = logging.getLogger(__name__)


@dataclass
class EncoderConfig:
    lr: float = 0.5
    epochs: int = 300
    dropout_in: float = 0.0
    dropout_label: float = 0.0
    weight_decay: float = 0.0
    patience: int = 50
    seed: int = 0

    def __post_init__(self):
        for name in ("dropout_in", "dropout_label"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 0.9:
                raise ConfigError(f"{name}={rate} outside [0, 0.9]")
        if self.lr <= 0 or self.epochs < 0 or self.patience < 1:
            raise ConfigError("lr must be > 0, epochs >= 0, patience >= 1")


@dataclass
class SoftmaxModel:
    W: np.ndarray
    b: np.ndarray
    label_cols: np.ndarray = field(repr=False)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(X @ self.W + self.b)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(X @ self.W + self.b, axis=1)


def softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def concat_tensors(tensors) -> tuple[np.ndarray, np.ndarray]:
    """Column-stack tensors, dropping retention columns.

    Returns the design matrix and a boolean column mask marking label
    blocks; a tensor counts as a feature block when ``meta["source"] == "feature"``.
    """
    if not tensors:
        raise ConfigError("need at least one tensor")
    blocks, is_label = [], []
    for t in tensors:
        if isinstance(t, PropagatedTensor):
            vals = t.label_values
            label = t.meta.get("source", "label") != "feature"
        else:
            vals, label = np.asarray(t, dtype=np.float64), True
        blocks.append(vals)
        is_label.append(np.full(vals.shape[1], label))
    rows = {b.shape[0] for b in blocks}
    if len(rows) != 1:
        raise ConfigError(f"tensors disagree on row count: {sorted(rows)}")
    return np.hstack(blocks), np.concatenate(is_label)


def loss_and_grad(W, b, X, y, weight_decay=0.0):
    """Mean cross-entropy over rows of X and its gradient in (W, b)."""
    n = X.shape[0]
    P = softmax(X @ W + b)
    loss = -np.mean(np.log(P[np.arange(n), y] + 1e-300)) + 0.5 * weight_decay * np.sum(W * W)
    G = P
    G[np.arange(n), y] -= 1.0
    G /= n
    return loss, X.T @ G + weight_decay * W, G.sum(axis=0)


def _accuracy(model, X, y):
    return float(np.mean(model.predict(X) == y)) if y.size else float("nan")


def train_encoder(tensors, labels, split: SplitAssignment, cfg: EncoderConfig | None = None):
    """Full-batch gradient descent with early stopping on validation accuracy.

    Returns ``(model, metrics)``; the model holds the parameters of the best
    validation epoch (the last epoch when there is no validation split).
    """
    cfg = cfg or EncoderConfig()
    X, label_cols = concat_tensors(tensors)
    labels = np.asarray(labels, dtype=np.int64)
    tr, va = split.train_idx, split.indices("valid")
    if tr.size == 0:
        raise SplitError("no training nodes")
    C = int(labels[labels >= 0].max()) + 1
    rng = np.random.default_rng(cfg.seed)
    W = 0.01 * rng.standard_normal((X.shape[1], C))
    b = np.zeros(C)
    keep = np.where(label_cols, 1.0 - cfg.dropout_label, 1.0 - cfg.dropout_in)
    Xtr, ytr = X[tr], labels[tr]
    Xva, yva = X[va], labels[va]

    best = (-1.0, W.copy(), b.copy(), 0)
    model = SoftmaxModel(W, b, label_cols)
    stale = 0
    loss = float("nan")
    for epoch in range(cfg.epochs):
        if cfg.dropout_in or cfg.dropout_label:
            drop = rng.random(Xtr.shape) < keep
            Xb = Xtr * drop / keep
        else:
            Xb = Xtr
        loss, gW, gb = loss_and_grad(W, b, Xb, ytr, cfg.weight_decay)
        if not np.isfinite(loss):
            raise NumericError(f"training diverged at epoch {epoch} (loss={loss})")
        W -= cfg.lr * gW
        b -= cfg.lr * gb
        if va.size:
            acc = _accuracy(model, Xva, yva)
            if acc > best[0]:
                best, stale = (acc, W.copy(), b.copy(), epoch), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if va.size:
        model = SoftmaxModel(best[1], best[2], label_cols)
    metrics = {
        "final_loss": float(loss),
        "best_epoch": best[3] if va.size else cfg.epochs - 1,
        "train_acc": _accuracy(model, Xtr, ytr),
        "valid_acc": _accuracy(model, Xva, yva),
    }
    log.debug("encoder trained: %s", metrics)
    return model, metrics


def macro_f1(y_true, y_pred) -> float:
    """Unweighted mean F1 over classes present in either vector."""
    classes = np.union1d(y_true, y_pred)
    f1s = []
    for c in classes:
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(f1s))


def evaluate(model: SoftmaxModel, tensors, labels, split: SplitAssignment, part: str = "test"):
    """Accuracy and macro-F1 on one split part."""
    X, _ = concat_tensors(tensors)
    idx = split.indices(part)
    if idx.size == 0:
        raise SplitError(f"split part {part!r} is empty")
    y = np.asarray(labels)[idx]
    pred = model.predict(X[idx])
    return float(np.mean(pred == y)), macro_f1(y, pred)


def leakage_gap_experiment(
    graph,
    labels,
    split: SplitAssignment,
    strategies,
    seeds,
    plans,
    cfg: EncoderConfig | None = None,
    M: int = 2,
    chance: float | None = None,
) -> dict:
    """Pre-compute, train and evaluate every strategy once per seed.

    Meant for random-label fixtures, where test accuracy cannot beat chance
    and any train accuracy above it comes from echoed self-labels.
    """
    cfg = cfg or EncoderConfig()
    labels = np.asarray(labels)
    C = int(labels.max()) + 1
    Y = LabelMatrix.from_labels(labels, split, C).Y
    chance = 1.0 / C if chance is None else chance
    results = {}
    for strategy in strategies:
        tr, te = [], []
        for seed in seeds:
            tensors = precompute(strategy, plans, graph, Y, split, M=M, seed=seed)
            model, _ = train_encoder(tensors, labels, split, replace(cfg, seed=seed))
            tr.append(evaluate(model, tensors, labels, split, "train")[0])
            te.append(evaluate(model, tensors, labels, split, "test")[0])
        results[strategy] = {
            "train_acc": float(np.mean(tr)),
            "train_acc_std": float(np.std(tr)),
            "test_acc": float(np.mean(te)),
            "test_acc_std": float(np.std(te)),
            "gap": float(np.mean(tr) - chance),
            "per_seed_train": tr,
            "per_seed_test": te,
        }
    return results
