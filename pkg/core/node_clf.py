"""Simplified graph convolution node classifier.

Features are propagated once (``A_hat^K X``) and a multinomial logistic head
is trained on top by full-batch gradient descent with momentum, L2 weight
decay and early stopping on validation accuracy.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .errors import DataError, DimensionError, DivergenceError, UsageError
from .graph import Graph, LabelVector
from .propagate import normalize_adjacency, normalize_rows, propagate_k

log = logging.getLogger("NodeClf")


@dataclass(frozen=True)
class Split:
    """Disjoint train/validation/test node sets."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        parts = {"train": self.train, "val": self.val, "test": self.test}
        for name, nodes in parts.items():
            if np.unique(nodes).shape[0] != nodes.shape[0]:
                raise DataError(f"split '{name}' contains duplicate nodes")
        names = list(parts)
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                if np.intersect1d(parts[a], parts[b]).size:
                    raise DataError(f"splits '{a}' and '{b}' overlap")

    @classmethod
    def from_lists(cls, train, val, test) -> "Split":
        def arr(nodes):
            return np.sort(np.asarray(list(nodes), dtype=np.int64))

        return cls(arr(train), arr(val), arr(test))

    def check_range(self, num_nodes: int) -> None:
        for nodes in (self.train, self.val, self.test):
            if nodes.size and (nodes.min() < 0 or nodes.max() >= num_nodes):
                raise DataError(f"split references node ids outside [0, {num_nodes})")

    def to_dict(self) -> dict:
        return {
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "test": self.test.tolist(),
        }


class Dataset(NamedTuple):
    """A labeled graph with its node features and split."""

    graph: Graph
    features: np.ndarray
    labels: LabelVector
    split: Split


@dataclass(frozen=True)
class SgcTrainConfig:
    K: int = 2
    epochs: int = 500
    lr: float = 1.0
    momentum: float = 0.9
    weight_decay: float = 5e-6
    patience: int = 30
    normalize_features: bool = True
    seed: int = 0


@dataclass(frozen=True)
class SgcModel:
    K: int
    weights: np.ndarray
    bias: np.ndarray
    seed: int
    normalize_features: bool = True
    epochs_run: int = 0

    @property
    def num_classes(self) -> int:
        return int(self.weights.shape[1])

    def logits(self, H: np.ndarray) -> np.ndarray:
        return H @ self.weights + self.bias

    def predict(self, H: np.ndarray) -> np.ndarray:
        """Arg-max class per row; ties go to the lowest class id."""
        return np.argmax(self.logits(H), axis=1)


@dataclass(frozen=True)
class ClassReport:
    accuracy: float
    per_class_accuracy: Tuple[Optional[float], ...]
    epochs_run: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": list(self.per_class_accuracy),
            "epochs_run": self.epochs_run,
        }


@dataclass(frozen=True)
class PairedClassReport:
    origin: ClassReport
    ne: ClassReport

    @property
    def delta(self) -> float:
        return self.ne.accuracy - self.origin.accuracy

    def to_dict(self) -> dict:
        return {"origin": self.origin.to_dict(), "ne": self.ne.to_dict(), "delta": self.delta}


def sgc_features(g: Graph, X: np.ndarray, K: int, normalize_features: bool = True) -> np.ndarray:
    """Row-normalize (optionally) and propagate ``K`` steps."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != g.num_nodes:
        raise DimensionError(f"{X.shape[0]} feature rows for {g.num_nodes} nodes")
    if normalize_features:
        X = normalize_rows(X)
    return propagate_k(normalize_adjacency(g), X, K)


def softmax_loss_and_grads(
    W: np.ndarray,
    b: np.ndarray,
    H: np.ndarray,
    y: np.ndarray,
    weight_decay: float = 0.0,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of the softmax head plus ``weight_decay / 2 * ||W||^2``, with gradients."""
    n = H.shape[0]
    Z = H @ W + b
    log_probs = Z - logsumexp(Z, axis=1, keepdims=True)
    rows = np.arange(n)
    loss = -float(np.mean(log_probs[rows, y])) + 0.5 * weight_decay * float(np.sum(W * W))

    G = np.exp(log_probs)
    G[rows, y] -= 1.0
    G /= n
    return loss, H.T @ G + weight_decay * W, G.sum(axis=0)


def _accuracy(model: SgcModel, H: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(model.predict(H) == y)) if y.size else 0.0


def train_sgc(
    g: Graph, X: np.ndarray, y: LabelVector, split: Split, cfg: SgcTrainConfig
) -> SgcModel:
    """
    Train the SGC head on ``split.train``, early-stopping on ``split.val``.

    The weights with the best validation accuracy are kept (the first best
    when several epochs tie). Without a validation set the last weights are kept.

    Raises:
        DataError: Empty training set or unlabeled training/validation nodes.
        DivergenceError: The loss became non-finite.
    """
    if split.train.size == 0:
        raise DataError("training split is empty")
    split.check_range(g.num_nodes)
    for name, nodes in (("train", split.train), ("val", split.val)):
        if not y.known_mask[nodes].all():
            raise DataError(f"{name} split contains unlabeled nodes")
    if cfg.K < 0:
        raise UsageError(f"K must be >= 0, got {cfg.K}")

    H = sgc_features(g, X, cfg.K, cfg.normalize_features)
    H_train, y_train = H[split.train], y.labels[split.train]
    H_val, y_val = H[split.val], y.labels[split.val]

    rng = np.random.default_rng(cfg.seed)
    F, C = H.shape[1], y.num_classes
    limit = np.sqrt(6.0 / (F + C))
    W = rng.uniform(-limit, limit, size=(F, C))
    b = np.zeros(C)
    model = SgcModel(cfg.K, W.copy(), b.copy(), cfg.seed, cfg.normalize_features, 0)
    if cfg.epochs <= 0:
        return model

    vW, vb = np.zeros_like(W), np.zeros_like(b)
    best, best_acc, wait = model, -1.0, 0
    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        loss, dW, db = softmax_loss_and_grads(W, b, H_train, y_train, cfg.weight_decay)
        if not np.isfinite(loss):
            raise DivergenceError(f"SGC loss became non-finite at epoch {epoch} (lr={cfg.lr})")
        vW = cfg.momentum * vW - cfg.lr * dW
        vb = cfg.momentum * vb - cfg.lr * db
        W = W + vW
        b = b + vb

        current = SgcModel(cfg.K, W, b, cfg.seed, cfg.normalize_features, epoch)
        if split.val.size == 0:
            best = current
            continue
        acc = _accuracy(current, H_val, y_val)
        if acc > best_acc:
            best, best_acc, wait = current, acc, 0
        else:
            wait += 1
            if wait >= cfg.patience:
                log.debug("early stop at epoch %d (best val %.4f)", epoch, best_acc)
                break

    return replace(best, epochs_run=epoch)


def evaluate(
    model: SgcModel, g: Graph, X: np.ndarray, y: LabelVector, nodes: Sequence[int]
) -> ClassReport:
    """
    Accuracy of ``model`` on ``nodes``, overall and per class.

    Classes without nodes in the set report ``None``.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise DataError("cannot evaluate on an empty node set")
    if not y.known_mask[nodes].all():
        raise DataError("evaluation set contains unlabeled nodes")

    H = sgc_features(g, X, model.K, model.normalize_features)
    predicted = model.predict(H[nodes])
    truth = y.labels[nodes]
    correct = predicted == truth

    per_class: List[Optional[float]] = []
    for c in range(y.num_classes):
        mask = truth == c
        per_class.append(float(np.mean(correct[mask])) if mask.any() else None)
    return ClassReport(float(np.mean(correct)), tuple(per_class), model.epochs_run)


def compare_origin_vs_ne(
    g: Graph,
    g_ne: Graph,
    X: np.ndarray,
    y: LabelVector,
    split: Split,
    cfg: SgcTrainConfig,
) -> PairedClassReport:
    """Train identical SGC models on the original and the refined graph; report both on ``split.test``."""
    origin = train_sgc(g, X, y, split, cfg)
    ne = train_sgc(g_ne, X, y, split, cfg)
    report = PairedClassReport(
        evaluate(origin, g, X, y, split.test),
        evaluate(ne, g_ne, X, y, split.test),
    )
    log.info(
        "origin %.4f, NE %.4f (delta %+.4f)",
        report.origin.accuracy,
        report.ne.accuracy,
        report.delta,
    )
    return report
