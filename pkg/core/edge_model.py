"""Symmetric pairwise edge classifier predicting whether two nodes share a label.

The classifier projects both node embeddings with ``W_e``, combines them as
``|eu - ev| || (eu + ev) || (eu * ev)`` and scores the result with an MLP
(ReLU hidden layers, sigmoid output). Every combination is commutative, so
``predict_edge(u, v) == predict_edge(v, u)`` holds bit for bit.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .errors import DataError, DimensionError, DivergenceError, NumericError, UsageError
from .graph import Graph, LabelVector

log = logging.getLogger("EdgeModel")

CHECKPOINT_FORMAT = "negcn-edge-classifier"
CHECKPOINT_VERSION = 1

Layer = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class EdgeClassifierParams:
    """
    Projection and MLP weights of the edge classifier.

    Attributes:
        projection (np.ndarray): ``F x d`` matrix ``W_e``.
        layers (Tuple[Layer, ...]): ``(weight, bias)`` pairs; the first takes ``3d`` inputs,
            the last produces one logit.
        seed (int): Seed used at initialization.
        train_losses (Tuple[float, ...]): Full-data loss before training and after each epoch.
    """

    projection: np.ndarray
    layers: Tuple[Layer, ...]
    seed: int
    train_losses: Tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("edge classifier needs at least one layer")
        if self.layers[0][0].shape[0] != 3 * self.dim:
            raise DimensionError(
                f"first layer takes {self.layers[0][0].shape[0]} inputs, expected 3*{self.dim}"
            )
        if self.layers[-1][0].shape[1] != 1:
            raise DimensionError("final layer must produce a single logit")
        for (w_prev, _), (w_next, _) in zip(self.layers, self.layers[1:]):
            if w_prev.shape[1] != w_next.shape[0]:
                raise DimensionError("consecutive layer widths do not match")

    @property
    def input_dim(self) -> int:
        return int(self.projection.shape[0])

    @property
    def dim(self) -> int:
        return int(self.projection.shape[1])

    def tensors(self) -> List[np.ndarray]:
        """All parameter arrays in a fixed order: projection, then (weight, bias) per layer."""
        out = [self.projection]
        for weight, bias in self.layers:
            out.extend([weight, bias])
        return out

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> "EdgeClassifierParams":
        layers = tuple(
            (tensors[1 + 2 * i], tensors[2 + 2 * i]) for i in range(len(self.layers))
        )
        return replace(self, projection=tensors[0], layers=layers)

    def is_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors())

    def to_dict(self, provenance: Optional[dict] = None) -> dict:
        def pack(a):
            return {"shape": list(a.shape), "values": a.ravel().tolist()}

        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "provenance": provenance or {},
            "projection": pack(self.projection),
            "layers": [{"weight": pack(w), "bias": pack(b)} for w, b in self.layers],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EdgeClassifierParams":
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise DataError(f"not an edge classifier checkpoint (format={doc.get('format')!r})")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {doc.get('version')!r}")

        def unpack(entry):
            values = np.asarray(entry["values"], dtype=np.float64)
            return values.reshape(entry["shape"])

        try:
            layers = tuple((unpack(l["weight"]), unpack(l["bias"])) for l in doc["layers"])
            params = cls(unpack(doc["projection"]), layers, int(doc["seed"]))
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed edge classifier checkpoint: {e}") from e
        if not params.is_finite():
            raise NumericError("checkpoint contains non-finite parameters")
        return params


@dataclass(frozen=True)
class EdgeSample:
    """A labeled node pair; ``label`` is 1 for same-label pairs, 0 otherwise."""

    u: int
    v: int
    label: int

    def __post_init__(self):
        if self.u == self.v:
            raise DataError(f"edge sample needs two distinct nodes, got ({self.u}, {self.v})")


@dataclass(frozen=True)
class EdgeEvalReport:
    """Confusion counts and the derived rates; undefined rates are ``None``."""

    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "EdgeEvalReport":
        return cls(int(tp), int(fp), int(tn), int(fn))

    @property
    def p(self) -> Optional[float]:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def q(self) -> Optional[float]:
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else None

    @property
    def p_pre(self) -> Optional[float]:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def accuracy(self) -> Optional[float]:
        total = self.tp + self.fp + self.tn + self.fn
        return (self.tp + self.tn) / total if total else None

    def to_dict(self) -> dict:
        p, q = self.p, self.q
        return {
            "p": p,
            "q": q,
            "p_minus_q": p - q if p is not None and q is not None else None,
            "p_pre": self.p_pre,
            "accuracy": self.accuracy,
            "counts": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
        }


@dataclass(frozen=True)
class EdgeTrainConfig:
    dim: int = 64
    hidden: Tuple[int, ...] = (64,)
    epochs: int = 200
    batch_size: int = 256
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    balance_tol: float = 0.05
    mix_observed_negatives: bool = True
    seed: int = 0


def init_edge_params(
    input_dim: int,
    dim: int = 64,
    hidden: Sequence[int] = (64,),
    seed: int = 0,
    zero_output: bool = False,
) -> EdgeClassifierParams:
    """
    Glorot-uniform initialization of the projection and MLP layers.

    Args:
        zero_output (bool): Zero the final layer so every pair scores exactly 0.5.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    projection = glorot(input_dim, dim)
    widths = [3 * dim, *hidden, 1]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        last = i == len(widths) - 2
        if last and zero_output:
            weight = np.zeros((fan_in, fan_out))
        else:
            weight = glorot(fan_in, fan_out)
        layers.append((weight, np.zeros(fan_out)))
    return EdgeClassifierParams(projection, tuple(layers), seed)


def featurize_pair(eu: np.ndarray, ev: np.ndarray, params: EdgeClassifierParams) -> np.ndarray:
    """Symmetric ``3d`` pair feature ``|pu - pv| || pu + pv || pu * pv`` of one pair."""
    Eu, Ev = _as_batch(eu, params), _as_batch(ev, params)
    return _pair_features(Eu @ params.projection, Ev @ params.projection)[0]


def _pair_features(Pu: np.ndarray, Pv: np.ndarray) -> np.ndarray:
    return np.concatenate([np.abs(Pu - Pv), Pu + Pv, Pu * Pv], axis=1)


def _as_batch(e: np.ndarray, params: EdgeClassifierParams) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    if e.ndim == 1:
        e = e[None, :]
    if e.shape[1] != params.input_dim:
        raise DimensionError(f"embedding width {e.shape[1]} != classifier input {params.input_dim}")
    return e


def _forward(params: EdgeClassifierParams, Eu: np.ndarray, Ev: np.ndarray):
    Pu = Eu @ params.projection
    Pv = Ev @ params.projection
    h = _pair_features(Pu, Pv)
    inputs, pre = [h], []
    last = len(params.layers) - 1
    for i, (weight, bias) in enumerate(params.layers):
        a = h @ weight + bias
        pre.append(a)
        if i < last:
            h = np.maximum(a, 0.0)
            inputs.append(h)
    return pre[-1][:, 0], (Pu, Pv, inputs, pre)


def edge_loss_and_grads(
    params: EdgeClassifierParams,
    Eu: np.ndarray,
    Ev: np.ndarray,
    y: np.ndarray,
    weight_decay: float = 0.0,
) -> Tuple[float, List[np.ndarray]]:
    """
    Mean binary cross-entropy and its gradient for every parameter tensor.

    The gradient list follows ``params.tensors()``. Weight decay adds
    ``weight_decay / 2 * ||W||^2`` for the projection and every layer weight.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    logits, (Pu, Pv, inputs, pre) = _forward(params, Eu, Ev)
    loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))

    g = ((expit(logits) - y) / n)[:, None]
    layer_grads = []
    for i in range(len(params.layers) - 1, -1, -1):
        weight, _ = params.layers[i]
        d_weight = inputs[i].T @ g + weight_decay * weight
        d_bias = g.sum(axis=0)
        layer_grads.append((d_weight, d_bias))
        g = g @ weight.T
        if i > 0:
            g = g * (pre[i - 1] > 0)
    layer_grads.reverse()

    d = params.dim
    g_abs, g_sum, g_prod = g[:, :d], g[:, d : 2 * d], g[:, 2 * d :]
    sign = np.sign(Pu - Pv)
    d_pu = g_abs * sign + g_sum + g_prod * Pv
    d_pv = -g_abs * sign + g_sum + g_prod * Pu
    d_projection = Eu.T @ d_pu + Ev.T @ d_pv + weight_decay * params.projection

    if weight_decay:
        penalty = sum(float(np.sum(w * w)) for w, _ in params.layers)
        penalty += float(np.sum(params.projection ** 2))
        loss += 0.5 * weight_decay * penalty

    grads = [d_projection]
    for d_weight, d_bias in layer_grads:
        grads.extend([d_weight, d_bias])
    return loss, grads


def predict_pairs(
    params: EdgeClassifierParams,
    embeddings: np.ndarray,
    us: np.ndarray,
    vs: np.ndarray,
) -> np.ndarray:
    """Scores in [0, 1] for the pairs ``(us[i], vs[i])`` of embedding rows."""
    if not params.is_finite():
        raise NumericError("edge classifier has non-finite parameters")
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape[1] != params.input_dim:
        raise DimensionError(
            f"embedding width {embeddings.shape[1]} != classifier input {params.input_dim}"
        )
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    if us.size == 0:
        return np.empty(0, dtype=np.float64)
    logits, _ = _forward(params, embeddings[us], embeddings[vs])
    return expit(logits)


def predict_edge(params: EdgeClassifierParams, eu: np.ndarray, ev: np.ndarray) -> float:
    """Score in [0, 1] that the nodes with embeddings ``eu`` and ``ev`` share a label."""
    if not params.is_finite():
        raise NumericError("edge classifier has non-finite parameters")
    logits, _ = _forward(params, _as_batch(eu, params), _as_batch(ev, params))
    return float(expit(logits[0]))


def _sample_different_label_pairs(
    nodes: np.ndarray, labels: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform random pairs of ``nodes`` with different labels; may return fewer than ``count``."""
    found: List[np.ndarray] = []
    remaining = count
    for _ in range(100):
        if remaining <= 0:
            break
        draw = 2 * remaining + 16
        u = nodes[rng.integers(0, nodes.shape[0], size=draw)]
        v = nodes[rng.integers(0, nodes.shape[0], size=draw)]
        ok = labels[u] != labels[v]
        pairs = np.column_stack([u[ok], v[ok]])[:remaining]
        found.append(pairs)
        remaining -= pairs.shape[0]
    if not found:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(found)


def build_training_pairs(
    g: Graph,
    y: LabelVector,
    cfg: EdgeTrainConfig,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Labeled pairs for training: observed edges between known nodes plus sampled negatives.

    Same-label edges are positives. Different-label edges are kept as negatives
    when ``cfg.mix_observed_negatives`` is set; random different-label pairs of
    known nodes then fill the negatives up to the number of positives.

    Returns:
        Tuple[np.ndarray, np.ndarray]: ``(pairs (n, 2), labels (n,))``.
    """
    edges = g.undirected_edges()
    known = y.known_mask[edges[:, 0]] & y.known_mask[edges[:, 1]]
    edges = edges[known]
    if edges.shape[0] == 0:
        raise DataError("no labeled edges available between training nodes")

    same = y.labels[edges[:, 0]] == y.labels[edges[:, 1]]
    positives = edges[same]
    negatives = edges[~same] if cfg.mix_observed_negatives else np.empty((0, 2), dtype=np.int64)

    deficit = positives.shape[0] - negatives.shape[0]
    if deficit > 0:
        nodes = np.flatnonzero(y.known_mask)
        sampled = _sample_different_label_pairs(nodes, y.labels, deficit, rng)
        negatives = np.concatenate([negatives, sampled])

    n_pos, n_neg = positives.shape[0], negatives.shape[0]
    imbalance = abs(n_pos - n_neg) / (n_pos + n_neg) if n_pos + n_neg else 1.0
    if imbalance > cfg.balance_tol:
        log.warning(
            "Class balance %d positives / %d negatives exceeds tolerance %.3f",
            n_pos,
            n_neg,
            cfg.balance_tol,
        )
    if n_neg == 0:
        raise DataError("no negative pairs available: training nodes share a single label")

    pairs = np.concatenate([positives, negatives])
    labels = np.concatenate([np.ones(n_pos), np.zeros(n_neg)])
    log.debug("Training pairs: %d positive, %d negative", n_pos, n_neg)
    return pairs, labels


def train_edge_classifier(
    embeddings: np.ndarray,
    g: Graph,
    y: LabelVector,
    cfg: EdgeTrainConfig,
) -> EdgeClassifierParams:
    """
    Train the edge classifier by mini-batch gradient descent with momentum.

    Args:
        embeddings (np.ndarray): Node inputs, normally ``A_hat^2 X``.
        g (Graph): Symmetric graph whose edges provide the training pairs.
        y (LabelVector): Labels; ``known_mask`` marks the training nodes.
        cfg (EdgeTrainConfig): Architecture and optimizer settings.

    Returns:
        EdgeClassifierParams: Trained parameters, deterministic for ``cfg.seed``.

    Raises:
        DataError: No labeled edges between training nodes.
        DivergenceError: The loss became non-finite.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape[0] != g.num_nodes:
        raise DimensionError(f"{embeddings.shape[0]} embedding rows for {g.num_nodes} nodes")

    params = init_edge_params(embeddings.shape[1], cfg.dim, cfg.hidden, cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1])
    pairs, labels = build_training_pairs(g, y, cfg, rng)
    if cfg.epochs <= 0:
        return params

    Eu, Ev = embeddings[pairs[:, 0]], embeddings[pairs[:, 1]]
    n = labels.shape[0]
    tensors = [t.copy() for t in params.tensors()]
    velocity = [np.zeros_like(t) for t in tensors]

    losses = [edge_loss_and_grads(params, Eu, Ev, labels, cfg.weight_decay)[0]]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            current = params.with_tensors(tensors)
            loss, grads = edge_loss_and_grads(
                current, Eu[batch], Ev[batch], labels[batch], cfg.weight_decay
            )
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"edge classifier loss became non-finite at epoch {epoch}, "
                    f"batch starting {start} (lr={cfg.lr})"
                )
            for t, v, grad in zip(tensors, velocity, grads):
                v *= cfg.momentum
                v -= cfg.lr * grad
                t += v
        epoch_loss = edge_loss_and_grads(
            params.with_tensors(tensors), Eu, Ev, labels, cfg.weight_decay
        )[0]
        if not np.isfinite(epoch_loss):
            raise DivergenceError(f"edge classifier loss became non-finite after epoch {epoch}")
        losses.append(epoch_loss)
        if epoch % 50 == 0:
            log.debug("epoch %d loss %.5f", epoch, epoch_loss)

    trained = params.with_tensors(tensors)
    return replace(trained, train_losses=tuple(losses))


def evaluate_edge_classifier(
    params: EdgeClassifierParams,
    samples: Sequence[EdgeSample],
    embeddings: np.ndarray,
    threshold: float = 0.5,
) -> EdgeEvalReport:
    """
    Confusion counts of the classifier on labeled pairs; positive iff score > threshold.

    Raises:
        DataError: Empty sample list.
        UsageError: Threshold outside (0, 1).
    """
    if not samples:
        raise DataError("cannot evaluate the edge classifier on an empty sample list")
    if not 0.0 < threshold < 1.0:
        raise UsageError(f"threshold must lie in (0, 1), got {threshold}")
    us = np.array([s.u for s in samples], dtype=np.int64)
    vs = np.array([s.v for s in samples], dtype=np.int64)
    truth = np.array([s.label for s in samples], dtype=bool)
    predicted = predict_pairs(params, embeddings, us, vs) > threshold
    return EdgeEvalReport.from_counts(
        tp=np.count_nonzero(predicted & truth),
        fp=np.count_nonzero(predicted & ~truth),
        tn=np.count_nonzero(~predicted & ~truth),
        fn=np.count_nonzero(~predicted & truth),
    )


def split_training_nodes(
    train_nodes: Sequence[int], val_fraction: float, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Split training nodes into a fitting part and a held-out part for classifier selection."""
    nodes = np.sort(np.asarray(train_nodes, dtype=np.int64))
    if not 0.0 <= val_fraction < 1.0:
        raise UsageError(f"val_fraction must lie in [0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(nodes)
    n_val = int(round(val_fraction * nodes.shape[0]))
    if val_fraction > 0 and nodes.shape[0] > 1:
        n_val = max(n_val, 1)
    return np.sort(shuffled[n_val:]), np.sort(shuffled[:n_val])


def held_out_edge_samples(g: Graph, y: LabelVector, nodes: Sequence[int]) -> List[EdgeSample]:
    """Observed edges touching ``nodes`` whose two endpoints are both labeled."""
    nodes = np.asarray(nodes, dtype=np.int64)
    touch = np.zeros(g.num_nodes, dtype=bool)
    touch[nodes] = True
    edges = g.undirected_edges()
    keep = (touch[edges[:, 0]] | touch[edges[:, 1]]) & (
        y.known_mask[edges[:, 0]] & y.known_mask[edges[:, 1]]
    )
    return [
        EdgeSample(int(u), int(v), int(y.labels[u] == y.labels[v])) for u, v in edges[keep]
    ]


def select_best_edge_classifier(
    embeddings: np.ndarray,
    g: Graph,
    y: LabelVector,
    fit_nodes: Sequence[int],
    held_out_nodes: Sequence[int],
    cfg: EdgeTrainConfig,
    restarts: int = 1,
    threshold: float = 0.5,
) -> Tuple[EdgeClassifierParams, Optional[EdgeEvalReport]]:
    """
    Train ``restarts`` classifiers (seeds ``cfg.seed``, ``cfg.seed + 1``, ...) and keep
    the one with the best held-out edge accuracy. Ties keep the lowest seed.

    Returns:
        The chosen parameters and their held-out report (``None`` when no held-out
        edges exist, in which case only the first seed is trained).
    """
    fit_labels = y.restricted_to(fit_nodes)
    samples = held_out_edge_samples(g, y, held_out_nodes)
    if not samples:
        log.warning("No held-out edges to evaluate on; training a single classifier")
        return train_edge_classifier(embeddings, g, fit_labels, cfg), None

    best: Optional[Tuple[EdgeClassifierParams, EdgeEvalReport]] = None
    for r in range(max(1, restarts)):
        params = train_edge_classifier(embeddings, g, fit_labels, replace(cfg, seed=cfg.seed + r))
        report = evaluate_edge_classifier(params, samples, embeddings, threshold)
        log.info("seed %d held-out accuracy %.4f", cfg.seed + r, report.accuracy)
        if best is None or report.accuracy > best[1].accuracy:
            best = (params, report)
    return best


def params_summary(params: EdgeClassifierParams) -> Dict[str, object]:
    return {
        "seed": params.seed,
        "input_dim": params.input_dim,
        "dim": params.dim,
        "hidden": [w.shape[1] for w, _ in params.layers[:-1]],
    }
