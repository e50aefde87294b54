"""Graph rewiring with a pairwise scorer, plus the expectation calculators.

Refinement removes 1-hop edges the scorer rejects (filtering) and connects
accepted 2-hop candidates (adding). The closed forms give the expected
neighbor readout under the Gaussian-mixture neighbor model before and after
each step; the noisy oracle provides scorers with exact error rates.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Protocol, Tuple

import numpy as np
from scipy.stats import norm, sem

from .edge_model import EdgeClassifierParams, predict_pairs
from .errors import DegenerateExpectationError, GraphError, UsageError
from .graph import Graph, LabelVector, build_graph, two_hop_candidate_matrix

log = logging.getLogger("Refine")

MC_BATCHES = 100


class PairScorer(Protocol):
    """Symmetric scorer of node pairs, returning one score in [0, 1] per pair."""

    def __call__(
        self, embeddings: Optional[np.ndarray], us: np.ndarray, vs: np.ndarray
    ) -> np.ndarray: ...


@dataclass(frozen=True)
class RefineConfig:
    do_filter: bool = True
    do_add: bool = True
    n_max: int = 10
    threshold: float = 0.5
    candidate_order: str = "descending-score"

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise UsageError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.do_add and self.n_max < 1:
            raise UsageError(f"n_max must be >= 1 when adding, got {self.n_max}")
        if self.candidate_order != "descending-score":
            raise UsageError(f"unsupported candidate order {self.candidate_order!r}")


@dataclass(frozen=True)
class MixtureModel:
    """Gaussian-mixture readout: positives ~ N(mu_plus, sigma^2), negatives ~ N(mu_minus, sigma^2)."""

    mu_plus: float
    mu_minus: float
    sigma: float
    tau: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise UsageError(f"sigma must be > 0, got {self.sigma}")
        if not self.mu_minus < self.tau < self.mu_plus:
            raise UsageError(
                f"mixture needs mu_minus < tau < mu_plus, got {self.mu_minus}, {self.tau}, {self.mu_plus}"
            )


class EdgeClassifierScorer:
    """Scores pairs with a trained edge classifier on the given embeddings."""

    def __init__(self, params: EdgeClassifierParams, source: str = ""):
        self.params = params
        self.source = source

    def __call__(self, embeddings, us, vs):
        return predict_pairs(self.params, embeddings, us, vs)

    def describe(self) -> dict:
        return {"kind": "edge-classifier", "seed": self.params.seed, "source": self.source}


class NoisyOracle:
    """
    Synthetic classifier with exact error rates.

    Same-label pairs score 1.0 with probability ``p_true`` and different-label
    pairs with probability ``q_true``, else 0.0. Each unordered pair hashes to
    a fixed uniform draw per seed, so repeated queries agree.
    """

    def __init__(self, labels: LabelVector, p_true: float, q_true: float, seed: int):
        if not labels.all_known:
            raise UsageError("the noisy oracle needs fully known labels")
        for name, value in (("p", p_true), ("q", q_true)):
            if not 0.0 <= value <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1], got {value}")
        if seed < 0:
            raise UsageError(f"oracle seed must be >= 0, got {seed}")
        self.labels = labels
        self.p_true = float(p_true)
        self.q_true = float(q_true)
        self.seed = int(seed)

    def uniforms(self, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """The per-pair uniform draw in [0, 1)."""
        us = np.asarray(us, dtype=np.uint64)
        vs = np.asarray(vs, dtype=np.uint64)
        lo, hi = np.minimum(us, vs), np.maximum(us, vs)
        n = np.uint64(self.labels.num_nodes)
        x = lo * n + hi
        x = _splitmix64(x ^ _splitmix64(np.full_like(x, np.uint64(self.seed))))
        return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

    def __call__(self, embeddings, us, vs):
        labels = self.labels.labels
        same = labels[np.asarray(us, dtype=np.int64)] == labels[np.asarray(vs, dtype=np.int64)]
        rate = np.where(same, self.p_true, self.q_true)
        return (self.uniforms(us, vs) < rate).astype(np.float64)

    def describe(self) -> dict:
        return {"kind": "noisy-oracle", "p": self.p_true, "q": self.q_true, "seed": self.seed}


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def make_noisy_oracle(labels: LabelVector, p: float, q: float, seed: int) -> NoisyOracle:
    return NoisyOracle(labels, p, q, seed)


def oracle_for_precision(
    g: Graph, labels: LabelVector, p_pre: float, seed: int, n_max: Optional[int] = None
) -> NoisyOracle:
    """
    Noisy oracle whose precision over the 2-hop candidate pairs of ``g`` is ``p_pre``.

    With positive base rate ``pi`` among candidates, precision is
    ``p*pi / (p*pi + q*(1 - pi))``; one of ``p``, ``q`` is pinned to 1 and the
    other solved for. With ``n_max`` the base rate is taken over the pairs
    adding can still connect, those whose endpoints both have fewer than
    ``n_max`` non-self neighbors.
    """
    if not 0.0 < p_pre < 1.0:
        raise UsageError(f"p_pre must lie in (0, 1), got {p_pre}")
    reach = two_hop_candidate_matrix(g).tocoo()
    rows, cols = reach.row, reach.col
    if n_max is not None:
        open_slot = g.non_self_degrees() < n_max
        keep = open_slot[rows] & open_slot[cols]
        rows, cols = rows[keep], cols[keep]
    if rows.size == 0:
        raise GraphError("graph has no 2-hop candidates")
    pi = float(np.mean(labels.labels[rows] == labels.labels[cols]))
    if pi in (0.0, 1.0):
        log.warning("2-hop candidates are all %s; precision is fixed at %.1f",
                    "positive" if pi else "negative", pi)
        return NoisyOracle(labels, 1.0, 1.0, seed)
    if p_pre >= pi:
        p, q = 1.0, pi * (1.0 - p_pre) / (p_pre * (1.0 - pi))
    else:
        p, q = p_pre * (1.0 - pi) / (pi * (1.0 - p_pre)), 1.0
    log.debug("candidate base rate %.4f -> oracle p=%.4f q=%.4f", pi, p, q)
    return NoisyOracle(labels, p, q, seed)


def _describe(scorer) -> dict:
    describe = getattr(scorer, "describe", None)
    return describe() if describe else {"kind": type(scorer).__name__}


def filter_graph(
    g: Graph, scorer: PairScorer, embeddings: Optional[np.ndarray], cfg: RefineConfig
) -> Graph:
    """
    Remove every non-self edge whose score is at most ``cfg.threshold``.

    Each undirected edge is scored once; self-loops are kept.
    """
    if not g.symmetric:
        raise GraphError("filtering requires a symmetric graph")
    edges = g.undirected_edges()
    scores = scorer(embeddings, edges[:, 0], edges[:, 1])
    kept = edges[scores > cfg.threshold]
    loops = g.self_loop_nodes()
    pairs = np.concatenate([kept, np.column_stack([loops, loops])])
    log.debug("Filtering kept %d of %d edges", kept.shape[0], edges.shape[0])
    return build_graph(pairs, g.num_nodes, symmetrize=True)


def add_neighbors(
    g: Graph, scorer: PairScorer, embeddings: Optional[np.ndarray], cfg: RefineConfig
) -> Graph:
    """
    Connect accepted 2-hop candidates until nodes reach ``cfg.n_max`` non-self neighbors.

    All candidate pairs of under-budget nodes are scored in one batch. Nodes are
    then served in ascending id order: a node takes its accepted candidates by
    descending score (ties by ascending id) while both endpoints are below
    ``n_max`` and the pair is not yet connected.
    """
    if not g.symmetric:
        raise GraphError("adding requires a symmetric graph")
    degree = g.non_self_degrees().astype(np.int64)
    reach = two_hop_candidate_matrix(g)

    eligible = np.flatnonzero(degree < cfg.n_max)
    sub = reach[eligible]
    us = np.repeat(eligible, np.diff(sub.indptr))
    vs = sub.indices.astype(np.int64)
    scores = scorer(embeddings, us, vs) if us.size else np.empty(0)

    accepted = scores > cfg.threshold
    us, vs, scores = us[accepted], vs[accepted], scores[accepted]
    order = np.lexsort((vs, -scores, us))
    us, vs = us[order], vs[order]

    added = set()
    new_edges = []
    bounds = np.searchsorted(us, eligible, side="left"), np.searchsorted(us, eligible, side="right")
    for v, lo, hi in zip(eligible, *bounds):
        for w in vs[lo:hi]:
            if degree[v] >= cfg.n_max:
                break
            key = (min(v, w), max(v, w))
            if degree[w] >= cfg.n_max or key in added:
                continue
            added.add(key)
            new_edges.append(key)
            degree[v] += 1
            degree[w] += 1

    log.debug("Adding connected %d new edges", len(new_edges))
    if not new_edges:
        return g
    pairs = np.concatenate([g.edge_list(), np.asarray(new_edges, dtype=np.int64)])
    return build_graph(pairs, g.num_nodes, symmetrize=True)


def enhance(
    g: Graph,
    scorer: PairScorer,
    embeddings: Optional[np.ndarray],
    cfg: RefineConfig,
    add_scorer: Optional[PairScorer] = None,
) -> Graph:
    """
    Filter then add; the adding step sees post-filter degrees.

    Args:
        add_scorer (Optional[PairScorer]): Scorer for the adding step when it should
            differ from the filtering scorer.
    """
    refined = g
    if cfg.do_filter:
        refined = filter_graph(refined, scorer, embeddings, cfg)
    if cfg.do_add:
        refined = add_neighbors(refined, add_scorer or scorer, embeddings, cfg)
    return refined


def refine_provenance(scorer: PairScorer, cfg: RefineConfig, add_scorer=None) -> dict:
    out = {
        "config": {
            "do_filter": cfg.do_filter,
            "do_add": cfg.do_add,
            "n_max": cfg.n_max,
            "threshold": cfg.threshold,
            "candidate_order": cfg.candidate_order,
        },
        "scorer": _describe(scorer),
    }
    if add_scorer is not None:
        out["add_scorer"] = _describe(add_scorer)
    return out


def expected_origin(r: float, m: MixtureModel) -> float:
    """Expected neighbor readout ``r*mu_plus + (1 - r)*mu_minus`` at positive ratio ``r``."""
    if not 0.0 <= r <= 1.0:
        raise UsageError(f"positive ratio must lie in [0, 1], got {r}")
    return r * m.mu_plus + (1.0 - r) * m.mu_minus


def expected_filter(n_pos: int, n_neg: int, p: float, q: float, m: MixtureModel) -> float:
    """Expected readout over the neighbors that survive filtering."""
    kept = p * n_pos + q * n_neg
    if kept <= 0:
        raise DegenerateExpectationError("filtering removes every neighbor (p*n+ + q*n- = 0)")
    return (p * n_pos * m.mu_plus + q * n_neg * m.mu_minus) / kept


def expected_adder(n_pos: int, n_neg: int, n_add: int, p_pre: float, m: MixtureModel) -> float:
    """Expected readout after adding ``n_add`` neighbors of which a ``p_pre`` share is positive."""
    total = n_pos + n_neg + n_add
    if total <= 0:
        raise DegenerateExpectationError("no neighbors before or after adding")
    positive = n_pos + p_pre * n_add
    negative = n_neg + (1.0 - p_pre) * n_add
    return (positive * m.mu_plus + negative * m.mu_minus) / total


def correct_class_probability(r: float, n: int, m: MixtureModel) -> float:
    """
    Probability that the mean readout of ``n`` iid neighbors exceeds ``tau``.

    The mean is Normal(E_origin(r), sigma^2 / n).
    """
    if n < 1:
        raise UsageError(f"need at least one neighbor, got {n}")
    mean = expected_origin(r, m)
    return float(norm.sf(m.tau, loc=mean, scale=m.sigma / np.sqrt(n)))


def _pooled_mean(sums: np.ndarray, counts: np.ndarray, batches: int) -> Tuple[float, float]:
    total = float(counts.sum())
    if total == 0:
        raise DegenerateExpectationError("no neighbors survived in any trial")
    mean = float(sums.sum()) / total
    batch_means = [
        s.sum() / c.sum()
        for s, c in zip(np.array_split(sums, batches), np.array_split(counts, batches))
        if c.sum() > 0
    ]
    stderr = float(sem(batch_means))
    return mean, stderr


def monte_carlo_filter(
    n_pos: int, n_neg: int, p: float, q: float, m: MixtureModel, trials: int, seed: int
) -> Tuple[float, float]:
    """Simulated mean readout of the filtered neighbor set and its batch-means standard error."""
    rng = np.random.default_rng(seed)
    pos = rng.normal(m.mu_plus, m.sigma, size=(trials, n_pos))
    neg = rng.normal(m.mu_minus, m.sigma, size=(trials, n_neg))
    keep_pos = rng.random((trials, n_pos)) < p
    keep_neg = rng.random((trials, n_neg)) < q
    sums = (pos * keep_pos).sum(axis=1) + (neg * keep_neg).sum(axis=1)
    counts = keep_pos.sum(axis=1) + keep_neg.sum(axis=1)
    return _pooled_mean(sums, counts, MC_BATCHES)


def monte_carlo_adder(
    n_pos: int, n_neg: int, n_add: int, p_pre: float, m: MixtureModel, trials: int, seed: int
) -> Tuple[float, float]:
    """Simulated mean readout after adding and its batch-means standard error."""
    rng = np.random.default_rng(seed)
    pos = rng.normal(m.mu_plus, m.sigma, size=(trials, n_pos)).sum(axis=1)
    neg = rng.normal(m.mu_minus, m.sigma, size=(trials, n_neg)).sum(axis=1)
    added_positive = rng.random((trials, n_add)) < p_pre
    added = np.where(
        added_positive,
        rng.normal(m.mu_plus, m.sigma, size=(trials, n_add)),
        rng.normal(m.mu_minus, m.sigma, size=(trials, n_add)),
    ).sum(axis=1)
    counts = np.full(trials, n_pos + n_neg + n_add, dtype=np.float64)
    return _pooled_mean(pos + neg + added, counts, MC_BATCHES)
