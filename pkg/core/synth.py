"""Synthetic datasets: labeled graphs with a controlled positive ratio,
different-label degradation, and bipartite interactions with planted groups.
"""

import logging
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError, GraphError, UsageError
from .graph import Graph, LabelVector, build_graph
from .node_clf import Dataset, Split
from .reco import (
    BipartiteGraph,
    EmbeddingMatrix,
    Interactions,
    graph_from_interactions,
    split_interactions,
)

log = logging.getLogger("Synth")

MAX_REWIRE_ATTEMPTS = 100
TASTE_DIM = 8
TASTE_STRENGTH = 3.0


@dataclass(frozen=True)
class SynthSpec:
    """
    Generator settings for a labeled graph.

    Attributes:
        class_separation (float): Distance between class feature means, in units of
            the (unit) feature standard deviation.
    """

    num_nodes: int = 2000
    num_classes: int = 4
    target_ratio: float = 0.7
    mean_degree: float = 4.0
    feature_dim: int = 32
    class_separation: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_nodes < 2:
            raise UsageError(f"num_nodes must be >= 2, got {self.num_nodes}")
        if not 1 <= self.num_classes <= self.num_nodes // 2:
            raise UsageError(
                f"num_classes must lie in [1, num_nodes/2], got {self.num_classes}"
            )
        if not 0.0 < self.target_ratio <= 1.0:
            raise UsageError(f"target_ratio must lie in (0, 1], got {self.target_ratio}")
        if self.mean_degree < 1:
            raise UsageError(f"mean_degree must be >= 1, got {self.mean_degree}")
        if self.feature_dim < self.num_classes:
            raise UsageError("feature_dim must be at least num_classes")
        if self.class_separation < 0:
            raise UsageError("class_separation must be >= 0")
        if self.num_classes == 1 and self.target_ratio < 1.0:
            raise DataError("a single class cannot have negative neighbors (target_ratio < 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class BipartiteData(NamedTuple):
    graph: BipartiteGraph
    embeddings: EmbeddingMatrix
    test: Interactions
    user_groups: np.ndarray
    item_groups: np.ndarray


def _balanced_labels(n: int, groups: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n, dtype=np.int64) % groups)


def generate_labeled_graph(spec: SynthSpec) -> Dataset:
    """
    Sample a graph whose edges join same-class nodes with probability ``target_ratio``.

    Every node starts ``Poisson(mean_degree / 2)`` edges, so after
    symmetrization the mean degree is close to ``mean_degree``. Features are
    unit Gaussians around one-hot class means scaled so that any two means
    are ``class_separation`` apart. Nodes are split 60/20/20 at random.
    """
    label_rng, edge_rng, feature_rng, split_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(4)
    )
    n, c = spec.num_nodes, spec.num_classes
    labels = _balanced_labels(n, c, label_rng)

    # nodes grouped by class; class k occupies by_class[start[k] : start[k] + size[k]]
    by_class = np.argsort(labels, kind="stable")
    size = np.bincount(labels, minlength=c)
    start = np.concatenate([[0], np.cumsum(size)[:-1]])
    position = np.empty(n, dtype=np.int64)
    position[by_class] = np.arange(n)

    sources = np.repeat(np.arange(n, dtype=np.int64), edge_rng.poisson(spec.mean_degree / 2.0, size=n))
    own = labels[sources]
    same = edge_rng.random(sources.shape[0]) < spec.target_ratio

    same_index = start[own] + np.floor(edge_rng.random(sources.shape[0]) * (size[own] - 1)).astype(np.int64)
    same_index += same_index >= position[sources]
    other = np.floor(edge_rng.random(sources.shape[0]) * (n - size[own])).astype(np.int64)
    other_index = np.minimum(np.where(other < start[own], other, other + size[own]), n - 1)
    targets = by_class[np.where(same, same_index, other_index)]

    graph = build_graph(np.column_stack([sources, targets]), n, symmetrize=True)

    means = np.zeros((c, spec.feature_dim))
    means[np.arange(c), np.arange(c)] = spec.class_separation / np.sqrt(2.0)
    features = means[labels] + feature_rng.standard_normal((n, spec.feature_dim))

    order = split_rng.permutation(n)
    cut_train, cut_val = int(0.6 * n), int(0.8 * n)
    split = Split.from_lists(order[:cut_train], order[cut_train:cut_val], order[cut_val:])

    log.info(
        "generated %d nodes, %d edges (target ratio %.2f)",
        n,
        graph.undirected_edges().shape[0],
        spec.target_ratio,
    )
    return Dataset(graph, features, LabelVector.fully_known(labels, c), split)


def degrade_graph(g: Graph, y: LabelVector, per_node: int, seed: int) -> Graph:
    """
    Give every node exactly ``per_node`` new neighbors of a different label.

    Endpoints are paired at random (each node contributes ``per_node``
    endpoints). When ``num_nodes * per_node`` is odd one random node
    contributes an extra endpoint and ends with ``per_node + 1`` new
    neighbors. Pairs that join same-label nodes, repeat an edge or already
    exist in ``g`` are rewired against a random valid pair, at most
    ``MAX_REWIRE_ATTEMPTS`` tries each.

    Raises:
        UsageError: ``per_node`` is negative.
        GraphError: Asymmetric graph or unlabeled nodes.
        DataError: No valid pairing exists (one label covers more than half of
            the nodes, or rewiring ran out of attempts).
    """
    if per_node < 0:
        raise UsageError(f"per_node must be >= 0, got {per_node}")
    if per_node == 0:
        return g
    if not g.symmetric:
        raise GraphError("degradation requires a symmetric graph")
    if not y.all_known or y.num_nodes != g.num_nodes:
        raise GraphError("degradation needs a label for every node")

    n = g.num_nodes
    counts = np.bincount(y.labels, minlength=y.num_classes)
    if np.count_nonzero(counts) < 2:
        raise DataError("degradation needs at least two classes")
    if counts.max() * 2 > n:
        raise DataError(
            f"class {int(counts.argmax())} covers {int(counts.max())} of {n} nodes; "
            "every node cannot get a different-label neighbor for each new edge"
        )

    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n, dtype=np.int64), per_node)
    if stubs.shape[0] % 2:
        extra = int(rng.integers(n))
        log.debug("odd endpoint total; node %d takes one extra new edge", extra)
        stubs = np.append(stubs, extra)
    stubs = rng.permutation(stubs)
    pairs = stubs.reshape(-1, 2)
    labels = y.labels

    def key(a, b):
        return int(min(a, b)) * n + int(max(a, b))

    existing = set((g.undirected_edges() @ np.array([n, 1])).tolist())
    used = set()
    bad = []
    for i, (a, b) in enumerate(pairs):
        k = key(a, b)
        if a != b and labels[a] != labels[b] and k not in existing and k not in used:
            used.add(k)
        else:
            bad.append(i)

    def valid(a, b):
        return a != b and labels[a] != labels[b] and key(a, b) not in existing and key(a, b) not in used

    pending = set(bad)
    for i in bad:
        a, b = pairs[i]
        for _ in range(MAX_REWIRE_ATTEMPTS):
            j = int(rng.integers(pairs.shape[0]))
            if j in pending:
                continue
            c, d = pairs[j]
            if rng.random() < 0.5:
                c, d = d, c
            used.discard(key(c, d))
            if valid(a, c) and valid(b, d) and key(a, c) != key(b, d):
                pairs[i], pairs[j] = (a, c), (b, d)
                used.update((key(a, c), key(b, d)))
                pending.discard(i)
                break
            used.add(key(c, d))
        else:
            raise DataError(
                f"could not place a different-label edge for node {int(a)} "
                f"after {MAX_REWIRE_ATTEMPTS} attempts"
            )

    log.info("added %d different-label edges (%d per node)", pairs.shape[0], per_node)
    return build_graph(np.concatenate([g.edge_list(), pairs]), n, symmetrize=True)


def generate_bipartite(
    num_users: int,
    num_items: int,
    groups: int,
    noise: float,
    seed: int,
    embed_noise: float = 0.2,
    dim: int = 64,
    mean_interactions: float = 15.0,
) -> BipartiteData:
    """
    Sample user-item interactions with planted group preferences and tastes.

    Users and items fall into ``groups`` latent groups and carry a unit-scale
    taste vector of up to ``TASTE_DIM`` coordinates. A user interacts with
    ``1 + Poisson(mean_interactions - 1)`` distinct items; an item is picked
    with weight ``1 - noise`` in-group or ``noise`` cross-group, times
    ``exp(TASTE_STRENGTH * <user taste, item taste>)``. In-group interactions
    carry weight ``1 + Poisson(2)``, cross-group ones ``1 + Poisson(0.5)``.
    Embeddings hold the group one-hot in the first ``groups`` columns and the
    taste in the next ones, plus Gaussian noise of standard deviation
    ``embed_noise`` everywhere. Each user's interactions are split 80/20 into
    train and test.
    """
    if groups < 1 or groups > min(num_users, num_items):
        raise UsageError(f"groups must lie in [1, min(users, items)], got {groups}")
    if dim < groups:
        raise UsageError("embedding dim must be at least the number of groups")
    if not 0.0 <= noise <= 1.0:
        raise UsageError(f"noise must lie in [0, 1], got {noise}")
    if mean_interactions < 1:
        raise UsageError("mean_interactions must be >= 1")

    *streams, split_seed = np.random.SeedSequence(seed).spawn(6)
    group_rng, taste_rng, pick_rng, weight_rng, embed_rng = (np.random.default_rng(s) for s in streams)
    user_groups = _balanced_labels(num_users, groups, group_rng)
    item_groups = _balanced_labels(num_items, groups, group_rng)

    taste_dim = min(TASTE_DIM, dim - groups)
    scale = 1.0 / np.sqrt(max(taste_dim, 1))
    user_taste = taste_rng.normal(0.0, scale, size=(num_users, taste_dim))
    item_taste = taste_rng.normal(0.0, scale, size=(num_items, taste_dim))

    users, items = [], []
    for u in range(num_users):
        in_group = item_groups == user_groups[u]
        mass = np.where(in_group, 1.0 - noise, noise) * np.exp(TASTE_STRENGTH * (item_taste @ user_taste[u]))
        if mass.sum() == 0:
            mass = np.ones(num_items)
        available = int(np.count_nonzero(mass))
        count = min(1 + int(pick_rng.poisson(mean_interactions - 1)), available)
        chosen = np.sort(pick_rng.choice(num_items, size=count, replace=False, p=mass / mass.sum()))
        users.append(np.full(count, u, dtype=np.int64))
        items.append(chosen)
    users, items = np.concatenate(users), np.concatenate(items)

    planted = user_groups[users] == item_groups[items]
    weights = 1.0 + np.where(
        planted,
        weight_rng.poisson(2.0, size=users.shape[0]),
        weight_rng.poisson(0.5, size=users.shape[0]),
    )
    inter = Interactions(users, items, weights.astype(np.float64))

    def embed(group_ids, taste):
        values = embed_rng.normal(0.0, embed_noise, size=(group_ids.shape[0], dim))
        values[np.arange(group_ids.shape[0]), group_ids] += 1.0
        values[:, groups : groups + taste_dim] += taste
        return values

    embeddings = EmbeddingMatrix(
        num_users, num_items, np.vstack([embed(user_groups, user_taste), embed(item_groups, item_taste)])
    )
    train, test = split_interactions(
        inter, num_items, fractions=(0.8, 0.2), seed=int(split_seed.generate_state(1)[0])
    )
    graph = graph_from_interactions(train, num_users, num_items)

    log.info(
        "generated %d users, %d items, %d train / %d test interactions",
        num_users,
        num_items,
        len(train),
        len(test),
    )
    return BipartiteData(graph, embeddings, test, user_groups, item_groups)
