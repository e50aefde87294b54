"""Bipartite user-item graphs, neighbor sampling policies and top-k ranking.

Node ids are unified: users are ``0..N-1`` and item ``i`` is node ``N + i``,
which realizes the block adjacency ``[0 R; R^T 0]``.
"""

import logging
import sys
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.special import log_expit
from tqdm import tqdm

from .errors import DataError, DimensionError, NumericError, UsageError

log = logging.getLogger("Reco")

POLICIES = ("random-walk", "intuitive", "negcn")
ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class Interactions:
    """Parallel ``(user, item, weight)`` arrays."""

    users: np.ndarray
    items: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if not (self.users.shape == self.items.shape == self.weights.shape):
            raise DimensionError("interaction arrays must have equal lengths")

    @classmethod
    def from_pairs(cls, users, items, weights=None) -> "Interactions":
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        if weights is None:
            weights = np.ones(users.shape[0], dtype=np.float64)
        return cls(users, items, np.asarray(weights, dtype=np.float64))

    def __len__(self) -> int:
        return int(self.users.shape[0])

    def subset(self, index: np.ndarray) -> "Interactions":
        return Interactions(self.users[index], self.items[index], self.weights[index])

    def keys(self, num_items: int) -> np.ndarray:
        return self.users * num_items + self.items


@dataclass(frozen=True)
class BipartiteGraph:
    """
    User-item interactions in CSR form with the transpose kept alongside.

    Attributes:
        num_users (int): N.
        num_items (int): M.
        matrix (sparse.csr_matrix): ``N x M`` interaction weights, all positive.
        transpose (sparse.csr_matrix): ``M x N`` transpose of ``matrix``.
    """

    num_users: int
    num_items: int
    matrix: sparse.csr_matrix
    transpose: sparse.csr_matrix

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def num_interactions(self) -> int:
        return int(self.matrix.nnz)

    def user_items(self, u: int) -> np.ndarray:
        return self.matrix.indices[self.matrix.indptr[u] : self.matrix.indptr[u + 1]]

    def item_users(self, i: int) -> np.ndarray:
        return self.transpose.indices[self.transpose.indptr[i] : self.transpose.indptr[i + 1]]

    def unified(self) -> sparse.csr_matrix:
        """Weighted ``(N+M) x (N+M)`` adjacency ``[0 R; R^T 0]`` with sorted indices."""
        adjacency = sparse.bmat([[None, self.matrix], [self.transpose, None]], format="csr")
        adjacency.sort_indices()
        return adjacency

    def interactions(self) -> Interactions:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return Interactions(
            coo.row[order].astype(np.int64),
            coo.col[order].astype(np.int64),
            coo.data[order].astype(np.float64),
        )


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Users' rows first, then items'."""

    num_users: int
    num_items: int
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.num_users + self.num_items:
            raise DimensionError(
                f"embedding matrix has shape {self.values.shape}, "
                f"expected ({self.num_users + self.num_items}, dim)"
            )
        if not np.isfinite(self.values).all():
            raise DataError("embedding matrix contains non-finite values")

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    @property
    def users(self) -> np.ndarray:
        return self.values[: self.num_users]

    @property
    def items(self) -> np.ndarray:
        return self.values[self.num_users :]


@dataclass(frozen=True)
class NeighborSelection:
    """
    Up to ``k`` selected 1-hop neighbors per unified node id.

    ``selected[j]`` lists unified ids in selection order (best first).
    """

    policy: str
    k: int
    selected: Tuple[np.ndarray, ...]

    def sizes(self) -> np.ndarray:
        return np.array([s.shape[0] for s in self.selected], dtype=np.int64)


@dataclass(frozen=True)
class RankingReport:
    precision_at_k: float
    recall_at_k: float
    ndcg_at_k: float
    k: int
    users_evaluated: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision_at_k,
            "recall": self.recall_at_k,
            "ndcg": self.ndcg_at_k,
            "k": self.k,
            "users_evaluated": self.users_evaluated,
        }


class AggregatedScorer:
    """
    Relevance ``z_u . z_i`` over refined embeddings.

    Callable as ``scorer(user, items) -> scores``.
    """

    def __init__(self, refined: np.ndarray, num_users: int, alpha: float, policy: str):
        self.refined = refined
        self.num_users = num_users
        self.alpha = alpha
        self.policy = policy

    def __call__(self, user: int, items: np.ndarray) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        return self.refined[self.num_users + items] @ self.refined[user]


ScoreFunction = Callable[[int, np.ndarray], np.ndarray]


def build_bipartite(users, items, weights, num_users: int, num_items: int) -> BipartiteGraph:
    """
    Build the interaction graph; duplicate (user, item) pairs have their weights summed.

    Raises:
        DataError: Ids outside range, or non-positive or non-finite weights.
    """
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    weights = (
        np.ones(users.shape[0], dtype=np.float64)
        if weights is None
        else np.asarray(weights, dtype=np.float64)
    )
    if num_users <= 0 or num_items <= 0:
        raise DataError("bipartite graph needs at least one user and one item")
    if not (users.shape == items.shape == weights.shape):
        raise DimensionError("users, items and weights must have equal lengths")
    if users.size and (users.min() < 0 or users.max() >= num_users):
        raise DataError(f"user id out of range [0, {num_users})")
    if items.size and (items.min() < 0 or items.max() >= num_items):
        raise DataError(f"item id out of range [0, {num_items})")
    if not np.isfinite(weights).all() or (weights <= 0).any():
        raise DataError("interaction weights must be finite and positive")

    matrix = sparse.coo_matrix((weights, (users, items)), shape=(num_users, num_items)).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    transpose = matrix.transpose().tocsr()
    transpose.sort_indices()
    return BipartiteGraph(num_users, num_items, matrix, transpose)


def graph_from_interactions(inter: Interactions, num_users: int, num_items: int) -> BipartiteGraph:
    return build_bipartite(inter.users, inter.items, inter.weights, num_users, num_items)


def mean_embedding(E: EmbeddingMatrix) -> np.ndarray:
    """Average over all user and item rows."""
    return E.values.mean(axis=0)


def neighbor_info_score(xu: np.ndarray, xv: np.ndarray, xbar: np.ndarray) -> float:
    """
    Neighbor information score ``log sigma(xu . xv) + log(1 - sigma(xu . xbar))``.

    Both terms go through ``log_expit`` so large dot products neither
    overflow nor round to ``log 0``.

    Raises:
        DimensionError: Vectors of different widths.
        NumericError: Non-finite inputs.
    """
    xu, xv, xbar = (np.asarray(x, dtype=np.float64) for x in (xu, xv, xbar))
    if not (xu.shape == xv.shape == xbar.shape):
        raise DimensionError(f"widths differ: {xu.shape}, {xv.shape}, {xbar.shape}")
    if not (np.isfinite(xu).all() and np.isfinite(xv).all() and np.isfinite(xbar).all()):
        raise NumericError("neighbor score inputs must be finite")
    return float(log_expit(xu @ xv) + log_expit(-(xu @ xbar)))


def _arc_scores_negcn(adjacency: sparse.csr_matrix, E: EmbeddingMatrix) -> np.ndarray:
    # score of arc (center, neighbor) is C(neighbor, center)
    centers = np.repeat(np.arange(adjacency.shape[0]), np.diff(adjacency.indptr))
    neighbors = adjacency.indices
    X = E.values
    xbar = mean_embedding(E)
    affinity = np.einsum("ij,ij->i", X[neighbors], X[centers])
    return log_expit(affinity) + log_expit(-(X[neighbors] @ xbar))


def _arc_scores_random_walk(
    adjacency: sparse.csr_matrix, walks: int, walk_length: int, seed: int
) -> np.ndarray:
    """Visit counts of each node's 1-hop neighbors over uniform restart-free walks."""
    total = adjacency.shape[0]
    indptr, indices = adjacency.indptr, adjacency.indices
    degree = np.diff(indptr)
    centers = np.repeat(np.arange(total, dtype=np.int64), degree)
    arc_keys = centers * total + indices
    counts = np.zeros(indices.shape[0], dtype=np.float64)
    starts = np.arange(total, dtype=np.int64)

    if indices.size == 0:
        return counts

    rng = np.random.default_rng(seed)
    for _ in tqdm(range(walks), desc="walks", disable=not sys.stderr.isatty(), leave=False):
        position = starts.copy()
        for _ in range(walk_length):
            d = degree[position]
            movable = d > 0
            slot = indptr[position] + np.floor(rng.random(total) * d).astype(np.int64)
            slot[~movable] = 0
            position = np.where(movable, indices[slot], position)

            keys = starts * total + position
            found = np.minimum(np.searchsorted(arc_keys, keys), arc_keys.shape[0] - 1)
            hit = arc_keys[found] == keys
            np.add.at(counts, found[hit], 1.0)

    row_totals = np.bincount(centers, weights=counts, minlength=total)
    return np.divide(counts, row_totals[centers], out=np.zeros_like(counts), where=row_totals[centers] > 0)


def select_neighbors(
    g: BipartiteGraph,
    E: EmbeddingMatrix,
    policy: str,
    k: int,
    seed: int,
    walks: int = 100,
    walk_length: int = 3,
) -> NeighborSelection:
    """
    Keep the ``k`` best-scoring 1-hop neighbors of every user and item.

    Policies:
        ``random-walk``: L1-normalized visit frequency of the neighbor over
        ``walks`` walks of ``walk_length`` uniform steps from the node.
        ``intuitive``: interaction weight.
        ``negcn``: ``C(neighbor, node)``.

    Ties go to the smaller unified id. Nodes with fewer than ``k`` neighbors
    keep all of them.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if policy not in POLICIES:
        raise UsageError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}")
    if E.num_users != g.num_users or E.num_items != g.num_items:
        raise DimensionError(
            f"embeddings cover {E.num_users} users/{E.num_items} items, "
            f"graph has {g.num_users}/{g.num_items}"
        )

    adjacency = g.unified()
    if policy == "intuitive":
        scores = adjacency.data.astype(np.float64)
    elif policy == "negcn":
        scores = _arc_scores_negcn(adjacency, E)
    else:
        scores = _arc_scores_random_walk(adjacency, walks, walk_length, seed)

    total = adjacency.shape[0]
    centers = np.repeat(np.arange(total, dtype=np.int64), np.diff(adjacency.indptr))
    order = np.lexsort((adjacency.indices, -scores, centers))
    rank = np.arange(order.shape[0]) - adjacency.indptr[centers[order]]
    chosen = order[rank < k]
    kept = np.minimum(np.diff(adjacency.indptr), k)
    selected = tuple(np.split(adjacency.indices[chosen].astype(np.int64), np.cumsum(kept)[:-1]))

    log.debug("%s selection: %d neighbors kept over %d nodes", policy, int(kept.sum()), total)
    return NeighborSelection(policy, k, selected)


def aggregate_and_score(E: EmbeddingMatrix, sel: NeighborSelection, alpha: float) -> AggregatedScorer:
    """
    Mix each embedding with the mean of its selected neighbors.

    ``z_j = alpha * x_j + (1 - alpha) * mean(x over sel.selected[j])``;
    nodes with an empty selection keep ``z_j = x_j``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise UsageError(f"alpha must lie in [0, 1], got {alpha}")
    if len(sel.selected) != E.values.shape[0]:
        raise DimensionError("selection and embeddings cover different node sets")

    sizes = sel.sizes()
    rows = np.repeat(np.arange(sizes.shape[0]), sizes)
    cols = np.concatenate(sel.selected) if sizes.sum() else np.empty(0, dtype=np.int64)
    data = np.repeat(1.0 / np.maximum(sizes, 1), sizes)
    averaging = sparse.csr_matrix((data, (rows, cols)), shape=(sizes.shape[0],) * 2)

    X = E.values
    neighbor_mean = averaging @ X
    refined = alpha * X + (1.0 - alpha) * neighbor_mean
    refined[sizes == 0] = X[sizes == 0]
    return AggregatedScorer(refined, E.num_users, alpha, sel.policy)


def _group_by_user(inter: Interactions) -> Dict[int, np.ndarray]:
    order = np.lexsort((inter.items, inter.users))
    users, items = inter.users[order], inter.items[order]
    bounds = np.flatnonzero(np.diff(users)) + 1
    return {
        int(chunk_users[0]): np.unique(chunk_items)
        for chunk_users, chunk_items in zip(np.split(users, bounds), np.split(items, bounds))
        if chunk_users.size
    }


def rank_and_evaluate(
    score: ScoreFunction, g_train: BipartiteGraph, test: Interactions, k: int
) -> RankingReport:
    """
    Precision, recall and NDCG at ``k`` averaged over users with test items.

    Every item the user did not interact with in ``g_train`` is a candidate;
    candidates are ranked by descending score with ties going to the smaller
    item id. NDCG uses binary gains and the ``1 / log2(rank + 1)`` discount.

    Raises:
        UsageError: ``k < 1``.
        DataError: Test interactions overlap training ones, ids out of range,
            or no user has test items.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if len(test) and (
        test.users.min() < 0
        or test.users.max() >= g_train.num_users
        or test.items.min() < 0
        or test.items.max() >= g_train.num_items
    ):
        raise DataError("test interactions reference users or items outside the training graph")
    train_keys = g_train.interactions().keys(g_train.num_items)
    if np.intersect1d(train_keys, test.keys(g_train.num_items)).size:
        raise DataError("test interactions overlap training interactions")

    by_user = _group_by_user(test)
    if not by_user:
        raise DataError("no user has test interactions")

    all_items = np.arange(g_train.num_items, dtype=np.int64)
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    precision = recall = ndcg = 0.0

    for u in tqdm(sorted(by_user), desc="ranking", disable=not sys.stderr.isatty(), leave=False):
        relevant = by_user[u]
        candidates = np.setdiff1d(all_items, g_train.user_items(u), assume_unique=True)
        scores = np.asarray(score(u, candidates), dtype=np.float64)
        top = candidates[np.lexsort((candidates, -scores))[:k]]
        hit = np.isin(top, relevant)
        hits = int(hit.sum())
        precision += hits / k
        recall += hits / relevant.shape[0]
        ideal = discounts[: min(k, relevant.shape[0])].sum()
        ndcg += float(discounts[: top.shape[0]][hit].sum()) / ideal

    n = len(by_user)
    return RankingReport(precision / n, recall / n, ndcg / n, k, n)


def split_interactions(
    inter: Interactions,
    num_items: int,
    fractions: Sequence[float] = (0.65, 0.15, 0.20),
    seed: int = 0,
) -> List[Interactions]:
    """
    Split every user's interactions at random into consecutive slices.

    Duplicate pairs are merged first (weights summed) so slices never share
    a pair. Each user with at least one interaction keeps one in the first slice.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    if fractions.size < 2 or (fractions <= 0).any() or abs(fractions.sum() - 1.0) > 1e-9:
        raise UsageError(f"split fractions must be positive and sum to 1, got {fractions.tolist()}")
    if len(inter) == 0:
        raise DataError("cannot split an empty interaction list")

    num_users = int(inter.users.max()) + 1
    merged = graph_from_interactions(inter, num_users, num_items).interactions()
    rng = np.random.default_rng(seed)
    cumulative = np.cumsum(fractions)
    slices: List[List[np.ndarray]] = [[] for _ in fractions]

    bounds = np.flatnonzero(np.diff(merged.users)) + 1
    for index in np.split(np.arange(len(merged)), bounds):
        n = index.shape[0]
        shuffled = index[rng.permutation(n)]
        cuts = np.floor(cumulative * n + 0.5).astype(np.int64)
        cuts[0] = max(cuts[0], 1)
        cuts = np.maximum.accumulate(np.minimum(cuts, n))
        cuts[-1] = n
        start = 0
        for s, stop in enumerate(cuts):
            slices[s].append(shuffled[start:stop])
            start = stop

    return [merged.subset(np.sort(np.concatenate(parts))) for parts in slices]


def tune_alpha(
    E: EmbeddingMatrix,
    sel: NeighborSelection,
    g_train: BipartiteGraph,
    tune: Interactions,
    k: int,
    grid: Sequence[float] = ALPHA_GRID,
) -> Tuple[float, Dict[float, float]]:
    """Pick the mixing weight with the best NDCG@k on the tuning slice (ties: larger alpha)."""
    if not grid:
        raise UsageError("alpha grid is empty")
    results: Dict[float, float] = {}
    best_alpha: Optional[float] = None
    for alpha in sorted(float(a) for a in grid):
        report = rank_and_evaluate(aggregate_and_score(E, sel, alpha), g_train, tune, k)
        results[alpha] = report.ndcg_at_k
        if best_alpha is None or report.ndcg_at_k >= results[best_alpha]:
            best_alpha = alpha
    log.info("alpha %.2f selected (NDCG@%d %.4f)", best_alpha, k, results[best_alpha])
    return best_alpha, results
