"""Sparse graph representation, neighbor queries and positive-ratio statistics.

Graphs are stored in canonical CSR form: column indices strictly increasing
within each row, no duplicate arcs. All refinement works on symmetric graphs.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .errors import GraphError

log = logging.getLogger("Graph")


@dataclass(frozen=True)
class Graph:
    """
    Canonical CSR adjacency over node ids ``0..num_nodes-1``.

    Attributes:
        num_nodes (int): Number of nodes.
        row_offsets (np.ndarray): Row pointer array of length ``num_nodes + 1``.
        col_indices (np.ndarray): Neighbor ids, sorted within each row.
        symmetric (bool): Every arc (u, v) has its reverse (v, u).
        has_self_loops (bool): Every node carries the arc (v, v).
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    symmetric: bool
    has_self_loops: bool

    @property
    def num_arcs(self) -> int:
        return int(self.col_indices.shape[0])

    def neighbors(self, v: int) -> np.ndarray:
        """Sorted neighbor ids of ``v`` (the self-loop included when present)."""
        self._check_node(v)
        return self.col_indices[self.row_offsets[v] : self.row_offsets[v + 1]]

    def degrees(self) -> np.ndarray:
        """Row lengths, self-loops included."""
        return np.diff(self.row_offsets)

    def non_self_degrees(self) -> np.ndarray:
        """Row lengths with self-loops excluded."""
        rows, cols = self.arcs()
        return np.bincount(rows[rows != cols], minlength=self.num_nodes)

    def arcs(self) -> Tuple[np.ndarray, np.ndarray]:
        """All stored arcs as ``(rows, cols)`` in CSR order."""
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees())
        return rows, self.col_indices

    def edge_list(self) -> np.ndarray:
        """All stored arcs as an ``(E, 2)`` array in CSR order."""
        rows, cols = self.arcs()
        return np.column_stack([rows, cols])

    def undirected_edges(self) -> np.ndarray:
        """Non-self edges with ``u < v``, one row per undirected edge."""
        rows, cols = self.arcs()
        keep = rows < cols
        return np.column_stack([rows[keep], cols[keep]])

    def self_loop_nodes(self) -> np.ndarray:
        rows, cols = self.arcs()
        return rows[rows == cols]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < row.shape[0] and row[i] == v)

    def to_scipy(self) -> sparse.csr_matrix:
        """Unweighted adjacency as a scipy CSR matrix sharing the index arrays."""
        data = np.ones(self.num_arcs, dtype=np.float64)
        matrix = sparse.csr_matrix(
            (data, self.col_indices, self.row_offsets),
            shape=(self.num_nodes, self.num_nodes),
        )
        matrix.has_sorted_indices = True
        return matrix

    def _check_node(self, v: int) -> None:
        if not 0 <= v < self.num_nodes:
            raise GraphError(f"node id {v} out of range [0, {self.num_nodes})")


@dataclass(frozen=True)
class LabelVector:
    """
    Class labels with a visibility mask.

    Unknown entries hold ``-1`` and are ``False`` in ``known_mask``.
    """

    labels: np.ndarray
    num_classes: int
    known_mask: np.ndarray

    def __post_init__(self):
        if self.known_mask.shape != self.labels.shape:
            raise GraphError("known_mask length must equal the number of nodes")
        known = self.labels[self.known_mask]
        if known.size and (known.min() < 0 or known.max() >= self.num_classes):
            raise GraphError(f"labels must lie in [0, {self.num_classes})")

    @classmethod
    def fully_known(cls, labels: Sequence[int], num_classes: Optional[int] = None) -> "LabelVector":
        labels = np.asarray(labels, dtype=np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 0
        return cls(labels, num_classes, np.ones(labels.shape[0], dtype=bool))

    @property
    def num_nodes(self) -> int:
        return int(self.labels.shape[0])

    @property
    def all_known(self) -> bool:
        return bool(self.known_mask.all())

    def restricted_to(self, nodes: Iterable[int]) -> "LabelVector":
        """Copy whose visible labels are exactly ``nodes`` (the others become unknown)."""
        mask = np.zeros(self.num_nodes, dtype=bool)
        mask[np.asarray(list(nodes), dtype=np.int64)] = True
        mask &= self.known_mask
        labels = np.where(mask, self.labels, -1)
        return LabelVector(labels, self.num_classes, mask)


@dataclass(frozen=True)
class RatioStats:
    """Per-node and global positive/negative neighbor counts."""

    per_node_positive: np.ndarray
    per_node_negative: np.ndarray
    per_node_ratio: np.ndarray
    global_positive: int
    global_negative: int
    global_ratio: float

    def summary(self) -> dict:
        return {
            "global_positive": self.global_positive,
            "global_negative": self.global_negative,
            "global_ratio": self.global_ratio,
        }


def build_graph(
    edges,
    num_nodes: int,
    symmetrize: bool = False,
    add_self_loops: bool = False,
) -> Graph:
    """
    Build a canonical CSR graph from an edge list.

    Duplicate pairs are merged. The ``symmetric``/``has_self_loops`` flags are
    set when requested or when the input already satisfies them.

    Args:
        edges: Iterable of ``(src, dst)`` pairs or an ``(E, 2)`` integer array.
        num_nodes (int): Size of the node set.
        symmetrize (bool): Insert the reverse of every edge.
        add_self_loops (bool): Insert ``(v, v)`` for every node.

    Returns:
        Graph: The canonical graph.

    Raises:
        GraphError: Empty node set or an endpoint outside ``[0, num_nodes)``.
    """
    if num_nodes <= 0:
        raise GraphError("graph must have at least one node")

    pairs = np.asarray(edges, dtype=np.int64)
    if pairs.size == 0:
        pairs = np.empty((0, 2), dtype=np.int64)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise GraphError(f"edges must be (E, 2) pairs, got shape {pairs.shape}")
    bad = (pairs < 0) | (pairs >= num_nodes)
    if bad.any():
        row = int(np.argmax(bad.any(axis=1)))
        raise GraphError(
            f"endpoint out of range in edge {tuple(pairs[row].tolist())} for {num_nodes} nodes"
        )

    src, dst = pairs[:, 0], pairs[:, 1]
    if symmetrize:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
    if add_self_loops:
        diag = np.arange(num_nodes, dtype=np.int64)
        src, dst = np.concatenate([src, diag]), np.concatenate([dst, diag])

    keys = np.unique(src * num_nodes + dst)
    if keys.size < src.size and not (symmetrize or add_self_loops):
        log.debug("merged %d duplicate arcs", src.size - keys.size)
    rows, cols = keys // num_nodes, keys % num_nodes
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])

    reverse = np.sort(cols * num_nodes + rows)
    symmetric = bool(symmetrize) or bool(np.array_equal(reverse, keys))
    loops = int(np.count_nonzero(rows == cols))
    has_self_loops = bool(add_self_loops) or loops == num_nodes

    return Graph(num_nodes, offsets, cols.astype(np.int64), symmetric, has_self_loops)


def with_self_loops(g: Graph) -> Graph:
    """Return ``g`` with a self-loop on every node."""
    if g.has_self_loops:
        return g
    return build_graph(g.edge_list(), g.num_nodes, add_self_loops=True)


def without_self_loops(g: Graph) -> Graph:
    rows, cols = g.arcs()
    keep = rows != cols
    return build_graph(np.column_stack([rows[keep], cols[keep]]), g.num_nodes)


def two_hop_candidates(g: Graph, v: int) -> np.ndarray:
    """
    Nodes reachable from ``v`` in exactly two hops that are not already neighbors.

    Args:
        g (Graph): A symmetric graph.
        v (int): The central node.

    Returns:
        np.ndarray: Candidate ids in ascending order.
    """
    if not g.symmetric:
        raise GraphError("two-hop candidates require a symmetric graph")
    first = g.neighbors(v)
    first = first[first != v]
    if first.size == 0:
        return np.empty(0, dtype=np.int64)
    second = np.concatenate([g.neighbors(int(u)) for u in first])
    second = np.unique(second)
    exclude = np.append(first, v)
    return second[~np.isin(second, exclude)]


def two_hop_candidate_matrix(g: Graph) -> sparse.csr_matrix:
    """
    All two-hop candidates at once, as a boolean CSR matrix.

    Row ``v`` holds exactly ``two_hop_candidates(g, v)``.
    """
    if not g.symmetric:
        raise GraphError("two-hop candidates require a symmetric graph")
    a = without_self_loops(g).to_scipy()
    reach = (a @ a).tocsr()
    reach = reach - sparse.diags(reach.diagonal(), format="csr")
    reach = reach - reach.multiply(a)
    reach.eliminate_zeros()
    reach.sort_indices()
    return (reach > 0).tocsr()


def ratio_stats(g: Graph, y: LabelVector) -> RatioStats:
    """
    Count positive (same-label) and negative neighbors of every node.

    Self-loops are not counted. Isolated nodes get ``r_v = 0``; a graph with
    no non-self arcs has global ratio 0.

    Raises:
        GraphError: Some node is unlabeled, or the label vector has the wrong length.
    """
    if y.num_nodes != g.num_nodes:
        raise GraphError(f"label vector has {y.num_nodes} entries for {g.num_nodes} nodes")
    if not y.all_known:
        missing = int(np.argmin(y.known_mask))
        raise GraphError(f"ratio statistics need full labels; node {missing} is unlabeled")

    rows, cols = g.arcs()
    keep = rows != cols
    rows, cols = rows[keep], cols[keep]
    same = y.labels[rows] == y.labels[cols]

    positive = np.bincount(rows[same], minlength=g.num_nodes)
    negative = np.bincount(rows[~same], minlength=g.num_nodes)
    total = positive + negative
    ratio = np.divide(
        positive, total, out=np.zeros(g.num_nodes, dtype=np.float64), where=total > 0
    )

    pos_sum, neg_sum = int(positive.sum()), int(negative.sum())
    global_ratio = pos_sum / (pos_sum + neg_sum) if pos_sum + neg_sum else 0.0
    return RatioStats(positive, negative, ratio, pos_sum, neg_sum, global_ratio)
