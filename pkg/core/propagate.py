"""Degree-normalized adjacency and linear K-step feature propagation."""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DimensionError, UsageError
from .graph import Graph, with_self_loops


@dataclass(frozen=True)
class NormalizedAdjacency:
    """
    ``D^-1/2 (A + I) D^-1/2`` over the self-loop-completed graph.

    Attributes:
        structure (Graph): Source graph with a self-loop on every node.
        values (np.ndarray): One weight per stored arc, in CSR order.
    """

    structure: Graph
    values: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.structure.num_nodes

    def to_scipy(self) -> sparse.csr_matrix:
        matrix = sparse.csr_matrix(
            (self.values, self.structure.col_indices, self.structure.row_offsets),
            shape=(self.num_nodes, self.num_nodes),
        )
        matrix.has_sorted_indices = True
        return matrix

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()


def normalize_adjacency(g: Graph) -> NormalizedAdjacency:
    """
    Symmetrically normalize ``g`` after inserting any missing self-loops.

    The weight of arc (u, v) is ``1 / sqrt(d_u * d_v)`` with self-loop-inclusive
    degrees, so an isolated node keeps the single weight 1 on its diagonal.
    """
    structure = with_self_loops(g)
    degree = structure.degrees().astype(np.float64)
    rows, cols = structure.arcs()
    values = 1.0 / np.sqrt(degree[rows] * degree[cols])
    return NormalizedAdjacency(structure, values)


def propagate_k(adj: NormalizedAdjacency, X: np.ndarray, K: int) -> np.ndarray:
    """
    Compute ``A_hat^K X`` by ``K`` successive sparse-dense products.

    Each output row accumulates its terms in ascending column order, which
    makes the result bit-reproducible.

    Raises:
        DimensionError: ``X`` does not have one row per node.
        UsageError: ``K`` is negative.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != adj.num_nodes:
        raise DimensionError(
            f"feature matrix has shape {X.shape}, expected ({adj.num_nodes}, F)"
        )
    if K < 0:
        raise UsageError(f"propagation depth must be >= 0, got {K}")

    matrix = adj.to_scipy()
    H = X.copy()
    for _ in range(K):
        H = matrix @ H
    return H


def parameter_free_embedding(g: Graph, X: np.ndarray) -> np.ndarray:
    """Two-step propagation ``A_hat^2 X``, the input of the edge classifier."""
    return propagate_k(normalize_adjacency(g), X, 2)


def normalize_rows(X: np.ndarray) -> np.ndarray:
    """L2-normalize each row; all-zero rows stay zero."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)
