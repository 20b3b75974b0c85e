"""Nonlocal differential operators on weighted graphs and graph TV.

An "edge field" is a plain ndarray with one scalar per directed edge,
aligned with the graph's adjacency slots (``WeightedGraph.indices``); entry
k belongs to the directed edge rows[k] -> indices[k]. The transposed value
of an edge field ``e`` is ``e[graph.reverse]``.

All operators treat only the vertex coordinates through the precomputed
weights, so 2D and 3D embeddings with identical pairwise distances give
identical results.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import WeightedGraph


def _check_nodal(graph: WeightedGraph, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (graph.n_vertices,):
        raise ValueError(f"field length {mu.shape} does not match {graph.n_vertices} vertices")
    return mu


def _check_edge(graph: WeightedGraph, nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (graph.n_directed_edges,):
        raise ValueError(
            f"edge field length {nu.shape} does not match {graph.n_directed_edges} directed edges"
        )
    return nu


def sqrt_weights(graph: WeightedGraph) -> np.ndarray:
    return np.sqrt(graph.weights)


def nonlocal_gradient(graph: WeightedGraph, mu) -> np.ndarray:
    """Edge field (mu_j - mu_i) * sqrt(w_ij) over directed edges i -> j."""
    mu = _check_nodal(graph, mu)
    return (mu[graph.indices] - mu[graph.rows]) * sqrt_weights(graph)


def nonlocal_divergence(graph: WeightedGraph, nu) -> np.ndarray:
    """Nodal field sum_j (nu_ij - nu_ji) * sqrt(w_ij)."""
    nu = _check_edge(graph, nu)
    contrib = (nu - nu[graph.reverse]) * sqrt_weights(graph)
    return np.bincount(graph.rows, weights=contrib, minlength=graph.n_vertices)


def graph_laplacian_apply(graph: WeightedGraph, mu) -> np.ndarray:
    """Nodal field sum_j (mu_j - mu_i) * w_ij, i.e. half the div of the gradient."""
    mu = _check_nodal(graph, mu)
    contrib = (mu[graph.indices] - mu[graph.rows]) * graph.weights
    return np.bincount(graph.rows, weights=contrib, minlength=graph.n_vertices)


def graph_laplacian_matrix(graph: WeightedGraph) -> sp.csr_matrix:
    """Sparse Laplacian with w_ij off-diagonal and negative row-sum diagonal."""
    n = graph.n_vertices
    off = sp.csr_matrix(
        (graph.weights.copy(), graph.indices.copy(), graph.indptr.copy()), shape=(n, n)
    )
    deg = np.asarray(off.sum(axis=1)).ravel()
    lap = off - sp.diags(deg)
    lap = lap.tocsr()
    lap.sort_indices()
    return lap


def graph_tv_aniso(graph: WeightedGraph, mu) -> float:
    """Anisotropic graph TV; every undirected edge contributes twice."""
    return float(np.abs(nonlocal_gradient(graph, mu)).sum())


def graph_tv_iso(graph: WeightedGraph, mu) -> float:
    """Isotropic graph TV: per-vertex L2 norm over incident edge differences."""
    mu = _check_nodal(graph, mu)
    sq = (mu[graph.indices] - mu[graph.rows]) ** 2 * graph.weights
    per_vertex = np.bincount(graph.rows, weights=sq, minlength=graph.n_vertices)
    return float(np.sqrt(per_vertex).sum())
