"""Diagnostics on trained homophily weights and the smoothness view of propagation."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sparse import SparseMatrix

HIST_BINS = 32


class AnalysisError(ValueError):
    pass


@dataclass
class DegreeDistributionReport:
    bin_edges: list[float]
    intra_counts: list[int]
    inter_counts: list[int]
    intra_mean: float
    inter_mean: float
    intra_pairs: int
    inter_pairs: int

    def to_dict(self) -> dict:
        return {
            "bins": len(self.intra_counts),
            "bin_edges": [float(f"{x:.9g}") for x in self.bin_edges],
            "intra": {"counts": self.intra_counts, "mean": _fmt(self.intra_mean),
                      "pairs": self.intra_pairs},
            "inter": {"counts": self.inter_counts, "mean": _fmt(self.inter_mean),
                      "pairs": self.inter_pairs},
        }


def _fmt(x: float):
    return float(f"{x:.9g}") if np.isfinite(x) else None


def _unordered(support: SparseMatrix):
    rows = support.row_ids()
    upper = rows < support.indices
    return rows[upper], support.indices[upper], upper


def degree_distribution(H: np.ndarray, labels: np.ndarray, support: SparseMatrix,
                        bins: int = HIST_BINS) -> DegreeDistributionReport:
    """Histogram H over intra-class and inter-class support pairs, each pair counted once."""
    H = np.asarray(H, dtype=np.float64)
    i, j, upper = _unordered(support)
    values = H[upper]
    same = labels[i] == labels[j]
    if values.size:
        lo, hi = float(values.min()), float(values.max())
    else:
        lo, hi = 0.0, 1.0
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    intra, _ = np.histogram(values[same], bins=edges)
    inter, _ = np.histogram(values[~same], bins=edges)
    intra_mean = float(values[same].mean()) if np.any(same) else float("nan")
    inter_mean = float(values[~same].mean()) if np.any(~same) else float("nan")
    return DegreeDistributionReport(edges.tolist(), intra.tolist(), inter.tolist(),
                                    intra_mean, inter_mean, int(same.sum()), int((~same).sum()))


def smoothness_objective(Z: np.ndarray, H: np.ndarray, support: SparseMatrix) -> float:
    """1/2 * sum over ordered support pairs (i, j) of H_ij * ||Z_i - Z_j||^2."""
    Z = np.asarray(Z, dtype=np.float64)
    Z = Z.reshape(Z.shape[0], -1)
    rows, cols = support.row_ids(), support.indices
    diff = Z[rows] - Z[cols]
    return 0.5 * float(np.sum(np.asarray(H) * np.sum(diff * diff, axis=1)))


def smoothness_trace(Z: np.ndarray, H: np.ndarray, support: SparseMatrix) -> float:
    """tr(Z^T (D - A_k * H) Z) with D the row sums of A_k * H."""
    Z = np.asarray(Z, dtype=np.float64)
    Z = Z.reshape(Z.shape[0], -1)
    W = support.with_data(np.asarray(H, dtype=np.float64))
    degree = np.bincount(W.row_ids(), weights=W.data, minlength=W.shape[0])
    return float(np.sum(Z * (degree[:, None] * Z)) - np.sum(Z * W.matmul(Z)))


def propagation_matrix(H: np.ndarray, support: SparseMatrix) -> SparseMatrix:
    W = support.with_data(np.asarray(H, dtype=np.float64))
    degree = np.bincount(W.row_ids(), weights=W.data, minlength=W.shape[0])
    if np.any(degree <= 0):
        bad = np.flatnonzero(degree <= 0)
        raise AnalysisError(f"{bad.size} nodes have zero weighted degree (first: {bad[0]}); "
                            "restrict to the propagating subgraph first")
    return W.with_data(W.data / degree[W.row_ids()])


def fixed_point_iterate(Z0: np.ndarray, H: np.ndarray, support: SparseMatrix,
                        max_iter: int = 10_000, tol: float = 1e-8):
    """Iterate Z <- D^-1 (A_k * H) Z until successive iterates differ by < tol (max norm).

    Returns (Z, residual, iterations) where residual = ||Z - P Z||_inf for the
    returned Z.
    """
    P = propagation_matrix(H, support)
    Z = np.array(Z0, dtype=np.float64).reshape(len(Z0), -1)
    residual = float("inf")
    it = 0
    for it in range(max_iter + 1):
        Z_next = P.matmul(Z)
        residual = float(np.max(np.abs(Z_next - Z))) if Z.size else 0.0
        if residual < tol or it == max_iter:
            break
        Z = Z_next
    return Z, residual, it


def connected_components(support: SparseMatrix) -> np.ndarray:
    """Component label per node (union-find over the support)."""
    n = support.shape[0]
    parent = np.arange(n)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    rows, cols = support.row_ids(), support.indices
    for a, b in zip(rows.tolist(), cols.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    return np.array([find(x) for x in range(n)])


def _bipartite_components(support: SparseMatrix, comp: np.ndarray) -> set[int]:
    n = support.shape[0]
    color = np.full(n, -1)
    bipartite = {int(c): True for c in np.unique(comp)}
    indptr, indices = support.indptr, support.indices
    for start in range(n):
        if color[start] >= 0:
            continue
        color[start] = 0
        stack = [start]
        while stack:
            u = stack.pop()
            for v in indices[indptr[u]:indptr[u + 1]]:
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    stack.append(v)
                elif color[v] == color[u]:
                    bipartite[int(comp[u])] = False
    return {c for c, b in bipartite.items() if b}


def propagating_subgraph(H: np.ndarray, support: SparseMatrix):
    """Nodes whose propagation converges: positive weighted degree, non-bipartite component.

    Returns (node ids, restricted support, restricted H, excluded-node count).
    """
    H = np.asarray(H, dtype=np.float64)
    positive = H > 0
    rows = support.row_ids()
    pos = SparseMatrix.from_coo(rows[positive], support.indices[positive], H[positive],
                                support.shape)
    degree = pos.row_degrees()
    comp = connected_components(pos)
    bip = _bipartite_components(pos, comp)
    keep = (degree > 0) & ~np.isin(comp, list(bip))
    nodes = np.flatnonzero(keep)
    remap = np.full(support.shape[0], -1)
    remap[nodes] = np.arange(nodes.size)
    r, c = pos.row_ids(), pos.indices
    inside = keep[r] & keep[c]
    sub = SparseMatrix.from_coo(remap[r[inside]], remap[c[inside]], pos.data[inside],
                                (nodes.size, nodes.size))
    return nodes, sub.with_data(np.ones(sub.nnz)), sub.data.copy(), int(support.shape[0] - nodes.size)


def theorem_check(Z0: np.ndarray, H: np.ndarray, support: SparseMatrix,
                  max_iter: int = 100_000, tol: float = 1e-8) -> dict:
    """Run the linear propagation to its limit on the propagating subgraph."""
    nodes, sub, h_sub, excluded = propagating_subgraph(H, support)
    Z0 = np.asarray(Z0, dtype=np.float64)[nodes]
    Z, residual, iterations = fixed_point_iterate(Z0, h_sub, sub, max_iter, tol)
    return {
        "nodes": int(nodes.size),
        "excluded_nodes": excluded,
        "iterations": int(iterations),
        "residual": residual,
        "objective_initial": smoothness_objective(Z0, h_sub, sub),
        "objective_limit": smoothness_objective(Z, h_sub, sub),
        "objective_initial_trace": smoothness_trace(Z0, h_sub, sub),
    }


def model_embeddings(model) -> np.ndarray:
    """Final-layer pre-softmax representation (independent of which nodes are labeled)."""
    return model.forward(np.empty(0, dtype=np.int64)).Z.value


def export_embeddings(model, path) -> Path:
    return write_embeddings(model_embeddings(model), model.graph.labels, path)


def write_embeddings(Z: np.ndarray, labels: np.ndarray, path) -> Path:
    """Write `node_id<TAB>label<TAB>z_1..z_d`, one line per node."""
    path = Path(path)
    Z = np.asarray(Z, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for i, (y, row) in enumerate(zip(labels.tolist(), Z)):
            fh.write(f"{i}\t{y}\t" + "\t".join(f"{x:.9g}" for x in row) + "\n")
    return path
