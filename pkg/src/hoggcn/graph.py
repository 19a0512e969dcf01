"""Graph container, k-hop structure, homophily ratio, splits and a synthetic generator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sparse import SparseMatrix

TRAIN_FRACTION = 0.48
VAL_FRACTION = 0.32


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int = 0

    def __post_init__(self):
        for name in ("train", "val", "test"):
            arr = np.sort(np.asarray(getattr(self, name), dtype=np.int64))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, Split):
            return NotImplemented
        return (self.seed == other.seed and np.array_equal(self.train, other.train)
                and np.array_equal(self.val, other.val) and np.array_equal(self.test, other.test))

    __hash__ = None

    def validate(self, n: int, labels: np.ndarray, num_classes: int) -> None:
        parts = np.concatenate([self.train, self.val, self.test])
        if parts.size != n or not np.array_equal(np.sort(parts), np.arange(n)):
            raise GraphError(f"split {self.seed}: train/val/test must partition all {n} nodes")
        missing = np.setdiff1d(np.arange(num_classes), labels[self.train])
        if missing.size:
            raise GraphError(f"split {self.seed}: classes {missing.tolist()} have no training node")


@dataclass(frozen=True, eq=False)
class Graph:
    """An undirected attributed graph with node labels and evaluation splits."""

    adjacency: SparseMatrix
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    splits: tuple[Split, ...] = ()
    name: str = ""

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).ravel()
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "splits", tuple(self.splits))
        self.validate()

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return self.adjacency.nnz // 2

    def validate(self) -> None:
        adj = self.adjacency
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise GraphError(f"adjacency must be square, got {adj.shape}")
        if not adj.is_symmetric():
            raise GraphError("adjacency must be symmetric")
        if np.any(adj.row_ids() == adj.indices):
            raise GraphError("adjacency must have an empty diagonal")
        if not np.all(adj.data == 1.0):
            raise GraphError("adjacency must be binary")
        if self.features.ndim != 2 or self.features.shape[0] != n or self.features.shape[1] < 1:
            raise GraphError(f"features must be {n} x f with f >= 1, got {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise GraphError("features contain non-finite values")
        if self.labels.shape != (n,):
            raise GraphError(f"expected {n} labels, got {self.labels.shape[0]}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise GraphError(f"labels must lie in [0, {self.num_classes})")
        present = np.bincount(self.labels, minlength=self.num_classes)
        if np.any(present == 0):
            raise GraphError(f"classes {np.flatnonzero(present == 0).tolist()} have no nodes")
        for split in self.splits:
            split.validate(n, self.labels, self.num_classes)

    def with_splits(self, splits) -> Graph:
        return Graph(self.adjacency, self.features, self.labels, self.num_classes,
                     tuple(splits), self.name)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.adjacency == other.adjacency
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and self.num_classes == other.num_classes
                and self.splits == other.splits and self.name == other.name)

    __hash__ = None


def adjacency_from_edges(edges, n: int) -> SparseMatrix:
    """Symmetrize, deduplicate and drop self-loops from an edge list."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    u, v = edges[:, 0], edges[:, 1]
    keep = u != v
    u, v = u[keep], v[keep]
    return SparseMatrix.from_coo(np.concatenate([u, v]), np.concatenate([v, u]), 1.0, (n, n))


def homophily_ratio(graph: Graph) -> float:
    """Fraction of undirected edges whose endpoints share a label."""
    adj = graph.adjacency
    rows = adj.row_ids()
    upper = rows < adj.indices
    if not np.any(upper):
        raise GraphError("homophily ratio is undefined on a graph without edges")
    same = graph.labels[rows[upper]] == graph.labels[adj.indices[upper]]
    return float(np.count_nonzero(same)) / float(np.count_nonzero(upper))


def k_order_structure(adjacency: SparseMatrix, k: int) -> SparseMatrix:
    """Binary support of A + A^2 + ... + A^k with the diagonal removed."""
    if k < 1:
        raise GraphError(f"order k must be >= 1, got {k}")
    base = adjacency.with_data(np.ones(adjacency.nnz))
    power = base
    total = base
    for _ in range(k - 1):
        power = power.pattern_matmul(base)
        total = total.pattern_union(power)
    return total.drop_diagonal()


def generate_splits(graph: Graph, count: int = 10, seed: int = 0) -> list[Split]:
    """Stratified 48/32/20 splits; floors for train/val with at least one train node per class."""
    labels = graph.labels
    sizes = np.bincount(labels, minlength=graph.num_classes)
    if np.any(sizes < 3):
        small = np.flatnonzero(sizes < 3).tolist()
        raise GraphError(f"classes {small} have fewer than 3 nodes; cannot split")
    members = [np.flatnonzero(labels == c) for c in range(graph.num_classes)]
    splits: list[Split] = []
    attempt = 0
    while len(splits) < count:
        if attempt >= 10 * count + 100:
            raise GraphError(f"could not draw {count} distinct splits")
        split_seed = int(np.random.SeedSequence([seed, attempt]).generate_state(1)[0])
        attempt += 1
        rng = np.random.default_rng(split_seed)
        train, val, test = [], [], []
        for nodes in members:
            m = nodes.size
            n_train = max(1, int(np.floor(TRAIN_FRACTION * m)))
            n_val = int(np.floor(VAL_FRACTION * m))
            perm = rng.permutation(nodes)
            train.append(perm[:n_train])
            val.append(perm[n_train:n_train + n_val])
            test.append(perm[n_train + n_val:])
        split = Split(np.concatenate(train), np.concatenate(val), np.concatenate(test), split_seed)
        if any(np.array_equal(split.train, s.train) and np.array_equal(split.val, s.val)
               for s in splits):
            continue
        splits.append(split)
    return splits


def _block_pairs(rng, count, members_a, members_b, same):
    """Draw `count` distinct node pairs inside one block of the pair space."""
    if same:
        m = members_a.size
        total = m * (m - 1) // 2
        flat = rng.choice(total, size=count, replace=False)
        # row-major decode of the strict upper triangle; row i starts at i(2m-i-1)/2
        def start(r):
            return r * (2 * m - r - 1) // 2

        b = 2 * m - 1
        i = np.floor((b - np.sqrt(b * b - 8.0 * flat)) / 2.0).astype(np.int64)
        i = np.where(start(i) > flat, i - 1, i)
        i = np.where(start(i + 1) <= flat, i + 1, i)
        j = flat - start(i) + i + 1
        return members_a[i], members_a[j]
    total = members_a.size * members_b.size
    flat = rng.choice(total, size=count, replace=False)
    return members_a[flat // members_b.size], members_b[flat % members_b.size]


def generate_synthetic(n: int, num_classes: int, h_target: float, mean_degree: float,
                       feature_dim: int, feature_signal: float, seed: int = 0,
                       split_count: int = 10) -> Graph:
    """Two-rate block model whose expected homophily ratio is `h_target`.

    Intra-class pairs are linked with probability p_in and inter-class pairs
    with p_out, chosen so that the expected edge count is n * mean_degree / 2
    and a fraction `h_target` of it is intra-class. Features are Gaussian
    around class means of norm `feature_signal`.
    """
    if not 0.0 <= h_target <= 1.0:
        raise GraphError(f"h_target must lie in [0, 1], got {h_target}")
    if num_classes < 1 or n < 3 * num_classes:
        raise GraphError(f"need n >= 3 * classes, got n={n}, classes={num_classes}")
    if not 0.0 < mean_degree < n:
        raise GraphError(f"mean degree must lie in (0, n), got {mean_degree}")
    if feature_dim < 1:
        raise GraphError("feature_dim must be >= 1")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % num_classes
    members = [np.flatnonzero(labels == c) for c in range(num_classes)]
    sizes = np.array([m.size for m in members])
    intra_pairs = int(np.sum(sizes * (sizes - 1) // 2))
    inter_pairs = n * (n - 1) // 2 - intra_pairs
    expected_edges = n * mean_degree / 2.0
    p_in = h_target * expected_edges / intra_pairs if intra_pairs else 0.0
    p_out = (1.0 - h_target) * expected_edges / inter_pairs if inter_pairs else 0.0
    if p_in > 1.0 or p_out > 1.0 or (h_target < 1.0 and inter_pairs == 0):
        raise GraphError(f"infeasible degree {mean_degree} for homophily {h_target}")

    us, vs = [], []
    for a in range(num_classes):
        for b in range(a, num_classes):
            same = a == b
            p = p_in if same else p_out
            total = sizes[a] * (sizes[a] - 1) // 2 if same else sizes[a] * sizes[b]
            count = int(rng.binomial(total, p)) if p > 0 else 0
            if count:
                u, v = _block_pairs(rng, count, members[a], members[b], same)
                us.append(u)
                vs.append(v)
    edges = np.stack([np.concatenate(us or [np.empty(0, np.int64)]),
                      np.concatenate(vs or [np.empty(0, np.int64)])], axis=1)
    adjacency = adjacency_from_edges(edges, n)

    directions = rng.standard_normal((num_classes, feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    features = feature_signal * directions[labels] + rng.standard_normal((n, feature_dim))
    graph = Graph(adjacency, features, labels, num_classes, (),
                  f"synthetic-n{n}-c{num_classes}-h{h_target:g}-s{seed}")
    if split_count:
        graph = graph.with_splits(generate_splits(graph, split_count, seed))
    return graph
