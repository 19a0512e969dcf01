"""Homophily-guided graph convolution.

Two estimates of how likely a pair of nodes shares a class are learned on
the k-hop support: one from an MLP's soft class assignments (attribute
side), one from label propagation with learnable positive edge weights
(topology side). Their weighted sum reweights neighbor aggregation in every
convolution layer. All three heads are trained jointly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import Graph, k_order_structure
from .sparse import SparseMatrix

CHECKPOINT_FORMAT = "hoggcn-checkpoint"
CHECKPOINT_VERSION = 1
# softplus(THETA_ONE) == 1, so fresh topology weights propagate uniformly
THETA_ONE = float(np.log(np.expm1(1.0)))
SPARSE_FEATURE_DENSITY = 0.25


@dataclass
class ModelConfig:
    k: int = 2
    alpha: float = 1.0
    beta: float = 0.1
    lam: float = 1.0
    gamma: float = 1.0
    mu: float = 1.0
    xi: float = 1.0
    mlp_hidden: int = 512
    gcn_hidden: int = 256
    mlp_layers: int = 2
    gcn_layers: int = 2
    lp_iterations: int = 1
    uniform_h: bool = False
    dtype: str = "float64"
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha", "beta", "lam", "gamma", "mu", "xi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        for name in ("mlp_hidden", "gcn_hidden", "mlp_layers", "gcn_layers", "lp_iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class ForwardResult(NamedTuple):
    R: Tensor          # class probabilities from the convolution stack
    B: Tensor          # MLP soft assignments
    Y_lp: Tensor       # label-propagation predictions
    H: Tensor          # combined homophily degree on the support (edge values)
    S: Tensor
    T: Tensor
    Z: Tensor          # final-layer pre-softmax representation
    Z_m: Tensor        # MLP logits


def _linear(x, w: Tensor) -> Tensor:
    if isinstance(x, SparseMatrix):
        return ad.spmm(x, None, w)
    return ad.matmul(x, w)


def mlp_forward(features, weights: list[Tensor]) -> tuple[Tensor, Tensor]:
    """ReLU MLP without biases; returns (logits, row-softmax of logits)."""
    width = features.shape[1]
    if weights[0].shape[0] != width:
        raise ValueError(f"feature width {width} does not match first layer {weights[0].shape}")
    z = features
    for i, w in enumerate(weights):
        z = _linear(z, w)
        if i < len(weights) - 1:
            z = ad.relu(z)
    return z, ad.row_softmax(z)


def attribute_homophily(B: Tensor, support: SparseMatrix) -> Tensor:
    """S_ij = <b_i, b_j> evaluated only on the stored support entries."""
    return ad.edge_dot(support, B)


def pair_index(support: SparseMatrix) -> np.ndarray:
    """Map every stored (i, j) of a symmetric support to its unordered pair id."""
    n = support.shape[0]
    rows, cols = support.row_ids(), support.indices
    keys = np.minimum(rows, cols) * n + np.maximum(rows, cols)
    upper_keys = keys[rows < cols]
    return np.searchsorted(upper_keys, keys)


def topology_homophily(theta: Tensor, pairs: np.ndarray) -> Tensor:
    """Positive symmetric edge weights: softplus of one parameter per unordered pair."""
    return ad.gather(ad.softplus(theta), pairs)


def row_normalize(support: SparseMatrix, weights: Tensor) -> Tensor:
    return ad.row_divide(support, weights, ad.row_sum(support, weights))


def generalized_label_propagation(support: SparseMatrix, T: Tensor, Y0, iterations: int) -> Tensor:
    """Y <- D^-1 (A_k * T) Y, `iterations` times, without resetting labeled rows."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    P = row_normalize(support, T)
    Y = ad.as_tensor(Y0)
    for _ in range(iterations):
        Y = ad.spmm(support, P, Y)
    return Y


def combine_homophily(S: Tensor, T: Tensor, alpha: float, beta: float) -> Tensor:
    if S.shape != T.shape:
        raise ValueError(f"S and T live on different supports ({S.shape} vs {T.shape})")
    return ad.add(ad.scale(S, alpha), ad.scale(T, beta))


def hog_conv_layer(support: SparseMatrix, Z_prev, H: Tensor, W_e: Tensor, W_n: Tensor,
                   mu: float, xi: float, activation: bool) -> Tensor:
    """sigma(mu * Z W_e + xi * D^-1 (A_k * H) Z W_n), D the row sums of A_k * H."""
    terms = []
    if mu != 0:
        terms.append(ad.scale(_linear(Z_prev, W_e), mu))
    if xi != 0:
        neighbors = ad.spmm(support, row_normalize(support, H), _linear(Z_prev, W_n))
        terms.append(ad.scale(neighbors, xi))
    if not terms:
        n = Z_prev.shape[0]
        terms.append(Tensor(np.zeros((n, W_e.shape[1]), dtype=W_e.dtype)))
    z = terms[0] if len(terms) == 1 else ad.add(terms[0], terms[1])
    return ad.relu(z) if activation else z


def joint_loss(out: ForwardResult, labels: np.ndarray, train: np.ndarray,
               lam: float, gamma: float) -> tuple[Tensor, dict[str, float]]:
    """L_gcn + lam * L_mlp + gamma * L_lp, each a masked cross-entropy on the training nodes."""
    if len(train) == 0:
        raise ValueError("joint_loss: empty training mask")
    l_gcn = ad.masked_cross_entropy(out.R, labels, train)
    l_mlp = ad.masked_cross_entropy(out.B, labels, train)
    l_lp = ad.masked_cross_entropy(out.Y_lp, labels, train)
    total = ad.add(ad.add(l_gcn, ad.scale(l_mlp, lam)), ad.scale(l_lp, gamma))
    parts = {"gcn": l_gcn.item(), "mlp": l_mlp.item(), "lp": l_lp.item()}
    return total, parts


def one_hot_labels(labels: np.ndarray, nodes: np.ndarray, num_classes: int, dtype) -> np.ndarray:
    Y = np.zeros((labels.size, num_classes), dtype=dtype)
    Y[nodes, labels[nodes]] = 1.0
    return Y


def _uniform(rng, fan_in, fan_out, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


class HogModel:
    """Parameters and cached structure for one graph."""

    def __init__(self, graph: Graph, config: ModelConfig, support: SparseMatrix | None = None,
                 seed: int | None = None):
        self.graph = graph
        self.config = config
        dtype = np.dtype(config.dtype)
        self.dtype = dtype
        if support is None:
            support = k_order_structure(graph.adjacency, config.k)
        elif support.shape != graph.adjacency.shape:
            raise ValueError("support does not match the graph size")
        self.support = support.astype(dtype)
        self.pairs = pair_index(self.support)
        self.num_pairs = self.support.nnz // 2

        X = graph.features.astype(dtype)
        if np.count_nonzero(X) <= SPARSE_FEATURE_DENSITY * X.size:
            self.features = SparseMatrix.from_dense(X)
        else:
            self.features = Tensor(X)

        rng = np.random.default_rng(config.seed if seed is None else seed)
        f, C = graph.num_features, graph.num_classes
        params: dict[str, Tensor] = {}
        widths = [f] + [config.mlp_hidden] * (config.mlp_layers - 1) + [C]
        for i in range(config.mlp_layers):
            params[f"mlp.{i}"] = Tensor(_uniform(rng, widths[i], widths[i + 1], dtype), True)
        widths = [f] + [config.gcn_hidden] * (config.gcn_layers - 1) + [C]
        for i in range(config.gcn_layers):
            params[f"gcn.{i}.ego"] = Tensor(_uniform(rng, widths[i], widths[i + 1], dtype), True)
            params[f"gcn.{i}.nbr"] = Tensor(_uniform(rng, widths[i], widths[i + 1], dtype), True)
        params["theta_t"] = Tensor(np.full(self.num_pairs, THETA_ONE, dtype=dtype), True)
        for name, p in params.items():
            p.name = name
        self.params = params

    @property
    def weight_names(self) -> set[str]:
        return {k for k in self.params if k != "theta_t"}

    def mlp_weights(self) -> list[Tensor]:
        return [self.params[f"mlp.{i}"] for i in range(self.config.mlp_layers)]

    def label_matrix(self, train: np.ndarray) -> np.ndarray:
        return one_hot_labels(self.graph.labels, np.asarray(train), self.graph.num_classes,
                              self.dtype)

    def homophily(self, B: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        cfg = self.config
        S = attribute_homophily(B, self.support)
        T = topology_homophily(self.params["theta_t"], self.pairs)
        if cfg.uniform_h:
            H = Tensor(np.ones(self.support.nnz, dtype=self.dtype))
        else:
            H = combine_homophily(S, T, cfg.alpha, cfg.beta)
        return S, T, H

    def forward(self, train: np.ndarray) -> ForwardResult:
        cfg = self.config
        Z_m, B = mlp_forward(self.features, self.mlp_weights())
        S, T, H = self.homophily(B)
        Y_lp = generalized_label_propagation(self.support, T, self.label_matrix(train),
                                             cfg.lp_iterations)
        z = self.features
        for i in range(cfg.gcn_layers):
            z = hog_conv_layer(self.support, z, H, self.params[f"gcn.{i}.ego"],
                               self.params[f"gcn.{i}.nbr"], cfg.mu, cfg.xi,
                               activation=i < cfg.gcn_layers - 1)
        return ForwardResult(ad.row_softmax(z), B, Y_lp, H, S, T, z, Z_m)

    def loss(self, train: np.ndarray) -> tuple[Tensor, dict[str, float], ForwardResult]:
        out = self.forward(train)
        total, parts = joint_loss(out, self.graph.labels, train, self.config.lam,
                                  self.config.gamma)
        return total, parts, out

    def get_state(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.params.items()}

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            p.value = np.array(state[k], dtype=self.dtype)


def predict(R: Tensor) -> np.ndarray:
    """Arg-max class per row; ties go to the lowest class index."""
    return np.argmax(R.value, axis=1)


def accuracy(R: Tensor, labels: np.ndarray, nodes: np.ndarray) -> float:
    nodes = np.asarray(nodes)
    if nodes.size == 0:
        return float("nan")
    return float(np.mean(predict(R)[nodes] == labels[nodes]))


def save_checkpoint(model: HogModel, path) -> Path:
    """Single .npz file: format tag, version, JSON config and little-endian arrays."""
    path = Path(path)
    arrays = {
        "format": np.array(CHECKPOINT_FORMAT),
        "version": np.array(CHECKPOINT_VERSION, dtype="<i8"),
        "config": np.array(json.dumps(asdict(model.config), sort_keys=True)),
        "n": np.array(model.graph.n, dtype="<i8"),
        "support.indptr": model.support.indptr.astype("<i8"),
        "support.indices": model.support.indices.astype("<i8"),
    }
    for name, p in model.params.items():
        arrays[f"param/{name}"] = p.value.astype(p.value.dtype.newbyteorder("<"))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path, graph: Graph) -> HogModel:
    with np.load(Path(path), allow_pickle=False) as data:
        if str(data["format"]) != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a model checkpoint")
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        if int(data["n"]) != graph.n:
            raise ValueError(f"{path}: checkpoint is for n={int(data['n'])}, graph has {graph.n}")
        config = ModelConfig.from_dict(json.loads(str(data["config"])))
        indptr, indices = data["support.indptr"], data["support.indices"]
        support = SparseMatrix((graph.n, graph.n), indptr, indices, np.ones(indices.size))
        state = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
    model = HogModel(graph, config, support=support)
    if set(state) != set(model.params):
        raise ValueError(f"{path}: parameter set does not match the configuration")
    model.set_state(state)
    return model
