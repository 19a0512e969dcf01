import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hoggcn.autodiff import Tensor
from hoggcn.gradcheck import finite_diff_check
from hoggcn.graph import Graph, adjacency_from_edges, generate_synthetic, k_order_structure
from hoggcn.model import (THETA_ONE, ForwardResult, HogModel, ModelConfig, attribute_homophily,
                          combine_homophily, generalized_label_propagation, hog_conv_layer,
                          joint_loss, load_checkpoint, mlp_forward, pair_index, save_checkpoint,
                          topology_homophily)
from hoggcn.sparse import SparseMatrix

SMALL = dict(mlp_hidden=8, gcn_hidden=6)


def softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def dense_forward(model, train):
    """Straight dense re-statement of the forward pass, used as an oracle."""
    cfg = model.config
    X = model.graph.features.astype(float)
    A = model.support.to_dense()
    p = {k: v.value for k, v in model.params.items()}
    z = X
    for i in range(cfg.mlp_layers):
        z = z @ p[f"mlp.{i}"]
        if i < cfg.mlp_layers - 1:
            z = np.maximum(z, 0)
    B = softmax(z)
    S = (B @ B.T) * A
    T = np.zeros_like(A)
    upper = np.argwhere(np.triu(A, 1) > 0)  # row-major order == pair id order
    sp = np.log1p(np.exp(p["theta_t"]))
    for pid, (i, j) in enumerate(upper):
        T[i, j] = T[j, i] = sp[pid]
    H = np.ones_like(A) * A if cfg.uniform_h else cfg.alpha * S + cfg.beta * T
    Y0 = np.zeros((model.graph.n, model.graph.num_classes))
    Y0[train, model.graph.labels[train]] = 1
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.nan_to_num(T / T.sum(axis=1, keepdims=True))
        Hn = np.nan_to_num(H / H.sum(axis=1, keepdims=True))
    Y = Y0
    for _ in range(cfg.lp_iterations):
        Y = P @ Y
    z = X
    for i in range(cfg.gcn_layers):
        z = cfg.mu * z @ p[f"gcn.{i}.ego"] + cfg.xi * Hn @ z @ p[f"gcn.{i}.nbr"]
        if i < cfg.gcn_layers - 1:
            z = np.maximum(z, 0)
    return softmax(z), B, Y, H, S, T


def edges_to_dense(support, values):
    out = np.zeros(support.shape)
    out[support.row_ids(), support.indices] = values
    return out


@pytest.mark.parametrize("cfg", [
    ModelConfig(**SMALL),
    ModelConfig(k=1, alpha=0.3, beta=2.0, lp_iterations=3, **SMALL),
    ModelConfig(k=3, mu=0.0, mlp_layers=3, gcn_layers=3, **SMALL),
    ModelConfig(uniform_h=True, xi=0.5, **SMALL),
])
def test_forward_matches_dense_oracle(tiny_graph, cfg):
    model = HogModel(tiny_graph, cfg)
    rng = np.random.default_rng(0)
    model.params["theta_t"].value = rng.standard_normal(model.num_pairs)
    train = tiny_graph.splits[0].train
    out = model.forward(train)
    R, B, Y, H, S, T = dense_forward(model, train)
    sup = model.support
    np.testing.assert_allclose(out.R.value, R, atol=1e-12)
    np.testing.assert_allclose(out.B.value, B, atol=1e-12)
    np.testing.assert_allclose(out.Y_lp.value, Y, atol=1e-12)
    np.testing.assert_allclose(edges_to_dense(sup, out.H.value), H, atol=1e-12)
    np.testing.assert_allclose(edges_to_dense(sup, out.S.value), S, atol=1e-12)
    np.testing.assert_allclose(edges_to_dense(sup, out.T.value), T, atol=1e-12)


def test_shapes_and_parameter_names(tiny_graph):
    model = HogModel(tiny_graph, ModelConfig(**SMALL))
    out = model.forward(tiny_graph.splits[0].train)
    n, C = tiny_graph.n, tiny_graph.num_classes
    assert out.R.shape == out.B.shape == out.Y_lp.shape == (n, C)
    assert out.H.shape == (model.support.nnz,)
    assert model.num_pairs * 2 == model.support.nnz
    assert set(model.params) == {"mlp.0", "mlp.1", "gcn.0.ego", "gcn.0.nbr", "gcn.1.ego",
                                 "gcn.1.nbr", "theta_t"}
    assert model.weight_names == set(model.params) - {"theta_t"}
    bound = 1 / math.sqrt(tiny_graph.num_features)
    assert np.all(np.abs(model.params["mlp.0"].value) <= bound)


def test_zero_weights_give_uniform_assignments():
    X = np.random.default_rng(0).standard_normal((5, 3))
    _, B = mlp_forward(Tensor(X), [Tensor(np.zeros((3, 4))), Tensor(np.zeros((4, 2)))])
    np.testing.assert_allclose(B.value, 0.5, atol=0)


def test_mlp_hand_example():
    X = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
    W = Tensor(np.array([[math.log(3.0), 0.0], [0.0, 0.0]]))
    _, B = mlp_forward(X, [W])
    np.testing.assert_allclose(B.value, [[0.75, 0.25], [0.5, 0.5]], atol=1e-15)


def two_node_support():
    return SparseMatrix.from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))


@pytest.mark.parametrize("B, expected", [
    ([[1.0, 0.0], [1.0, 0.0]], 1.0),
    ([[1.0, 0.0], [0.0, 1.0]], 0.0),
    ([[0.5, 0.5], [0.2, 0.8]], 0.5),
    ([[0.2, 0.8], [1.0, 0.0]], 0.2),
])
def test_attribute_homophily_examples(B, expected):
    S = attribute_homophily(Tensor(np.array(B)), two_node_support())
    np.testing.assert_allclose(S.value, [expected, expected], atol=1e-15)


def test_pair_index_is_symmetric_and_dense():
    g = generate_synthetic(30, 2, 0.5, 4.0, 3, 1.0, seed=1, split_count=0)
    sup = k_order_structure(g.adjacency, 2)
    pairs = pair_index(sup)
    lookup = {(int(i), int(j)): int(p) for i, j, p in zip(sup.row_ids(), sup.indices, pairs)}
    for (i, j), p in lookup.items():
        assert lookup[(j, i)] == p
    assert sorted(set(pairs.tolist())) == list(range(sup.nnz // 2))


def test_topology_homophily_init_and_positivity(tiny_graph):
    model = HogModel(tiny_graph, ModelConfig(**SMALL))
    T = topology_homophily(model.params["theta_t"], model.pairs)
    assert np.all(model.params["theta_t"].value == THETA_ONE)
    np.testing.assert_allclose(T.value, 1.0, atol=1e-15)
    very_negative = Tensor(np.full(model.num_pairs, -700.0))
    assert np.all(topology_homophily(very_negative, model.pairs).value > 0)


def test_label_propagation_is_neighbour_average():
    # path 0-1-2-3 plus isolated node 4
    adj = adjacency_from_edges([(0, 1), (1, 2), (2, 3)], 5)
    T = Tensor(np.ones(adj.nnz))
    Y0 = np.zeros((5, 2))
    Y0[0, 0] = Y0[3, 1] = 1
    Y = generalized_label_propagation(adj, T, Y0, 1).value
    lists = [[1], [0, 2], [1, 3], [2], []]
    for u, nbrs in enumerate(lists):
        expected = Y0[nbrs].mean(axis=0) if nbrs else np.zeros(2)
        np.testing.assert_allclose(Y[u], expected, atol=1e-15)


def test_label_propagation_two_nodes_swaps_and_keeps_no_reset():
    sup = two_node_support()
    T = Tensor(np.array([3.0, 3.0]))
    Y0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(generalized_label_propagation(sup, T, Y0, 1).value,
                               [[0.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(generalized_label_propagation(sup, T, Y0, 2).value, Y0)


@pytest.mark.parametrize("alpha, beta, expected", [(1.0, 0.0, "S"), (0.0, 0.0, 0.0),
                                                   (0.5, 0.25, None)])
def test_combine_examples(alpha, beta, expected):
    S = Tensor(np.array([0.2, 0.6]))
    T = Tensor(np.array([0.4, 0.4]))
    H = combine_homophily(S, T, alpha, beta).value
    if expected == "S":
        np.testing.assert_array_equal(H, S.value)
    elif expected is None:
        np.testing.assert_allclose(H, [0.2, 0.4], atol=1e-15)
    else:
        assert np.all(H == 0)


def path3():
    return adjacency_from_edges([(0, 1), (1, 2)], 3)


def test_conv_identity_pass_through():
    Z = np.random.default_rng(0).standard_normal((3, 2))
    out = hog_conv_layer(path3(), Tensor(Z), Tensor(np.ones(4)), Tensor(np.eye(2)),
                         Tensor(np.eye(2)), 1.0, 0.0, activation=False)
    np.testing.assert_array_equal(out.value, Z)


def test_conv_neighbour_mean_on_path():
    Z = np.array([[1.0], [2.0], [4.0]])
    out = hog_conv_layer(path3(), Tensor(Z), Tensor(np.ones(4)), Tensor(np.eye(1)),
                         Tensor(np.eye(1)), 0.0, 1.0, activation=False)
    np.testing.assert_allclose(out.value, [[2.0], [2.5], [2.0]], atol=1e-15)


def test_conv_is_invariant_to_scaling_h():
    rng = np.random.default_rng(1)
    sup = path3()
    Z, We, Wn = rng.standard_normal((3, 2)), rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
    H = rng.random(4) + 0.1
    a = hog_conv_layer(sup, Tensor(Z), Tensor(H), Tensor(We), Tensor(Wn), 1.0, 1.0, True)
    b = hog_conv_layer(sup, Tensor(Z), Tensor(2 * H), Tensor(We), Tensor(Wn), 1.0, 1.0, True)
    np.testing.assert_allclose(a.value, b.value, atol=1e-14)


def test_zero_h_drops_neighbour_term():
    Z = np.array([[1.0], [2.0], [4.0]])
    out = hog_conv_layer(path3(), Tensor(Z), Tensor(np.zeros(4)), Tensor(np.eye(1)),
                         Tensor(np.eye(1)), 1.0, 1.0, activation=False)
    np.testing.assert_array_equal(out.value, Z)


def permute_graph(graph, perm):
    inv = np.argsort(perm)
    rows, cols = graph.adjacency.row_ids(), graph.adjacency.indices
    edges = np.stack([inv[rows], inv[cols]], axis=1)
    return Graph(adjacency_from_edges(edges, graph.n), graph.features[perm], graph.labels[perm],
                 graph.num_classes)


def test_permutation_equivariance(tiny_graph):
    perm = np.random.default_rng(5).permutation(tiny_graph.n)
    other = permute_graph(tiny_graph, perm)
    cfg = ModelConfig(alpha=0.0, beta=0.0, uniform_h=True, **SMALL)
    a, b = HogModel(tiny_graph, cfg), HogModel(other, cfg)
    for k in a.params:
        if k != "theta_t":
            b.params[k].value = a.params[k].value.copy()
    train = tiny_graph.splits[0].train
    ra = a.forward(train).R.value
    rb = b.forward(np.argsort(perm)[train]).R.value
    np.testing.assert_allclose(rb, ra[perm], atol=1e-12)


def test_forward_is_deterministic(tiny_graph):
    cfg = ModelConfig(seed=4, **SMALL)
    train = tiny_graph.splits[0].train
    a = HogModel(tiny_graph, cfg).forward(train)
    b = HogModel(tiny_graph, cfg).forward(train)
    for x, y in zip(a, b):
        assert np.array_equal(x.value, y.value)


def fake_result(R, B, Y):
    dummy = Tensor(np.zeros(1))
    return ForwardResult(Tensor(R), Tensor(B), Tensor(Y), dummy, dummy, dummy, dummy, dummy)


def test_joint_loss_examples():
    labels = np.arange(5)
    train = np.arange(5)
    uniform = np.full((5, 5), 0.2)
    total, parts = joint_loss(fake_result(uniform, np.eye(5), np.eye(5)), labels, train, 0, 0)
    assert total.item() == pytest.approx(math.log(5), abs=1e-11)
    total, _ = joint_loss(fake_result(np.eye(5), np.eye(5), np.eye(5)), labels, train, 1, 1)
    assert total.item() <= 3e-11
    total, parts = joint_loss(fake_result(uniform, uniform, uniform), labels, train, 1, 1)
    assert total.item() == pytest.approx(3 * math.log(5), abs=1e-10)
    assert set(parts) == {"gcn", "mlp", "lp"}
    with pytest.raises(ValueError):
        joint_loss(fake_result(uniform, uniform, uniform), labels, np.array([], int), 1, 1)


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_h_symmetric_and_s_in_unit_interval(seed):
    g = generate_synthetic(20, 3, 0.4, 4.0, 4, 1.0, seed=seed % 50, split_count=1)
    model = HogModel(g, ModelConfig(seed=seed, **SMALL))
    model.params["theta_t"].value = np.random.default_rng(seed).standard_normal(model.num_pairs)
    out = model.forward(g.splits[0].train)
    H = edges_to_dense(model.support, out.H.value)
    np.testing.assert_allclose(H, H.T, atol=1e-14)
    assert np.all(out.S.value > 0) and np.all(out.S.value <= 1 + 1e-12)


def test_end_to_end_gradients(tiny_graph):
    model = HogModel(tiny_graph, ModelConfig(**SMALL))
    model.params["theta_t"].value = np.random.default_rng(2).standard_normal(model.num_pairs)
    train = tiny_graph.splits[0].train
    err = finite_diff_check(lambda: model.loss(train)[0], model.params, probe_count=10)
    assert err <= 1e-4


def test_checkpoint_roundtrip(tiny_graph, tmp_path):
    model = HogModel(tiny_graph, ModelConfig(k=3, lp_iterations=2, **SMALL))
    model.params["theta_t"].value = np.random.default_rng(0).standard_normal(model.num_pairs)
    path = save_checkpoint(model, tmp_path / "m.npz")
    back = load_checkpoint(path, tiny_graph)
    assert back.config == model.config
    for k in model.params:
        assert np.array_equal(back.params[k].value, model.params[k].value)
    train = tiny_graph.splits[0].train
    assert np.array_equal(back.forward(train).R.value, model.forward(train).R.value)


def test_checkpoint_rejects_other_graph(tiny_graph, tmp_path):
    path = save_checkpoint(HogModel(tiny_graph, ModelConfig(**SMALL)), tmp_path / "m.npz")
    other = generate_synthetic(15, 3, 0.5, 4.0, 6, 1.0, seed=3)
    with pytest.raises(ValueError):
        load_checkpoint(path, other)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(k=0)
    with pytest.raises(ValueError):
        ModelConfig(alpha=-1)
    assert ModelConfig.from_dict({"k": 3, "unknown": 1}).k == 3


def test_sparse_features_path_matches_dense():
    g = generate_synthetic(12, 3, 0.5, 4.0, 6, 1.0, seed=3)
    X = g.features.copy()
    cut = np.quantile(np.abs(X), 0.8)
    X[np.abs(X) < cut] = 0.0  # 20% density switches to the sparse path
    sparse_g = Graph(g.adjacency, X, g.labels, g.num_classes, g.splits)
    model = HogModel(sparse_g, ModelConfig(**SMALL))
    assert isinstance(model.features, SparseMatrix)
    train = g.splits[0].train
    R = dense_forward(model, train)[0]
    np.testing.assert_allclose(model.forward(train).R.value, R, atol=1e-12)
    err = finite_diff_check(lambda: model.loss(train)[0], model.params, probe_count=6)
    assert err <= 1e-4
