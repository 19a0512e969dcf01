"""Convert a WebKB graph (geom-gcn text layout) into a hoggcn dataset directory.

Input directory holds ``out1_node_feature_label.txt`` (``id<TAB>f1,f2,...<TAB>label``
after a header line) and ``out1_graph_edges.txt`` (``u<TAB>v`` after a header).

WebKB graphs contain classes too small for the stratified split rule (Texas has a
class with one node), so this script writes its own splits.json: the usual
floor-rounded 48/32/20 per class, except that classes with fewer than three
nodes go entirely to train.

    python scripts/convert_webkb.py raw/texas data/texas --name texas
"""
import argparse
from pathlib import Path

import numpy as np

from hoggcn.datasets import save_dataset
from hoggcn.graph import TRAIN_FRACTION, VAL_FRACTION, Graph, Split, adjacency_from_edges


def read_nodes(path):
    ids, feats, labels = [], [], []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if not line.strip():
                continue
            node, feat, label = line.rstrip("\n").split("\t")
            ids.append(int(node))
            feats.append([float(x) for x in feat.split(",")])
            labels.append(int(label))
    order = np.argsort(ids)
    if not np.array_equal(np.asarray(ids)[order], np.arange(len(ids))):
        raise SystemExit(f"{path}: node ids are not 0..n-1")
    return np.asarray(feats)[order], np.asarray(labels)[order]


def read_edges(path):
    edges = np.loadtxt(path, dtype=np.int64, skiprows=1, ndmin=2)
    return edges[:, :2]


def tolerant_splits(labels, count, seed):
    splits = []
    for attempt in range(count):
        rng = np.random.default_rng([seed, attempt])
        train, val, test = [], [], []
        for c in np.unique(labels):
            nodes = rng.permutation(np.flatnonzero(labels == c))
            if nodes.size < 3:
                train.extend(nodes.tolist())
                continue
            n_tr = max(1, int(np.floor(TRAIN_FRACTION * nodes.size)))
            n_va = int(np.floor(VAL_FRACTION * nodes.size))
            train.extend(nodes[:n_tr].tolist())
            val.extend(nodes[n_tr:n_tr + n_va].tolist())
            test.extend(nodes[n_tr + n_va:].tolist())
        splits.append(Split(train, val, test, attempt))
    return splits


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("raw", type=Path)
    p.add_argument("out", type=Path)
    p.add_argument("--name", default=None)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    features, labels = read_nodes(args.raw / "out1_node_feature_label.txt")
    edges = read_edges(args.raw / "out1_graph_edges.txt")
    adjacency = adjacency_from_edges(edges, labels.size)
    C = int(labels.max()) + 1
    graph = Graph(adjacency, features, labels, C,
                  tuple(tolerant_splits(labels, args.splits, args.seed)),
                  args.name or args.raw.name)
    save_dataset(graph, args.out)
    print(f"{args.out}: n={graph.n} f={graph.num_features} C={C} edges={graph.num_edges} "
          f"class sizes={np.bincount(labels).tolist()}")


if __name__ == "__main__":
    main()
