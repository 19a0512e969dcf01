"""Convert the raw Cora release (cora.content / cora.cites) into a hoggcn dataset directory.

``cora.content`` lines are ``paper_id<TAB>w1 ... w1433<TAB>class_name``;
``cora.cites`` lines are ``cited<TAB>citing``. Paper ids are remapped to
0..n-1 in file order and class names to integers in sorted order.

    python scripts/convert_planetoid.py raw/cora data/cora
"""
import argparse
from pathlib import Path

import numpy as np

from hoggcn.datasets import save_dataset
from hoggcn.graph import Graph, adjacency_from_edges, generate_splits


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("raw", type=Path)
    p.add_argument("out", type=Path)
    p.add_argument("--name", default="cora")
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    ids, feats, names = [], [], []
    with open(args.raw / "cora.content", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                ids.append(parts[0])
                feats.append([float(x) for x in parts[1:-1]])
                names.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    classes = sorted(set(names))
    labels = np.array([classes.index(c) for c in names])

    edges, dropped = [], 0
    with open(args.raw / "cora.cites", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) < 2:
                continue
            if parts[0] in index and parts[1] in index:
                edges.append((index[parts[0]], index[parts[1]]))
            else:
                dropped += 1
    graph = Graph(adjacency_from_edges(np.array(edges), len(ids)), np.array(feats), labels,
                  len(classes), name=args.name)
    graph = graph.with_splits(generate_splits(graph, args.splits, args.seed))
    save_dataset(graph, args.out)
    print(f"{args.out}: n={graph.n} f={graph.num_features} C={graph.num_classes} "
          f"edges={graph.num_edges} (dropped {dropped} citations to unknown papers)")


if __name__ == "__main__":
    main()
