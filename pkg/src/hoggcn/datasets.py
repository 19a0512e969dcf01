"""Plain-text dataset directories.

Layout (UTF-8, tab separated)::

    meta.json     {"n": int, "f": int, "C": int, "name": str}
    edges.tsv     u<TAB>v per line, 0-based; symmetrized and deduplicated on load
    features.tsv  n lines of f values
    labels.tsv    n lines, one integer each
    splits.json   optional list of {"seed", "train", "val", "test"}
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .graph import Graph, GraphError, Split, adjacency_from_edges, generate_splits

DEFAULT_SPLIT_COUNT = 10
DEFAULT_SPLIT_SEED = 0


class DatasetError(ValueError):
    pass


def _require(path: Path) -> Path:
    if not path.is_file():
        raise DatasetError(f"{path}: missing file")
    return path


def _lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line:
                yield lineno, line


def load_dataset(directory, split_count: int = DEFAULT_SPLIT_COUNT,
                 split_seed: int = DEFAULT_SPLIT_SEED) -> Graph:
    """Read and validate a dataset directory. Splits are generated when splits.json is absent."""
    root = Path(directory)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a directory")
    meta_path = _require(root / "meta.json")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        n, f, num_classes = int(meta["n"]), int(meta["f"]), int(meta["C"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DatasetError(f"{meta_path}: malformed metadata ({exc})") from None
    name = str(meta.get("name", root.name))

    path = _require(root / "labels.tsv")
    labels = np.empty(n, dtype=np.int64)
    count = 0
    for lineno, line in _lines(path):
        if count >= n:
            raise DatasetError(f"{path}:{lineno}: more than n={n} labels")
        try:
            value = int(line)
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: not an integer label: {line!r}") from None
        if not 0 <= value < num_classes:
            raise DatasetError(f"{path}:{lineno}: label {value} out of range [0, {num_classes})")
        labels[count] = value
        count += 1
    if count != n:
        raise DatasetError(f"{path}: expected {n} labels, found {count}")

    path = _require(root / "features.tsv")
    features = np.empty((n, f), dtype=np.float64)
    count = 0
    for lineno, line in _lines(path):
        if count >= n:
            raise DatasetError(f"{path}:{lineno}: more than n={n} feature rows")
        parts = line.split("\t")
        if len(parts) != f:
            raise DatasetError(f"{path}:{lineno}: expected {f} values, found {len(parts)}")
        try:
            row = [float(p) for p in parts]
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from None
        if not all(math.isfinite(x) for x in row):
            raise DatasetError(f"{path}:{lineno}: non-finite feature value")
        features[count] = row
        count += 1
    if count != n:
        raise DatasetError(f"{path}: expected {n} feature rows, found {count}")

    path = _require(root / "edges.tsv")
    edges = []
    for lineno, line in _lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise DatasetError(f"{path}:{lineno}: expected 'u<TAB>v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
        if not (0 <= u < n and 0 <= v < n):
            raise DatasetError(f"{path}:{lineno}: node id out of range [0, {n})")
        edges.append((u, v))
    adjacency = adjacency_from_edges(np.array(edges, dtype=np.int64).reshape(-1, 2), n)

    splits = []
    split_path = root / "splits.json"
    if split_path.is_file():
        try:
            raw = json.loads(split_path.read_text(encoding="utf-8"))
            splits = [Split(s["train"], s["val"], s["test"], int(s["seed"])) for s in raw]
        except (ValueError, KeyError, TypeError) as exc:
            raise DatasetError(f"{split_path}: malformed splits ({exc})") from None
    try:
        graph = Graph(adjacency, features, labels, num_classes, tuple(splits), name)
        if not splits:
            graph = graph.with_splits(generate_splits(graph, split_count, split_seed))
    except GraphError as exc:
        raise DatasetError(f"{root}: {exc}") from None
    return graph


def save_splits(splits, path) -> None:
    payload = [{"seed": int(s.seed), "train": s.train.tolist(), "val": s.val.tolist(),
                "test": s.test.tolist()} for s in splits]
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def save_dataset(graph: Graph, directory) -> Path:
    """Write `graph` in the directory layout read by `load_dataset` (lossless for doubles)."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"n": graph.n, "f": graph.num_features, "C": graph.num_classes, "name": graph.name}
    (root / "meta.json").write_text(json.dumps(meta) + "\n", encoding="utf-8")
    adj = graph.adjacency
    rows = adj.row_ids()
    upper = rows < adj.indices
    with open(root / "edges.tsv", "w", encoding="utf-8") as fh:
        for u, v in zip(rows[upper].tolist(), adj.indices[upper].tolist()):
            fh.write(f"{u}\t{v}\n")
    with open(root / "features.tsv", "w", encoding="utf-8") as fh:
        for row in graph.features:
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")
    with open(root / "labels.tsv", "w", encoding="utf-8") as fh:
        fh.writelines(f"{y}\n" for y in graph.labels.tolist())
    if graph.splits:
        save_splits(graph.splits, root / "splits.json")
    return root
