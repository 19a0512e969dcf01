import json

import numpy as np
import pytest

from hoggcn.datasets import DatasetError, load_dataset, save_dataset
from hoggcn.graph import generate_synthetic


def write_dir(root, edges="0\t1\n1\t0\n2\t2\n1\t2\n4\t5\n", labels="0\n1\n0\n1\n0\n1\n",
              features="1\t0\n0\t1\n1\t1\n0.5\t-2\n0\t0\n3\t3\n", n=6, f=2, C=2):
    root.mkdir(exist_ok=True)
    (root / "meta.json").write_text(json.dumps({"n": n, "f": f, "C": C, "name": "toy"}))
    (root / "edges.tsv").write_text(edges)
    (root / "labels.tsv").write_text(labels)
    (root / "features.tsv").write_text(features)
    return root


def test_load_small_directory(tmp_path):
    g = load_dataset(write_dir(tmp_path / "toy"), split_count=2)
    assert (g.n, g.num_features, g.num_classes) == (6, 2, 2)
    dense = g.adjacency.to_dense()
    assert dense.sum() == 6 and dense[0, 1] == dense[1, 2] == 1 and dense[2, 2] == 0
    assert len(g.splits) == 2


def test_roundtrip(tmp_path):
    g = generate_synthetic(40, 3, 0.3, 4.0, 5, 1.0, seed=2, split_count=3)
    again = load_dataset(save_dataset(g, tmp_path / "syn"))
    assert again == g


@pytest.mark.parametrize("kwargs, fragment", [
    ({"labels": "0\n1\n5\n1\n0\n1\n"}, "labels.tsv:3"),
    ({"edges": "0\t1\n0\t9\n"}, "edges.tsv:2"),
    ({"features": "1\t0\n0\tnan\n1\t1\n0\t0\n0\t0\n0\t0\n"}, "features.tsv:2"),
    ({"features": "1\t0\n0\n1\t1\n0\t0\n0\t0\n0\t0\n"}, "features.tsv:2"),
])
def test_errors_name_file_and_line(tmp_path, kwargs, fragment):
    root = write_dir(tmp_path / "bad", **kwargs)
    with pytest.raises(DatasetError, match=fragment):
        load_dataset(root)


def test_missing_file(tmp_path):
    root = write_dir(tmp_path / "bad")
    (root / "labels.tsv").unlink()
    with pytest.raises(DatasetError, match="labels.tsv: missing file"):
        load_dataset(root)


def test_explicit_splits_are_used(tmp_path):
    root = write_dir(tmp_path / "toy")
    (root / "splits.json").write_text(json.dumps(
        [{"seed": 7, "train": [0, 1], "val": [2, 3], "test": [4, 5]}]))
    g = load_dataset(root)
    assert len(g.splits) == 1 and g.splits[0].seed == 7
    assert np.array_equal(g.splits[0].train, [0, 1])
