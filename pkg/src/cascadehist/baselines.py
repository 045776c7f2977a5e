"""Full-histogram baseline and the fixed synthetic datasets."""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .schema import Dataset, Schema
from .tree import LeafStats


class FullHistogram:
    """One unit-volume bin per observed configuration.

    Unobserved configurations fall outside every bin (``leaf_index`` -1)
    and get density 0.
    """

    def __init__(self, schema: Schema, configs, counts):
        self.schema = schema
        self.configs = np.asarray(configs, dtype=np.int64).reshape(-1, schema.p)
        self.counts = np.asarray(counts, dtype=np.int64)
        if len(self.configs) != len(self.counts):
            raise ValueError("configs and counts differ in length")
        self._index = {tuple(r): k for k, r in enumerate(self.configs.tolist())}

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def unobserved_cells(self) -> int:
        return self.schema.domain_size - len(self.configs)

    def leaf_index(self, points) -> np.ndarray:
        X = np.asarray(points, dtype=np.int64).reshape(-1, self.schema.p)
        return np.array([self._index.get(tuple(r), -1) for r in X.tolist()], dtype=np.int64)

    def stats(self) -> LeafStats:
        k = len(self.counts)
        return LeafStats(tuple(range(k)), self.counts.copy(), (1,) * k, self.n)


def fit_full_histogram(data: Dataset):
    """Empirical frequencies n_x / n, packaged as a fitted density."""
    from .evaluation import FittedDensity

    if data.n < 1:
        raise ValueError("empty dataset")
    hist = FullHistogram(data.schema, data.unique_rows, data.weights)
    return FittedDensity(hist, hist.stats())


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

SPARSE_TREE_COUNTS = {
    ("1", "2", "1"): 100,
    ("1", "2", "2"): 100,
    ("2", "1", "1"): 100,
    ("2", "1", "2"): 400,
    ("2", "2", "2"): 300,
}

# Six-leaf generating tree: x1, then x2 on both sides, then x3 under x1 = 2.
SPARSE_TREE_TRUTH = (0, (
    ((0,), (1, (((0,), None), ((1,), None)))),
    ((1,), (1, (
        ((0,), (2, (((0,), None), ((1,), None)))),
        ((1,), (2, (((0,), None), ((1,), None)))),
    ))),
))


def sparse_tree_schema() -> Schema:
    return Schema.from_dict({"features": [
        {"name": f"x{j}", "categories": ["1", "2"]} for j in (1, 2, 3)
    ]})


def gen_sparse_tree_dataset() -> Dataset:
    """The 1000-point, three-binary-feature dataset, rows sorted by configuration."""
    schema = sparse_tree_schema()
    rows = []
    for labels in sorted(SPARSE_TREE_COUNTS):
        rows.extend([schema.encode(labels)] * SPARSE_TREE_COUNTS[labels])
    return Dataset(schema, np.array(rows))


def extreme_uniform_schema() -> Schema:
    return Schema.from_dict({"features": [
        {"name": "x", "categories": [str(v) for v in range(1, 101)], "ordinal": True}
    ]})


def gen_extreme_uniform() -> Dataset:
    """The integers 1..100, one point each."""
    return Dataset(extreme_uniform_schema(), np.arange(100).reshape(-1, 1))


def titanic_schema() -> Schema:
    """Schema for the passenger table: sex, age group and class."""
    text = (resources.files("cascadehist") / "data" / "titanic.schema.json").read_text("utf-8")
    return Schema.from_dict(json.loads(text))


GENERATORS = {
    "sparse-tree": gen_sparse_tree_dataset,
    "extreme-uniform": gen_extreme_uniform,
}
