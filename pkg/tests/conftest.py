from __future__ import annotations

import itertools
import sys
from pathlib import Path

import numpy as np
import pytest

from cascadehist.schema import Dataset, Schema
from cascadehist.tree import Tree

sys.path.insert(0, str(Path(__file__).parent))


def make_schema(qs, ordinal=False) -> Schema:
    if isinstance(ordinal, bool):
        ordinal = [ordinal] * len(qs)
    return Schema.from_dict({"features": [
        {"name": f"f{j}", "categories": [str(c) for c in range(q)], "ordinal": o}
        for j, (q, o) in enumerate(zip(qs, ordinal))
    ]})


def small_schemas():
    """Every schema with p <= 2, q_i in {2, 3}, over all ordinal flags."""
    out = []
    for p in (1, 2):
        for qs in itertools.product((2, 3), repeat=p):
            for flags in itertools.product((False, True), repeat=p):
                out.append(make_schema(qs, list(flags)))
    return out


def random_tree(schema: Schema, rng, max_depth: int = 4, stop: float = 0.3) -> Tree:
    """Random valid tree: random feature, random partition into >= 2 blocks
    (contiguous runs for ordinal features)."""

    def grow(sigma, depth):
        cands = [j for j in range(schema.p) if len(sigma[j]) >= 2]
        if depth == 0 or not cands or rng.random() < stop:
            return None
        j = cands[rng.integers(len(cands))]
        vals = list(sigma[j])
        if schema.features[j].ordinal:
            k = int(rng.integers(2, len(vals) + 1))
            cuts = sorted(rng.choice(np.arange(1, len(vals)), size=k - 1, replace=False).tolist())
            groups = [tuple(vals[a:b]) for a, b in zip([0] + cuts, cuts + [len(vals)])]
        else:
            while True:
                labels = rng.integers(0, len(vals), size=len(vals))
                if len(set(labels.tolist())) >= 2:
                    break
            groups = [tuple(v for v, lab in zip(vals, labels) if lab == g) for g in sorted(set(labels.tolist()))]
        return (j, tuple((g, grow(sigma[:j] + (g,) + sigma[j + 1:], depth - 1)) for g in groups))

    root = tuple(tuple(range(f.q)) for f in schema.features)
    return Tree(schema, grow(root, max_depth))


def random_dataset(schema: Schema, rng, n: int, skew: float | None = None) -> Dataset:
    pts = schema.domain_points()
    if skew is None:
        idx = rng.integers(0, len(pts), size=n)
    else:
        idx = rng.choice(len(pts), size=n, p=rng.dirichlet(np.full(len(pts), skew)))
    return Dataset(schema, pts[idx])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
