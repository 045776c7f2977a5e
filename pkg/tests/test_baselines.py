import numpy as np
import pytest
from conftest import make_schema

from cascadehist.baselines import (
    SPARSE_TREE_COUNTS,
    FullHistogram,
    extreme_uniform_schema,
    fit_full_histogram,
    gen_extreme_uniform,
    gen_sparse_tree_dataset,
    titanic_schema,
)
from cascadehist.evaluation import test_log_likelihood
from cascadehist.schema import Dataset


def _count(data, labels):
    x = data.schema.encode(labels)
    return int(np.all(data.rows == x, axis=1).sum())


def test_sparse_tree_dataset():
    d = gen_sparse_tree_dataset()
    assert d.n == 1000
    assert _count(d, ("2", "1", "2")) == 400
    assert _count(d, ("1", "1", "1")) == 0
    for labels, c in SPARSE_TREE_COUNTS.items():
        assert _count(d, labels) == c


def test_extreme_uniform_dataset():
    d = gen_extreme_uniform()
    assert d.n == 100 and d.schema == extreme_uniform_schema()
    assert np.bincount(d.rows[:, 0], minlength=100).tolist() == [1] * 100


def test_histogram_bins():
    d = gen_extreme_uniform().subset(np.arange(0, 100, 2))
    h = fit_full_histogram(d)
    assert h.n_leaves == 50
    assert np.allclose(h.stats.densities, 1 / 50)
    assert h.model.unobserved_cells == 50
    assert h.density(np.array([[1]]))[0] == 0.0

    s = make_schema([3, 2])
    one = fit_full_histogram(Dataset(s, [[2, 1]] * 4))
    assert one.n_leaves == 1 and one.stats.densities[0] == 1.0


def test_titanic_schema_has_at_most_16_bins(rng):
    s = titanic_schema()
    assert s.domain_size == 16
    pts = s.domain_points()
    d = Dataset(s, pts[rng.integers(0, 16, size=300)])
    assert fit_full_histogram(d).n_leaves <= 16


def test_histogram_halves_do_not_overlap():
    d = gen_extreme_uniform()
    h = fit_full_histogram(d.subset(np.arange(50)))
    assert test_log_likelihood(h, d.subset(np.arange(50, 100))) == -np.inf


def test_histogram_validation():
    s = make_schema([2])
    with pytest.raises(ValueError):
        FullHistogram(s, [[0], [1]], [3])
    with pytest.raises(ValueError):
        fit_full_histogram(Dataset(s, np.zeros((0, 1), dtype=int)))
