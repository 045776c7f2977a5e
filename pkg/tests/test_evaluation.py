import math

import numpy as np
import pytest
from conftest import make_schema, random_dataset, random_tree
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadehist.baselines import fit_full_histogram, gen_extreme_uniform, gen_sparse_tree_dataset
from cascadehist.evaluation import (
    NEG_INF,
    FittedDensity,
    is_neg_inf,
    loo_least_squares,
    loo_least_squares_integral,
    pointwise_histogram_log_likelihood,
    test_log_likelihood,
    training_log_likelihood,
)
from cascadehist.schema import Dataset
from cascadehist.tree import LeafStats, Tree, leaf_counts


def _fit(tree, data):
    return FittedDensity(tree, leaf_counts(tree, data))


def test_root_model_loglik():
    s = make_schema([100])
    train = Dataset(s, np.arange(100).reshape(-1, 1))
    test = Dataset(s, np.arange(50).reshape(-1, 1))
    assert test_log_likelihood(_fit(Tree(s), train), test) == pytest.approx(-230.258509, abs=1e-6)


def test_disjoint_histogram_is_neg_inf_and_smoothing_rescues():
    d = gen_extreme_uniform()
    train, test = d.subset(np.arange(50)), d.subset(np.arange(50, 100))
    hist = fit_full_histogram(train)
    val = test_log_likelihood(hist, test)
    assert is_neg_inf(val) and val == NEG_INF
    sm = test_log_likelihood(hist, test, smoothing=True)
    assert math.isfinite(sm) and sm > NEG_INF
    # alpha = 1 over 100 cells: unseen cells get 1 / (50 + 100)
    assert sm == pytest.approx(50 * math.log(1 / 150), abs=1e-9)


def test_schema_mismatch_rejected():
    s = make_schema([3])
    d = Dataset(s, [[0]])
    with pytest.raises(ValueError, match="schema"):
        test_log_likelihood(_fit(Tree(s), d), Dataset(make_schema([4]), [[0]]))


def test_loo_examples():
    single = LeafStats((0,), np.array([37]), (100,), 37)
    assert loo_least_squares(single) == pytest.approx(-0.01, abs=1e-12)
    two = LeafStats((1, 2), np.array([3, 7]), (1, 1), 10)
    expected = (0.3 - 2 * 2 / 9) * 0.3 + (0.7 - 2 * 6 / 9) * 0.7
    assert expected == pytest.approx(-0.486667, abs=1e-6)
    assert loo_least_squares(two) == pytest.approx(expected, abs=1e-12)
    with_empty = LeafStats((1, 2, 3), np.array([3, 7, 0]), (1, 1, 4), 10)
    assert loo_least_squares(with_empty) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        loo_least_squares(LeafStats((0,), np.array([1]), (2,), 1))


def test_loo_closed_form_equals_integral_form(rng):
    schema = make_schema([3, 3, 2], [False, True, False])
    for _ in range(100):
        t = random_tree(schema, rng)
        stats = leaf_counts(t, random_dataset(schema, rng, int(rng.integers(2, 60)), skew=0.5))
        assert abs(loo_least_squares(stats) - loo_least_squares_integral(stats)) < 1e-12


def test_smoothing_converges_as_alpha_shrinks(rng):
    schema = make_schema([3, 2])
    for _ in range(10):
        t = random_tree(schema, rng)
        train = random_dataset(schema, rng, 30)
        fitted = _fit(t, train)
        test = random_dataset(schema, rng, 20)
        if not np.all(fitted.density(test.rows) > 0):
            continue
        plain = test_log_likelihood(fitted, test)
        gaps = [abs(test_log_likelihood(fitted, test, smoothing=True, alpha=a) - plain) for a in (1e-2, 1e-4, 1e-6)]
        assert gaps[0] >= gaps[1] >= gaps[2] and gaps[2] < 1e-4


def test_smoothing_alpha_must_be_positive():
    s = make_schema([2])
    d = Dataset(s, [[0]])
    with pytest.raises(ValueError):
        test_log_likelihood(_fit(Tree(s), d), d, smoothing=True, alpha=0.0)


def test_pointwise_examples():
    s = make_schema([4, 2])
    assert pointwise_histogram_log_likelihood(Dataset(s, [[1, 1]] * 5)) == 0.0
    assert pointwise_histogram_log_likelihood(Dataset(s, [[1, 1], [0, 0]])) == pytest.approx(-1.386294, abs=1e-6)
    expected = 300 * math.log(0.1) + 400 * math.log(0.4) + 300 * math.log(0.3)
    assert pointwise_histogram_log_likelihood(gen_sparse_tree_dataset()) == pytest.approx(expected, abs=1e-9)


def test_training_loglik_matches_density():
    d = gen_sparse_tree_dataset()
    t = Tree(d.schema).full_split(0, 0)
    fitted = _fit(t, d)
    assert training_log_likelihood(fitted.stats) == pytest.approx(float(np.log(fitted.density(d.rows)).sum()), abs=1e-9)


def test_leaf_table():
    d = gen_sparse_tree_dataset()
    table = _fit(Tree(d.schema).full_split(0, 0), d).leaf_table()
    assert [r["n"] for r in table] == [200, 800]
    assert [r["volume"] for r in table] == [4, 4]
    assert sum(r["mass"] for r in table) == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 80))
def test_pointwise_bound_property(seed, n):
    rng = np.random.default_rng(seed)
    schema = make_schema([3, 2, 2], [bool(rng.integers(2)), False, True])
    data = random_dataset(schema, rng, n, skew=float(rng.uniform(0.2, 3)))
    t = random_tree(schema, rng)
    assert pointwise_histogram_log_likelihood(data) >= training_log_likelihood(leaf_counts(t, data)) - 1e-9
