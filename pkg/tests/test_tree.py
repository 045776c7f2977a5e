import itertools
from fractions import Fraction

import numpy as np
import pytest
from conftest import make_schema, random_dataset, random_tree, small_schemas
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadehist.baselines import SPARSE_TREE_COUNTS, SPARSE_TREE_TRUTH, gen_sparse_tree_dataset, sparse_tree_schema
from cascadehist.schema import Dataset
from cascadehist.tree import (
    Tree,
    TreeError,
    assign_leaf,
    density,
    leaf_counts,
    leaf_volume,
    root_tree,
    trees_equivalent,
)


def worked_example_tree():
    schema = make_schema([7, 4, 6, 3])
    inner = (2, (((0, 5), None), ((1, 2, 3, 4), None)))
    x1b = (0, (((3, 4), inner), ((5,), None)))
    x2 = (1, (((0, 1), x1b), ((2, 3), None)))
    return Tree(schema, (0, (((0, 1, 2, 6), None), ((3, 4, 5), x2))))


def test_root_volume_is_domain_size():
    t = root_tree(make_schema([7, 4, 6, 3]))
    assert leaf_volume(t, 0) == 504
    assert assign_leaf(t, [6, 3, 5, 2]) == 0


def test_worked_example_leaf_sigmas():
    t = worked_example_tree()
    leaf = assign_leaf(t, [3, 0, 0, 0])
    assert t.sigmas[leaf] == ((3, 4), (0, 1), (0, 5), (0, 1, 2))
    assert leaf_volume(t, leaf) == 24
    with pytest.raises(TreeError):
        leaf_volume(t, 0)


def test_singleton_leaf_volume_is_one():
    s = make_schema([2, 2])
    t = Tree(s).full_split(0, 0)
    t = t.full_split(t.leaves[0], 1)
    assert leaf_volume(t, t.leaves[0]) == 1


@pytest.mark.parametrize("struct, msg", [
    ((0, (((0, 1, 2), None),)), "at least 2"),
    ((0, (((0,), None), ((0, 1, 2), None))), "overlap"),
    ((0, (((0,), None), ((1,), None))), "cover"),
    ((5, (((0,), None), ((1, 2), None))), "out of range"),
    ((0, (((), None), ((0, 1, 2), None))), "empty"),
])
def test_invalid_structures_rejected(struct, msg):
    with pytest.raises(TreeError, match=msg):
        Tree(make_schema([3]), struct)


def test_ordinal_branches_must_be_contiguous():
    s = make_schema([4], ordinal=True)
    Tree(s, (0, (((0, 1), None), ((2, 3), None))))
    with pytest.raises(TreeError, match="contiguous"):
        Tree(s, (0, (((0, 2), None), ((1, 3), None))))


def test_repeated_refinement_of_feature_allowed():
    t = worked_example_tree()
    path_feats = []
    node = assign_leaf(t, [3, 0, 0, 0])
    while t.parents[node] >= 0:
        node = t.parents[node]
        path_feats.append(t.features[node])
    assert path_feats.count(0) == 2


def test_leaf_counts_examples():
    s = make_schema([100])
    d = Dataset(s, np.arange(100).reshape(-1, 1))
    st_ = leaf_counts(root_tree(s), d)
    assert st_.counts.tolist() == [100]
    assert density(root_tree(s), st_, [42]) == pytest.approx(0.01)

    s = make_schema([6, 2])
    t = Tree(s, (1, (((0,), None), ((1,), None))))
    d = Dataset(s, np.array([[0, 0]] * 100 + [[0, 1]] * 900))
    stats = leaf_counts(t, d)
    assert stats.densities[0] == pytest.approx(100 / 6000)
    s3 = make_schema([3])
    t3 = Tree(s3, (0, (((0,), None), ((1, 2), None))))
    stats3 = leaf_counts(t3, Dataset(s3, [[1], [2]]))
    assert stats3.densities[0] == 0.0


def test_exhaustive_assignment_matches_volumes(rng):
    for schema in small_schemas() + [make_schema([3, 2, 4], [True, False, True])]:
        for _ in range(10):
            t = random_tree(schema, rng)
            pts = schema.domain_points()
            pos = t.leaf_index(pts)
            assert (pos >= 0).all()
            counts = np.bincount(pos, minlength=len(t.leaves))
            assert counts.tolist() == list(t.leaf_volumes)
            assert sum(t.leaf_volumes) == schema.domain_size


def test_density_normalizes_exactly(rng):
    schema = make_schema([3, 3, 2])
    for _ in range(20):
        t = random_tree(schema, rng)
        stats = leaf_counts(t, random_dataset(schema, rng, 37))
        assert sum(f * v for f, v in zip(stats.exact_densities(), stats.volumes)) == Fraction(1)
        assert abs(float(np.dot(stats.densities, stats.volumes)) - 1) < 1e-12
        assert int(stats.counts.sum()) == 37


def test_equivalence_reflexive_and_density_level():
    s = make_schema([2])
    d = Dataset(s, [[0], [1]])
    root, split = Tree(s), Tree(s, (0, (((0,), None), ((1,), None))))
    sr, ss = leaf_counts(root, d), leaf_counts(split, d)
    assert trees_equivalent(root, root, sr, sr)
    assert trees_equivalent(root, split, sr, ss)


def test_truth_minus_one_split_not_equivalent():
    data = gen_sparse_tree_dataset()
    truth = Tree(data.schema, SPARSE_TREE_TRUTH)
    assert len(truth.leaves) == 6
    # drop the deepest split: collapse an internal node whose children are all leaves
    node = next(i for i in truth.internal_nodes if all(truth.is_leaf(c) for c in truth.children[i]))
    pruned = truth.collapse(node)
    assert not trees_equivalent(truth, pruned, leaf_counts(truth, data), leaf_counts(pruned, data))


def test_equivalence_guard():
    s = make_schema([2] * 21)
    t = Tree(s)
    st_ = leaf_counts(t, Dataset(s, np.zeros((1, 21), dtype=int)))
    with pytest.raises(TreeError, match="too large"):
        trees_equivalent(t, t, st_, st_)


def test_equivalence_is_equivalence_relation(rng):
    schema = make_schema([2, 3])
    d = random_dataset(schema, rng, 12)
    trees = [random_tree(schema, rng) for _ in range(12)]
    stats = [leaf_counts(t, d) for t in trees]
    eq = lambda a, b: trees_equivalent(trees[a], trees[b], stats[a], stats[b])
    for a, b, c in itertools.product(range(12), repeat=3):
        if eq(a, b) and eq(b, c):
            assert eq(a, c)
        assert eq(a, b) == eq(b, a)


def test_edits_return_valid_trees():
    s = make_schema([3, 3])
    t = Tree(s).full_split(0, 0)
    assert len(t.leaves) == 3
    t2 = t.merge(0, t.children[0][0], t.children[0][1])
    assert len(t2.leaves) == 2
    t3 = t2.merge(0, *t2.children[0])
    assert t3 == Tree(s)
    assert t.collapse(0) == Tree(s)


def test_sparse_tree_counts_cover_domain():
    assert sum(SPARSE_TREE_COUNTS.values()) == 1000
    assert sparse_tree_schema().domain_size == 8


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), q=st.lists(st.integers(2, 4), min_size=1, max_size=3))
def test_partition_property(seed, q):
    rng = np.random.default_rng(seed)
    schema = make_schema(q, [bool(rng.integers(2)) for _ in q])
    t = random_tree(schema, rng)
    assert sum(t.leaf_volumes) == schema.domain_size
    # sigma of every node is the intersection of its ancestors' conditions
    for i in range(1, t.n_nodes):
        par = t.parents[i]
        j = t.features[par]
        assert set(t.sigmas[i][j]) <= set(t.sigmas[par][j])
        assert t.sigmas[i][j] == t.subsets[i]
