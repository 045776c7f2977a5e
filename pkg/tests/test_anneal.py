import numpy as np
import pytest
from conftest import make_schema, random_dataset, random_tree

from cascadehist.anneal import (
    AnnealConfig,
    SearchGuardError,
    anneal,
    anneal_chains,
    count_trees,
    enumerate_trees,
    propose_neighbor,
)
from cascadehist.baselines import gen_sparse_tree_dataset
from cascadehist.posterior import BranchModelHyper, LeafModelHyper, branch_objective, leaf_objective
from cascadehist.tree import Tree


class FixedU:
    """Generator stand-in whose first ``random()`` returns ``u``."""

    def __init__(self, u, seed=0):
        self.u = [u]
        self.rng = np.random.default_rng(seed)

    def random(self):
        return self.u.pop() if self.u else self.rng.random()

    def integers(self, *a, **k):
        return self.rng.integers(*a, **k)


EPS = 0.05
W = (1 - EPS) / 4
MOVE_U = {1: W / 2, 2: 1.5 * W, 3: 2.5 * W, 4: 3.5 * W, 5: 1 - EPS / 2}

# counts verified by hand for the small cases and by move-closure below
TREE_COUNTS = [
    (([2], False), 2),
    (([3], False), 8),
    (([3], True), 6),
    (([2, 2], False), 9),
    (([2, 3], False), 127),
    (([2, 3], True), 81),
    (([3, 3], False), 7121),
    (([3, 3], True), 2377),
]


@pytest.mark.parametrize("shape, expected", TREE_COUNTS)
def test_tree_counts(shape, expected):
    schema = make_schema(*shape)
    assert count_trees(schema) == expected
    if expected < 1000:
        trees = list(enumerate_trees(schema))
        assert len(trees) == expected
        assert len({t.structure for t in trees}) == expected


@pytest.mark.parametrize("shape", [([3], False), ([2, 2], False), ([2, 3], False), ([2, 3], True)])
def test_move_closure_reaches_every_enumerated_tree(shape):
    schema = make_schema(*shape)
    rng = np.random.default_rng(0)
    seen = {Tree(schema).structure: Tree(schema)}
    frontier = list(seen.values())
    while frontier:
        nxt = []
        for t in frontier:
            for _ in range(300):
                c = propose_neighbor(t, rng, EPS)
                if c.structure not in seen:
                    seen[c.structure] = c
                    nxt.append(c)
        frontier = nxt
    assert set(seen) == {t.structure for t in enumerate_trees(schema)}


def test_enumeration_single_binary_feature():
    s = make_schema([2])
    assert [t.structure for t in enumerate_trees(s)] == [None, (0, (((0,), None), ((1,), None)))]


def test_enumeration_guard_and_depth_cap():
    with pytest.raises(SearchGuardError):
        list(enumerate_trees(make_schema([4, 4, 4])))
    s = make_schema([3])
    assert all(t.depth() <= 1 for t in enumerate_trees(s, depth_cap=1))
    assert count_trees(s, depth_cap=1) == 5


def test_move1_on_root_is_skipped():
    t = Tree(make_schema([4]))
    assert propose_neighbor(t, FixedU(MOVE_U[1]), EPS) is t
    assert propose_neighbor(t, FixedU(MOVE_U[5]), EPS) is t
    assert propose_neighbor(t, FixedU(MOVE_U[4]), EPS) is t


def test_move2_full_split():
    t = Tree(make_schema([4]))
    out = propose_neighbor(t, FixedU(MOVE_U[2]), EPS)
    assert out.structure == (0, tuple(((v,), None) for v in range(4)))


def test_move3_ordinal_is_contiguous():
    t = Tree(make_schema([4], ordinal=True))
    seen = set()
    for seed in range(200):
        out = propose_neighbor(t, FixedU(MOVE_U[3], seed), EPS)
        blocks = tuple(b[0] for b in out.structure[1])
        assert len(blocks) == 2
        seen.add(blocks)
    assert seen == {((0,), (1, 2, 3)), ((0, 1), (2, 3)), ((0, 1, 2), (3,))}


def test_move3_categorical_covers_all_two_block_partitions():
    t = Tree(make_schema([4]))
    seen = {tuple(b[0] for b in propose_neighbor(t, FixedU(MOVE_U[3], s), EPS).structure[1]) for s in range(400)}
    assert len(seen) == 7  # S(4, 2)


def test_fuzz_neighbors_are_valid():
    rng = np.random.default_rng(1)
    schema = make_schema([3, 4, 2, 3], [False, True, False, True])
    t = random_tree(schema, rng)
    for k in range(100_000):
        t = propose_neighbor(t, rng, EPS)
        if k % 1000 == 0:
            # Tree() validates partition, branch count and contiguity on construction
            assert Tree(schema, t.structure) == t
            assert sum(t.leaf_volumes) == schema.domain_size
        if k % 5000 == 0:
            t = random_tree(schema, rng)


def test_move2_is_reversible(rng):
    schema = make_schema([3, 3], [False, True])
    done = 0
    for seed in range(300):
        t = random_tree(schema, rng)
        out = propose_neighbor(t, FixedU(MOVE_U[2], seed), EPS)
        if out is t:
            continue
        done += 1
        # the split leaf is now a parent of leaves, so move 1 or 5 can undo it
        assert any(
            out.collapse(i) == t
            for i in out.internal_nodes
            if all(out.is_leaf(c) for c in out.children[i])
        )
    assert done > 100


def test_best_is_monotone_and_deterministic():
    data = gen_sparse_tree_dataset()
    f = leaf_objective(LeafModelHyper(5, 2))
    cfg = AnnealConfig(iterations=3000, seed=11)
    a, b = anneal(data, f, cfg), anneal(data, f, cfg)
    assert np.all(np.diff(a.best_trace) >= 0)
    assert a.score == a.best_trace[-1] == f(a.model, data)
    assert a.model == b.model and np.array_equal(a.trace, b.trace)
    c1 = anneal_chains(data, f, cfg, 3)
    c2 = anneal_chains(data, f, cfg, 3)
    assert c1.model == c2.model and len(c1.traces) == 3


def test_constant_objective_returns_initial_tree(rng):
    schema = make_schema([3, 2])
    data = random_dataset(schema, rng, 10)
    res = anneal(data, lambda t, d: 0.0, AnnealConfig(iterations=500))
    assert res.model == Tree(schema)
    warm = random_tree(schema, rng)
    res = anneal(data, lambda t, d: 0.0, AnnealConfig(iterations=500, warm_start=warm))
    assert res.model == warm


def test_warm_start_schema_mismatch(rng):
    data = random_dataset(make_schema([3, 2]), rng, 5)
    with pytest.raises(ValueError, match="schema"):
        anneal(data, lambda t, d: 0.0, AnnealConfig(iterations=5, warm_start=Tree(make_schema([2]))))


@pytest.mark.parametrize("kw", [
    dict(epsilon=0), dict(epsilon=1), dict(iterations=0), dict(restart_period=0),
    dict(initial_temperature=0), dict(cooling_rate=1.0),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        AnnealConfig(**kw)


def test_trace_csv(tmp_path, rng):
    data = random_dataset(make_schema([2, 2]), rng, 8)
    res = anneal(data, branch_objective(BranchModelHyper()), AnnealConfig(iterations=20))
    res.write_trace_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,current,best" and len(lines) == 21
