"""Simulated-annealing MAP search over trees, and an exhaustive tree enumerator."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import product
from typing import Callable

import numpy as np

from .schema import Dataset, Schema
from .tree import LeafStats, Tree, leaf_counts

MAX_ENUMERATED_TREES = 10**6


class SearchGuardError(RuntimeError):
    """A search or enumeration would exceed its configured size limit."""


@dataclass(frozen=True)
class AnnealConfig:
    """Search settings.

    The temperature starts at ``initial_temperature`` and is multiplied by
    ``cooling_rate`` every iteration; with ``reheat`` it returns to the
    initial value at every restart. The defaults cool from 4 to about 0.01
    within one restart period.
    """

    epsilon: float = 0.05
    iterations: int = 10_000
    initial_temperature: float = 4.0
    cooling_rate: float = 0.9976
    restart_period: int = 2_500
    seed: int = 0
    warm_start: Tree | None = None
    reheat: bool = True

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.iterations < 1 or self.restart_period < 1:
            raise ValueError("iterations and restart_period must be positive")
        if not self.initial_temperature > 0:
            raise ValueError("initial_temperature must be positive")
        if not 0 < self.cooling_rate < 1:
            raise ValueError("cooling_rate must lie in (0, 1)")


@dataclass
class FitResult:
    """Outcome of a structure search.

    ``trace`` holds the current-state score per iteration and ``best_trace``
    the best-so-far score; multi-chain searches fill ``traces`` with one
    current-state trace per chain and report ``rhat``.
    """

    model: object
    score: float
    stats: LeafStats
    trace: np.ndarray
    best_trace: np.ndarray
    traces: list[np.ndarray] = field(default_factory=list)
    rhat: float | None = None
    accepted: int = 0
    iterations: int = 0

    def write_trace_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iteration,current,best\n")
            for i, (c, b) in enumerate(zip(self.trace, self.best_trace)):
                fh.write(f"{i},{c!r},{b!r}\n")


# ---------------------------------------------------------------------------
# neighbourhood moves
# ---------------------------------------------------------------------------

def _two_way_partition(values, ordinal: bool, rng) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Random split of ``values`` into two nonempty parts (contiguous for ordinal)."""
    if ordinal:
        cut = int(rng.integers(1, len(values)))
        return tuple(values[:cut]), tuple(values[cut:])
    # uniform over unordered 2-block partitions: pin the first value to part A
    while True:
        bits = rng.integers(0, 2, size=len(values) - 1)
        if bits.any():
            break
    a = (values[0],) + tuple(v for v, b in zip(values[1:], bits) if not b)
    b = tuple(v for v, bb in zip(values[1:], bits) if bb)
    return a, b


def _mergeable_pairs(tree: Tree) -> list[tuple[int, int, int]]:
    pairs = []
    for par in tree.internal_nodes:
        kids = tree.children[par]
        ordinal = tree.schema.features[tree.features[par]].ordinal
        for x in range(len(kids)):
            for y in range(x + 1, len(kids)):
                a, b = kids[x], kids[y]
                if ordinal:
                    sa, sb = tree.subsets[a], tree.subsets[b]
                    if sa[-1] + 1 != sb[0] and sb[-1] + 1 != sa[0]:
                        continue
                pairs.append((par, a, b))
    return pairs


def propose_neighbor(tree: Tree, rng: np.random.Generator, epsilon: float) -> Tree:
    """One random neighbourhood move; returns ``tree`` itself when the drawn
    move is impossible."""
    u = rng.random()
    w = (1.0 - epsilon) / 4.0
    schema = tree.schema
    if u < w:
        # collapse a parent whose children are all leaves
        cands = [
            i for i in tree.internal_nodes
            if all(tree.is_leaf(c) for c in tree.children[i])
        ]
        if not cands:
            return tree
        return tree.collapse(cands[rng.integers(len(cands))])
    if u < 2 * w:
        # full split of a leaf on a feature
        leaf = tree.leaves[rng.integers(len(tree.leaves))]
        feat = int(rng.integers(schema.p))
        if len(tree.sigmas[leaf][feat]) < 2:
            return tree
        return tree.full_split(leaf, feat)
    if u < 3 * w:
        # re-split any node in two on a random splittable feature
        node = int(rng.integers(tree.n_nodes))
        sig = tree.sigmas[node]
        feats = [j for j in range(schema.p) if len(sig[j]) >= 2]
        if not feats:
            return tree
        feat = feats[rng.integers(len(feats))]
        a, b = _two_way_partition(sig[feat], schema.features[feat].ordinal, rng)
        return tree.split(node, feat, (a, b))
    if u < 4 * w:
        pairs = _mergeable_pairs(tree)
        if not pairs:
            return tree
        par, a, b = pairs[rng.integers(len(pairs))]
        return tree.merge(par, a, b)
    # remove every child of a random internal node
    cands = tree.internal_nodes
    if not cands:
        return tree
    return tree.collapse(cands[rng.integers(len(cands))])


# ---------------------------------------------------------------------------
# annealing
# ---------------------------------------------------------------------------

Objective = Callable[[Tree, Dataset], float]


def anneal(data: Dataset, objective: Objective, config: AnnealConfig = AnnealConfig()) -> FitResult:
    """Metropolis simulated annealing with geometric cooling and periodic
    resets to either the best tree so far or the root-only tree."""
    rng = np.random.default_rng(config.seed)
    cache: dict = {}

    def score(t: Tree) -> float:
        s = cache.get(t.structure)
        if s is None:
            s = cache[t.structure] = objective(t, data)
        return s

    root = Tree(data.schema)
    current = config.warm_start if config.warm_start is not None else root
    if current.schema != data.schema:
        raise ValueError("warm start tree has a different schema")
    cur_score = score(current)
    best, best_score = current, cur_score
    temp = config.initial_temperature
    trace = np.empty(config.iterations)
    best_trace = np.empty(config.iterations)
    accepted = 0
    for it in range(config.iterations):
        if it and it % config.restart_period == 0:
            current = best if rng.random() < 0.5 else root
            cur_score = score(current)
            if config.reheat:
                temp = config.initial_temperature
        cand = propose_neighbor(current, rng, config.epsilon)
        if cand is not current:
            cand_score = score(cand)
            delta = cand_score - cur_score
            if delta >= 0 or rng.random() < math.exp(delta / temp):
                current, cur_score = cand, cand_score
                accepted += 1
                if cur_score > best_score:
                    best, best_score = current, cur_score
        trace[it] = cur_score
        best_trace[it] = best_score
        temp *= config.cooling_rate
    return FitResult(
        model=best,
        score=best_score,
        stats=leaf_counts(best, data),
        trace=trace,
        best_trace=best_trace,
        accepted=accepted,
        iterations=config.iterations,
    )


def anneal_chains(data: Dataset, objective: Objective, config: AnnealConfig, chains: int) -> FitResult:
    """Independent chains with sub-seeds of ``config.seed``; keeps the best.

    Ties go to the lowest chain index, so the result is deterministic.
    """
    seeds = np.random.SeedSequence(config.seed).generate_state(chains)
    best = None
    traces = []
    for s in seeds:
        cfg = replace(config, seed=int(s))
        res = anneal(data, objective, cfg)
        traces.append(res.trace)
        if best is None or res.score > best.score:
            best = res
    best.traces = traces
    return best


# ---------------------------------------------------------------------------
# enumeration oracle
# ---------------------------------------------------------------------------

def _set_partitions(values):
    """All partitions of ``values`` into nonempty blocks."""
    if len(values) == 1:
        yield [tuple(values)]
        return
    first, rest = values[0], values[1:]
    for part in _set_partitions(rest):
        yield [(first,)] + part
        for k in range(len(part)):
            yield part[:k] + [(first,) + part[k]] + part[k + 1:]


def _run_partitions(values):
    """Partitions of a run into contiguous pieces."""
    n = len(values)
    for mask in range(1 << (n - 1)):
        blocks, start = [], 0
        for k in range(n - 1):
            if mask >> k & 1:
                blocks.append(tuple(values[start:k + 1]))
                start = k + 1
        blocks.append(tuple(values[start:]))
        yield blocks


def _partitions(values, ordinal):
    gen = _run_partitions(values) if ordinal else _set_partitions(list(values))
    for blocks in gen:
        if len(blocks) >= 2:
            yield sorted(blocks)


def count_trees(schema: Schema, depth_cap: int | None = None, limit: int | None = None) -> int:
    """Number of distinct valid trees; counts depend only on the sizes of
    the allowed sets, so they are memoized on those sizes."""
    ordinal = tuple(f.ordinal for f in schema.features)
    cap = -1 if depth_cap is None else depth_cap

    @lru_cache(maxsize=None)
    def count(sizes, depth):
        total = 1
        if depth == 0:
            return total
        for j, s in enumerate(sizes):
            if s < 2:
                continue
            for blocks in _partitions(tuple(range(s)), ordinal[j]):
                prod = 1
                for blk in blocks:
                    prod *= count(sizes[:j] + (len(blk),) + sizes[j + 1:], depth - 1)
                total += prod
                if limit is not None and total > limit:
                    raise SearchGuardError(f"more than {limit} trees")
        return total

    return count(tuple(int(v) for v in schema.q), cap)


def enumerate_trees(schema: Schema, depth_cap: int | None = None):
    """Yield every structurally distinct valid tree of depth <= ``depth_cap``."""
    count_trees(schema, depth_cap, limit=MAX_ENUMERATED_TREES)
    ordinal = [f.ordinal for f in schema.features]

    def structs(sigma, depth):
        yield None
        if depth == 0:
            return
        for j, vals in enumerate(sigma):
            if len(vals) < 2:
                continue
            for blocks in _partitions(vals, ordinal[j]):
                subs = [
                    list(structs(sigma[:j] + (blk,) + sigma[j + 1:], depth - 1))
                    for blk in blocks
                ]
                for combo in product(*subs):
                    yield (j, tuple(zip(blocks, combo)))

    root_sigma = tuple(tuple(range(f.q)) for f in schema.features)
    for s in structs(root_sigma, -1 if depth_cap is None else depth_cap):
        yield Tree(schema, s)
