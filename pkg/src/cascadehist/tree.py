"""Cascaded trees over a categorical domain.

A tree is stored twice: as a canonical nested ``structure`` (hashable, used
for identity and edits) and as flat node arrays (used for routing points).

``structure`` is ``None`` for a leaf, otherwise
``(feature, ((values, child_structure), ...))`` where ``values`` is a sorted
tuple of category indices and branches are ordered by their smallest value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from . import _kernels
from .schema import Dataset, Schema

ENUMERATION_LIMIT = 2**20


class TreeError(ValueError):
    """A structure that violates the partition invariants."""


def _is_run(values) -> bool:
    return values[-1] - values[0] + 1 == len(values)


class Tree:
    """Immutable cascade. Edits (:meth:`split`, :meth:`collapse`, :meth:`merge`)
    return new trees; node ids are preorder positions and are not stable
    across edits."""

    def __init__(self, schema: Schema, structure=None):
        self.schema = schema
        self.features: list[int] = []
        self.parents: list[int] = []
        self.children: list[tuple[int, ...]] = []
        self.subsets: list[tuple[int, ...] | None] = []
        self.sigmas: list[tuple[tuple[int, ...], ...]] = []
        self._structs: list = []
        root_sigma = tuple(tuple(range(f.q)) for f in schema.features)
        self.structure = self._build(structure, root_sigma, -1, None)

    def _build(self, struct, sigma, parent, subset):
        i = len(self.features)
        self.parents.append(parent)
        self.subsets.append(subset)
        self.sigmas.append(sigma)
        self._structs.append(None)
        if struct is None:
            self.features.append(-1)
            self.children.append(())
            return None
        feature, branches = struct
        feature = int(feature)
        if not 0 <= feature < self.schema.p:
            raise TreeError(f"split feature {feature} out of range")
        self.features.append(feature)
        self.children.append(())
        if len(branches) < 2:
            raise TreeError("internal node needs at least 2 branches")
        allowed = set(sigma[feature])
        seen: set[int] = set()
        norm = []
        for values, child in branches:
            values = tuple(sorted(int(v) for v in values))
            if not values:
                raise TreeError("empty branch value set")
            vs = set(values)
            if len(vs) != len(values) or vs & seen or not vs <= allowed:
                raise TreeError(f"branch values {values} overlap or leave the node's allowed set")
            if self.schema.features[feature].ordinal and not _is_run(values):
                raise TreeError(f"ordinal branch {values} is not contiguous")
            seen |= vs
            norm.append((values, child))
        if seen != allowed:
            raise TreeError("branches do not cover the node's allowed values")
        norm.sort(key=lambda b: b[0][0])
        kids = []
        canon = []
        for values, child in norm:
            csig = sigma[:feature] + (values,) + sigma[feature + 1:]
            kids.append(len(self.features))
            canon.append((values, self._build(child, csig, i, values)))
        self.children[i] = tuple(kids)
        out = (feature, tuple(canon))
        self._structs[i] = out
        return out

    # -- basic queries -----------------------------------------------------

    def __eq__(self, other):
        return (
            isinstance(other, Tree)
            and self.schema == other.schema
            and self.structure == other.structure
        )

    def __hash__(self):
        return hash(self.structure)

    def __repr__(self):
        return f"Tree(leaves={len(self.leaves)}, nodes={self.n_nodes})"

    @property
    def n_nodes(self) -> int:
        return len(self.features)

    def is_leaf(self, node: int) -> bool:
        return self.features[node] < 0

    @cached_property
    def leaves(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.features) if f < 0)

    @cached_property
    def internal_nodes(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.features) if f >= 0)

    def substructure(self, node: int):
        return self._structs[node]

    def depth(self, node: int = 0) -> int:
        kids = self.children[node]
        return 0 if not kids else 1 + max(self.depth(c) for c in kids)

    def volume(self, node: int) -> int:
        return math.prod(len(s) for s in self.sigmas[node])

    @cached_property
    def leaf_volumes(self) -> tuple[int, ...]:
        return tuple(self.volume(i) for i in self.leaves)

    @cached_property
    def leaf_log_volumes(self) -> np.ndarray:
        return np.array([sum(math.log(len(s)) for s in self.sigmas[i]) for i in self.leaves])

    @cached_property
    def split_features(self) -> frozenset[int]:
        return frozenset(self.features[i] for i in self.internal_nodes)

    @cached_property
    def _tables(self):
        qmax = int(self.schema.q.max())
        feats = np.array(self.features, dtype=np.int64)
        table = np.full((self.n_nodes, qmax), -1, dtype=np.int64)
        for i in self.internal_nodes:
            for c in self.children[i]:
                table[i, list(self.subsets[c])] = c
        return feats, table

    @cached_property
    def _leaf_position(self) -> np.ndarray:
        pos = np.full(self.n_nodes, -1, dtype=np.int64)
        pos[list(self.leaves)] = np.arange(len(self.leaves))
        return pos

    def assign(self, points) -> np.ndarray:
        """Leaf node id for each row of ``points``."""
        X = np.ascontiguousarray(points, dtype=np.int64).reshape(-1, self.schema.p)
        feats, table = self._tables
        return _kernels.walk_tree(feats, table, X)

    def leaf_index(self, points) -> np.ndarray:
        """Position in :attr:`leaves` for each row of ``points``."""
        return self._leaf_position[self.assign(points)]

    # -- edits -------------------------------------------------------------

    def replaced(self, node: int, struct) -> Tree:
        """Tree with the subtree at ``node`` swapped for ``struct``."""
        s = struct
        i = node
        while self.parents[i] >= 0:
            par = self.parents[i]
            k = self.children[par].index(i)
            feat, branches = self._structs[par]
            branches = branches[:k] + ((branches[k][0], s),) + branches[k + 1:]
            s = (feat, branches)
            i = par
        return Tree(self.schema, s)

    def collapse(self, node: int) -> Tree:
        """Delete every descendant of ``node``."""
        return self.replaced(node, None)

    def split(self, node: int, feature: int, groups) -> Tree:
        """Turn ``node`` into an internal node on ``feature`` with one branch
        per value group; existing descendants are discarded."""
        return self.replaced(node, (feature, tuple((tuple(g), None) for g in groups)))

    def full_split(self, node: int, feature: int) -> Tree:
        return self.split(node, feature, [(v,) for v in self.sigmas[node][feature]])

    def merge(self, parent: int, a: int, b: int) -> Tree:
        """Merge children ``a`` and ``b`` of ``parent`` into one leaf branch.

        A parent left with a single branch becomes a leaf.
        """
        feat, branches = self._structs[parent]
        ka = self.children[parent].index(a)
        kb = self.children[parent].index(b)
        merged = tuple(sorted(branches[ka][0] + branches[kb][0]))
        rest = [br for k, br in enumerate(branches) if k not in (ka, kb)]
        if not rest:
            return self.collapse(parent)
        rest.append((merged, None))
        rest.sort(key=lambda br: br[0][0])
        return self.replaced(parent, (feat, tuple(rest)))


# ---------------------------------------------------------------------------
# per-leaf statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LeafStats:
    """Counts and volumes of the leaves of one fitted structure.

    ``leaf_ids`` are tree node ids, or leaf numbers ``0..m`` for a rule list
    (0 being the default leaf).
    """

    leaf_ids: tuple[int, ...]
    counts: np.ndarray
    volumes: tuple[int, ...]
    n: int

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_ids)

    @cached_property
    def log_volumes(self) -> np.ndarray:
        return np.array([math.log(v) if v > 0 else -np.inf for v in self.volumes])

    @cached_property
    def densities(self) -> np.ndarray:
        """n_l / (n V_l); zero for empty or zero-volume leaves."""
        out = np.zeros(len(self.volumes))
        if self.n == 0:
            return out
        for k, (c, v) in enumerate(zip(self.counts, self.volumes)):
            if c > 0 and v > 0:
                out[k] = int(c) / (self.n * v)
        return out

    def exact_densities(self) -> list[Fraction]:
        return [
            Fraction(int(c), self.n * v) if (v > 0 and self.n > 0) else Fraction(0)
            for c, v in zip(self.counts, self.volumes)
        ]

    def volume_log_term(self) -> float:
        """Sum of n_l ln V_l over non-empty leaves."""
        c = np.asarray(self.counts, dtype=float)
        mask = c > 0
        if np.any(np.isneginf(self.log_volumes[mask])):
            raise ValueError("points assigned to a zero-volume leaf")
        return float(np.dot(c[mask], self.log_volumes[mask]))


def leaf_volume(tree: Tree, leaf: int) -> int:
    """Number of domain configurations in ``leaf``."""
    if not tree.is_leaf(leaf):
        raise TreeError(f"node {leaf} is internal")
    return tree.volume(leaf)


def assign_leaf(tree: Tree, point) -> int:
    return int(tree.assign(np.asarray(point, dtype=np.int64)[None, :])[0])


def leaf_counts(tree: Tree, data: Dataset) -> LeafStats:
    X, w = data.unique_rows, data.weights
    counts = np.bincount(tree.leaf_index(X), weights=w, minlength=len(tree.leaves))
    return LeafStats(tree.leaves, counts.astype(np.int64), tree.leaf_volumes, data.n)


def density(tree: Tree, stats: LeafStats, point) -> float:
    pos = tree.leaf_index(np.asarray(point, dtype=np.int64)[None, :])[0]
    return float(stats.densities[pos])


def trees_equivalent(t1: Tree, t2: Tree, stats1: LeafStats, stats2: LeafStats) -> bool:
    """True when both fitted trees give every domain point the same density."""
    if t1.schema != t2.schema:
        raise TreeError("trees are over different schemas")
    if t1.schema.domain_size > ENUMERATION_LIMIT:
        raise TreeError("domain too large to enumerate")
    pts = t1.schema.domain_points()
    d1 = stats1.exact_densities()
    d2 = stats2.exact_densities()
    i1 = t1.leaf_index(pts)
    i2 = t2.leaf_index(pts)
    pairs = set(zip(i1.tolist(), i2.tolist()))
    return all(d1[a] == d2[b] for a, b in pairs)


def root_tree(schema: Schema) -> Tree:
    return Tree(schema)
