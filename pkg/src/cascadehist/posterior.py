"""Integrated log-posteriors for the leaf-based and branch-based tree models.

Both return unnormalized values: additive constants that do not depend on
the tree are dropped, so only differences between trees over the same data
are meaningful.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .schema import Dataset
from .tree import LeafStats, Tree, leaf_counts


@dataclass(frozen=True)
class LeafModelHyper:
    """Poisson mean over the leaf count and symmetric Dirichlet concentration."""

    lam: float = 5.0
    alpha: float = 2.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.alpha >= 1:
            raise ValueError("alpha must be >= 1")


@dataclass(frozen=True)
class BranchModelHyper:
    """Per-node Poisson mean for the branch count, Dirichlet concentration,
    and the optional feature-usage regularizer ``gamma`` in (0, 1)."""

    lam: float = 2.0
    alpha: float = 2.0
    gamma: float | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.alpha >= 1:
            raise ValueError("alpha must be >= 1")
        if self.gamma is not None and not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")


def log_poisson(k, lam: float) -> float:
    return -lam + k * math.log(lam) - math.lgamma(k + 1)


def log_dirichlet_ratio(counts, alpha: float) -> float:
    """ln B(counts + alpha) - ln B(alpha, ..., alpha) for one symmetric Dirichlet."""
    c = np.asarray(counts, dtype=float)
    k = c.size
    return float(
        gammaln(c + alpha).sum() - gammaln(c.sum() + k * alpha)
        - k * gammaln(alpha) + gammaln(k * alpha)
    )


def _check_stats(tree: Tree, stats: LeafStats):
    if tuple(stats.leaf_ids) != tree.leaves:
        raise ValueError("leaf statistics do not belong to this tree")
    if int(np.sum(stats.counts)) != stats.n:
        raise ValueError("leaf counts do not sum to n")


def log_posterior_leaf(tree: Tree, stats: LeafStats, hyper: LeafModelHyper) -> float:
    """Leaf-count model: Poisson(K; lambda) times the Dirichlet-multinomial
    evidence over K leaves, divided by V_l^{n_l}."""
    _check_stats(tree, stats)
    k = stats.n_leaves
    return (
        log_poisson(k, hyper.lam)
        + log_dirichlet_ratio(stats.counts, hyper.alpha)
        - stats.volume_log_term()
    )


def internal_node_counts(tree: Tree, data: Dataset) -> np.ndarray:
    """Points passing through each node, indexed by node id."""
    leaf_ids = tree.assign(data.unique_rows)
    counts = np.bincount(leaf_ids, weights=data.weights, minlength=tree.n_nodes)
    counts = counts.astype(np.int64)
    # preorder ids: every child id exceeds its parent's
    for i in range(tree.n_nodes - 1, 0, -1):
        counts[tree.parents[i]] += counts[i]
    return counts


def log_feature_prior(p: int, d: int, gamma: float) -> float:
    """ln [C(p, d) gamma^d (1 - gamma)^(p - d)]."""
    return math.log(math.comb(p, d)) + d * math.log(gamma) + (p - d) * math.log1p(-gamma)


def log_posterior_branch(
    tree: Tree, node_counts, stats: LeafStats, hyper: BranchModelHyper
) -> float:
    """Branch-count model: a Poisson(lambda) branch count and a Dirichlet
    over branches at every internal node."""
    _check_stats(tree, stats)
    node_counts = np.asarray(node_counts)
    if node_counts.shape[0] != tree.n_nodes or node_counts[0] != stats.n:
        raise ValueError("node counts do not match the tree")
    n_int = len(tree.internal_nodes)
    n_leaf = len(tree.leaves)
    out = -hyper.lam * (n_int + n_leaf) + (n_leaf + n_int - 1) * math.log(hyper.lam)
    for i in tree.internal_nodes:
        kids = tree.children[i]
        b = len(kids)
        if b < 2:
            raise ValueError("internal node with fewer than 2 branches")
        nc = node_counts[list(kids)]
        if nc.sum() != node_counts[i]:
            raise ValueError(f"child counts of node {i} do not sum to its count")
        out += -math.lgamma(b + 1) + log_dirichlet_ratio(nc, hyper.alpha)
    out -= stats.volume_log_term()
    if hyper.gamma is not None:
        out += log_feature_prior(tree.schema.p, len(tree.split_features), hyper.gamma)
    return out


def leaf_objective(hyper: LeafModelHyper):
    """Tree scoring function ``f(tree, data)`` for the leaf-based model."""

    def score(tree: Tree, data: Dataset) -> float:
        return log_posterior_leaf(tree, leaf_counts(tree, data), hyper)

    score.hyper = hyper
    return score


def branch_objective(hyper: BranchModelHyper):
    """Tree scoring function ``f(tree, data)`` for the branch-based model."""

    def score(tree: Tree, data: Dataset) -> float:
        return log_posterior_branch(
            tree, internal_node_counts(tree, data), leaf_counts(tree, data), hyper
        )

    score.hyper = hyper
    return score
