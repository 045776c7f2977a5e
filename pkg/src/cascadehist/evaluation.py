"""Likelihood and least-squares metrics for fitted piecewise-constant densities.

Every fitted model is handled through :class:`FittedDensity`, which pairs a
structure exposing ``leaf_index(points)`` (a tree, a rule list or a full
histogram) with the :class:`~cascadehist.tree.LeafStats` of its training
data. A ``leaf_index`` of ``-1`` means "outside every bin" and has density 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .schema import Dataset
from .tree import LeafStats

# A zero-density test point makes the log-likelihood this value. It is a
# plain float so it sorts and prints ("-inf") like any other score.
NEG_INF = -math.inf


def is_neg_inf(value: float) -> bool:
    return value == NEG_INF


@dataclass(frozen=True)
class FittedDensity:
    """A structure plus the leaf statistics it was fitted with.

    Attributes
    ----------
    model : Tree, RuleList or FullHistogram
        Anything with ``schema`` and ``leaf_index(points)``.
    stats : LeafStats
        Counts and volumes aligned with ``leaf_index`` positions.
    """

    model: object
    stats: LeafStats

    @property
    def schema(self):
        return self.model.schema

    @property
    def n_leaves(self) -> int:
        return self.stats.n_leaves

    def leaf_positions(self, points) -> np.ndarray:
        return np.asarray(self.model.leaf_index(points), dtype=np.int64)

    def density(self, points) -> np.ndarray:
        """Unsmoothed estimate n_l / (n V_l) at each row of ``points``."""
        pos = self.leaf_positions(points)
        dens = np.append(self.stats.densities, 0.0)
        return dens[pos]  # -1 picks the trailing zero

    def smoothed_density(self, points, alpha: float) -> np.ndarray:
        """Posterior-mean estimate (n_l + alpha) / (n + K alpha) / V_l.

        ``K`` counts the cells of the full partition, which for a histogram
        includes the unobserved configurations (see ``unobserved_cells``).
        """
        if not alpha > 0:
            raise ValueError("smoothing alpha must be positive")
        counts = np.asarray(self.stats.counts, dtype=float)
        vols = np.asarray(self.stats.volumes, dtype=float)
        extra = int(getattr(self.model, "unobserved_cells", 0))
        k = counts.size + extra
        denom = self.stats.n + k * alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = np.where(vols > 0, (counts + alpha) / denom / np.where(vols > 0, vols, 1.0), 0.0)
        pos = self.leaf_positions(points)
        return np.append(dens, alpha / denom)[pos]

    def leaf_table(self) -> list[dict]:
        """One record per leaf: count, volume, density and mass n_l / n."""
        out = []
        for k in range(self.stats.n_leaves):
            c = int(self.stats.counts[k])
            out.append({
                "leaf": int(self.stats.leaf_ids[k]),
                "n": c,
                "volume": int(self.stats.volumes[k]),
                "density": float(self.stats.densities[k]),
                "mass": c / self.stats.n if self.stats.n else 0.0,
            })
        return out


def test_log_likelihood(
    fitted: FittedDensity, test: Dataset, smoothing: bool = False, alpha: float = 1.0
) -> float:
    """Sum of ln f(x) over the test rows.

    Without smoothing a single test point in a zero-density region returns
    :data:`NEG_INF` (no exception, no warning).
    """
    if test.schema != fitted.schema:
        raise ValueError("test data schema does not match the model")
    X, w = test.unique_rows, test.weights
    dens = fitted.smoothed_density(X, alpha) if smoothing else fitted.density(X)
    if np.any(dens[w > 0] <= 0.0):
        return NEG_INF
    return float(np.dot(w, np.log(dens)))


test_log_likelihood.__test__ = False  # not a pytest test despite the name


def training_log_likelihood(stats: LeafStats) -> float:
    """Sum over nonempty leaves of n_l ln f_l."""
    c = np.asarray(stats.counts, dtype=float)
    mask = c > 0
    return float(np.dot(c[mask], np.log(stats.densities[mask])))


def loo_least_squares(stats: LeafStats) -> float:
    """Leave-one-out estimate of the integrated squared error (up to a
    constant): sum_l (n_l / n - 2 (n_l - 1) / (n - 1)) f_l. Lower is better.

    Assumes removing one point leaves the structure unchanged.
    """
    n = stats.n
    if n < 2:
        raise ValueError("need at least 2 training points")
    c = np.asarray(stats.counts, dtype=float)
    return float(np.sum((c / n - 2.0 * (c - 1.0) / (n - 1)) * stats.densities))


def loo_least_squares_integral(stats: LeafStats) -> float:
    """Definitional form sum_l f_l^2 V_l - 2 sum_l ((n_l - 1)/(n - 1)) f_l."""
    n = stats.n
    if n < 2:
        raise ValueError("need at least 2 training points")
    c = np.asarray(stats.counts, dtype=float)
    v = np.asarray(stats.volumes, dtype=float)
    f = stats.densities
    return float(np.sum(f * f * v) - 2.0 * np.sum((c - 1.0) / (n - 1) * f))


def pointwise_histogram_log_likelihood(train: Dataset) -> float:
    """Training log-likelihood of the per-configuration histogram,
    sum_x n_x ln(n_x / n); an upper bound for every tree on ``train``."""
    if train.n < 1:
        raise ValueError("empty dataset")
    w = np.asarray(train.weights, dtype=float)
    return float(np.dot(w, np.log(w / train.n)))
