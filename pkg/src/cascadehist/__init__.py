"""Sparse piecewise-constant density estimation for categorical data.

Cascaded trees (leaf-count and branch-count priors, fitted by simulated
annealing) and density rule lists (fitted by Metropolis-Hastings), with
exact volume accounting and likelihood-based evaluation.
"""
from .anneal import AnnealConfig, FitResult, SearchGuardError, anneal, enumerate_trees, propose_neighbor
from .baselines import FullHistogram, fit_full_histogram, gen_extreme_uniform, gen_sparse_tree_dataset
from .diagnostics import gelman_rubin
from .evaluation import (
    NEG_INF,
    FittedDensity,
    loo_least_squares,
    pointwise_histogram_log_likelihood,
    test_log_likelihood,
)
from .fitting import FitConfig, fit_model
from .posterior import (
    BranchModelHyper,
    LeafModelHyper,
    log_posterior_branch,
    log_posterior_leaf,
)
from .rulelist import (
    Antecedent,
    AntecedentUniverse,
    ListModelHyper,
    RuleList,
    antecedent_count,
    log_posterior_list,
    mcmc_search,
    mine_antecedents,
)
from .schema import Dataset, DataError, FeatureSpec, Schema, SchemaError, ingest_csv, load_schema
from .tree import LeafStats, Tree, leaf_counts, trees_equivalent

__all__ = [
    "AnnealConfig", "Antecedent", "AntecedentUniverse", "BranchModelHyper", "DataError",
    "Dataset", "FeatureSpec", "FitConfig", "FitResult", "FittedDensity", "FullHistogram",
    "LeafModelHyper", "LeafStats", "ListModelHyper", "NEG_INF", "RuleList", "Schema",
    "SchemaError", "SearchGuardError", "Tree", "anneal", "antecedent_count", "enumerate_trees",
    "fit_full_histogram", "fit_model", "gelman_rubin", "gen_extreme_uniform",
    "gen_sparse_tree_dataset", "ingest_csv", "leaf_counts", "load_schema", "log_posterior_branch",
    "log_posterior_leaf", "log_posterior_list", "loo_least_squares", "mcmc_search",
    "mine_antecedents", "pointwise_histogram_log_likelihood", "propose_neighbor",
    "test_log_likelihood", "trees_equivalent",
]
