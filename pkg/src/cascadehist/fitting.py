"""One entry point for fitting any model kind, with lambda selection."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .anneal import AnnealConfig, FitResult, anneal, anneal_chains
from .baselines import fit_full_histogram
from .evaluation import FittedDensity, test_log_likelihood
from .posterior import BranchModelHyper, LeafModelHyper, branch_objective, leaf_objective
from .rulelist import AntecedentUniverse, ListModelHyper, mcmc_search
from .schema import Dataset, split_dataset
from .tree import Tree

MODEL_KINDS = ("leaf", "branch", "list", "histogram")

DEFAULTS = {
    "leaf": {"lam": 5.0, "alpha": 2.0},
    "branch": {"lam": 2.0, "alpha": 2.0},
    "list": {"lam": 3.0, "alpha": 1.0, "eta": 1.0},
}

SELECTION_FRACTION = 0.8


def sub_seed(seed: int, *names) -> int:
    """Deterministic child seed for a named purpose, e.g. ``("split", 3)``."""
    key = [int(seed) & 0xFFFFFFFF] + [zlib.crc32(str(nm).encode()) for nm in names]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


@dataclass(frozen=True)
class FitConfig:
    """Everything needed to reproduce a fit.

    ``lams`` holds one or more candidate Poisson means; with several, the
    winner is picked on an internal 80/20 split by validation
    log-likelihood (ties go to the smaller value) and refitted on all data.
    ``None`` fields take the per-model defaults in :data:`DEFAULTS`.
    """

    model: str
    lams: tuple[float, ...] = ()
    alpha: float | None = None
    eta: float | None = None
    gamma: float | None = None
    max_card: int = 3
    min_support: int | None = None
    iterations: int = 10_000
    restart_period: int = 2_500
    chains: int | None = None
    seed: int = 0
    omit_dirichlet_normalizer: bool = False
    warm_start: Tree | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODEL_KINDS}")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.model == "list" and self.chains is not None and self.chains < 2:
            raise ValueError("list search needs at least 2 chains for the convergence diagnostic")
        if self.chains is not None and self.chains < 1:
            raise ValueError("chains must be positive")

    def candidate_lams(self) -> tuple[float, ...]:
        if self.model == "histogram":
            return ()
        lams = self.lams or (DEFAULTS[self.model]["lam"],)
        return tuple(sorted(set(float(v) for v in lams)))

    def hyper(self, lam: float):
        d = DEFAULTS.get(self.model, {})
        alpha = d.get("alpha") if self.alpha is None else self.alpha
        if self.model == "leaf":
            return LeafModelHyper(lam=lam, alpha=alpha)
        if self.model == "branch":
            return BranchModelHyper(lam=lam, alpha=alpha, gamma=self.gamma)
        if self.model == "list":
            return ListModelHyper(
                lam=lam, eta=d["eta"] if self.eta is None else self.eta, alpha=alpha,
                max_card=self.max_card, min_support=self.min_support,
                omit_dirichlet_normalizer=self.omit_dirichlet_normalizer,
            )
        raise ValueError("histograms have no hyperparameters")

    def resolved(self) -> dict:
        """Plain-dict view for manifests and model files."""
        out = {
            "model": self.model, "lams": list(self.candidate_lams()),
            "iterations": self.iterations, "seed": self.seed,
        }
        if self.model != "histogram":
            h = self.hyper(self.candidate_lams()[0])
            out["alpha"] = h.alpha
            if self.model == "branch":
                out["gamma"] = h.gamma
            if self.model == "list":
                out.update(
                    eta=h.eta, max_card=h.max_card, min_support=h.min_support,
                    omit_dirichlet_normalizer=h.omit_dirichlet_normalizer,
                    chains=self.chains or 3,
                )
            else:
                out.update(restart_period=self.restart_period, chains=self.chains or 1)
        return out


@dataclass
class FitOutcome:
    fitted: FittedDensity
    kind: str
    hyper: dict
    score: float | None
    result: FitResult | None
    selection: list[tuple[float, float]] = field(default_factory=list)

    @property
    def rhat(self) -> float | None:
        return None if self.result is None else self.result.rhat


def _hyper_dict(h) -> dict:
    return {k: getattr(h, k) for k in h.__dataclass_fields__}


def _fit_once(data: Dataset, config: FitConfig, lam: float, seed: int) -> FitOutcome:
    if config.model == "histogram":
        return FitOutcome(fit_full_histogram(data), "histogram", {}, None, None)
    hyper = config.hyper(lam)
    if config.model == "list":
        universe = AntecedentUniverse.mine(data.schema, hyper.max_card, hyper.min_support, data)
        res = mcmc_search(
            data, universe, hyper, chains=config.chains or 3,
            budget=config.iterations, seed=seed,
        )
    else:
        objective = leaf_objective(hyper) if config.model == "leaf" else branch_objective(hyper)
        acfg = AnnealConfig(
            iterations=config.iterations, restart_period=config.restart_period,
            seed=seed, warm_start=config.warm_start,
        )
        chains = config.chains or 1
        res = anneal(data, objective, acfg) if chains == 1 else anneal_chains(data, objective, acfg, chains)
    return FitOutcome(FittedDensity(res.model, res.stats), config.model, _hyper_dict(hyper), res.score, res)


def fit_model(data: Dataset, config: FitConfig) -> FitOutcome:
    """Fit ``config.model`` to ``data``; see :class:`FitConfig` for lambda lists."""
    lams = config.candidate_lams()
    if len(lams) <= 1:
        return _fit_once(data, config, lams[0] if lams else 0.0, sub_seed(config.seed, "fit"))
    train, valid = split_dataset(data, SELECTION_FRACTION, sub_seed(config.seed, "select-split"))
    if train.n < 1 or valid.n < 1:
        raise ValueError("too few rows to select lambda on an internal split")
    best_lam, best_val = None, None
    table = []
    for lam in lams:  # ascending, so ties keep the smaller lambda
        out = _fit_once(train, config, lam, sub_seed(config.seed, "select", lam))
        val = test_log_likelihood(out.fitted, valid)
        table.append((lam, val))
        if best_val is None or val > best_val:
            best_lam, best_val = lam, val
    final = _fit_once(data, config, best_lam, sub_seed(config.seed, "fit"))
    final.selection = table
    return final
