"""Density rule lists: antecedent mining, volumes, posterior and MCMC search."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations, product

import numpy as np
from scipy.special import gammaln, logsumexp

from . import _kernels
from .anneal import FitResult, SearchGuardError
from .diagnostics import gelman_rubin
from .schema import Dataset, Schema
from .tree import LeafStats

MAX_ANTECEDENTS = 10**7
MAX_IE_TERMS_LOG2 = 20
ENUMERATION_DOMAIN_LIMIT = 2**22
TRUNCATION_EXACT_LIMIT = 10**4


@dataclass(frozen=True)
class Antecedent:
    """Conjunction of ``feature == value`` conditions, one per feature at most."""

    conditions: tuple[tuple[int, int], ...]

    def __post_init__(self):
        conds = tuple(sorted((int(f), int(v)) for f, v in self.conditions))
        feats = [f for f, _ in conds]
        if len(set(feats)) != len(feats):
            raise ValueError(f"repeated feature in antecedent {conds}")
        object.__setattr__(self, "conditions", conds)

    @property
    def card(self) -> int:
        return len(self.conditions)

    def row(self, p: int) -> np.ndarray:
        r = np.full(p, -1, dtype=np.int64)
        for f, v in self.conditions:
            r[f] = v
        return r

    def volume(self, schema: Schema) -> int:
        used = {f for f, _ in self.conditions}
        return math.prod(feat.q for j, feat in enumerate(schema.features) if j not in used)

    def describe(self, schema: Schema) -> str:
        return " and ".join(
            f"{schema.features[f].name} = {schema.features[f].categories[v]}"
            for f, v in self.conditions
        )

    def to_dict(self, schema: Schema) -> dict:
        return {schema.features[f].name: schema.features[f].categories[v] for f, v in self.conditions}


@dataclass(frozen=True)
class ListModelHyper:
    """List-length and rule-size Poisson means, Dirichlet concentration.

    ``omit_dirichlet_normalizer`` drops the Gamma((m+1) alpha) / Gamma(alpha)^(m+1)
    factor, reproducing the shortened posterior expression some write-ups use.
    """

    lam: float = 3.0
    eta: float = 1.0
    alpha: float = 1.0
    max_card: int = 3
    min_support: int | None = None
    omit_dirichlet_normalizer: bool = False

    def __post_init__(self):
        if not self.lam > 0 or not self.eta > 0:
            raise ValueError("lambda and eta must be positive")
        if not self.alpha >= 1:
            raise ValueError("alpha must be >= 1")
        if self.max_card < 0:
            raise ValueError("max_card must be >= 0")


# ---------------------------------------------------------------------------
# antecedents
# ---------------------------------------------------------------------------

def antecedent_count(schema: Schema, max_card: int) -> int:
    """Number of conjunctions of size 0..max_card, including the empty one.

    Elementary symmetric polynomials of the category counts.
    """
    e = [1] + [0] * max_card
    for q in schema.q:
        for j in range(max_card, 0, -1):
            e[j] += e[j - 1] * int(q)
    total = sum(e)
    if total > 2**64 - 1:
        raise OverflowError("antecedent count overflows 64 bits")
    return total


def mine_antecedents(
    schema: Schema, max_card: int, min_support: int | None = None, data: Dataset | None = None
) -> list[Antecedent]:
    """Every conjunction of 1..max_card equality conditions, optionally
    keeping only those matched by at least ``min_support`` training points."""
    if max_card > schema.p:
        raise ValueError(f"max_card {max_card} exceeds the number of features {schema.p}")
    if antecedent_count(schema, max_card) - 1 > MAX_ANTECEDENTS:
        raise SearchGuardError("antecedent universe too large")
    if min_support is not None and data is None:
        raise ValueError("min_support requires data")
    out = []
    for c in range(1, max_card + 1):
        for feats in combinations(range(schema.p), c):
            for vals in product(*(range(schema.features[f].q) for f in feats)):
                out.append(Antecedent(tuple(zip(feats, vals))))
    if min_support is not None:
        X, w = data.unique_rows, data.weights
        kept = []
        for a in out:
            hit = np.ones(len(X), dtype=bool)
            for f, v in a.conditions:
                hit &= X[:, f] == v
            if w[hit].sum() >= min_support:
                kept.append(a)
        out = kept
    return out


class AntecedentUniverse:
    """The pre-mined antecedent set plus the counts the prior needs."""

    def __init__(self, schema: Schema, antecedents):
        self.schema = schema
        self.antecedents = tuple(antecedents)
        self.index = {a: k for k, a in enumerate(self.antecedents)}
        if len(self.index) != len(self.antecedents):
            raise ValueError("duplicate antecedents in universe")
        self.cards = np.array([a.card for a in self.antecedents], dtype=np.int64)
        self.card_counts = Counter(int(c) for c in self.cards)
        self.matrix = (
            np.array([a.row(schema.p) for a in self.antecedents], dtype=np.int64)
            if self.antecedents else np.zeros((0, schema.p), dtype=np.int64)
        )
        self._prior_cache: dict = {}

    @classmethod
    def mine(cls, schema, max_card, min_support=None, data=None) -> AntecedentUniverse:
        return cls(schema, mine_antecedents(schema, max_card, min_support, data))

    def __len__(self) -> int:
        return len(self.antecedents)

    @property
    def size(self) -> int:
        """|A|, counting the empty antecedent."""
        return len(self.antecedents) + 1

    def log_length_prior(self, m: int, lam: float) -> float:
        """Poisson(lam) truncated to 0..|A|; untruncated form for huge |A|."""
        base = m * math.log(lam) - math.lgamma(m + 1)
        if self.size > TRUNCATION_EXACT_LIMIT:
            return base
        key = ("len", lam)
        norm = self._prior_cache.get(key)
        if norm is None:
            j = np.arange(self.size + 1)
            norm = self._prior_cache[key] = float(logsumexp(j * math.log(lam) - gammaln(j + 1)))
        return base - norm

    def log_rule_prior(self, cards, eta: float) -> float:
        """Sum over rules of ln P(c_j | c_<j) + ln P(a_j | a_<j, c_j)."""
        key = ("rules", eta, tuple(cards))
        hit = self._prior_cache.get(key)
        if hit is not None:
            return hit
        used: Counter = Counter()
        log_eta = math.log(eta)
        out = 0.0
        for c in cards:
            avail = [k for k, nk in self.card_counts.items() if nk - used[k] > 0]
            if c not in avail:
                raise ValueError(f"no unused antecedent of size {c} left")
            logs = [k * log_eta - math.lgamma(k + 1) for k in avail]
            out += c * log_eta - math.lgamma(c + 1) - float(logsumexp(logs))
            out -= math.log(self.card_counts[c] - used[c])
            used[c] += 1
        self._prior_cache[key] = out
        return out


# ---------------------------------------------------------------------------
# rule lists and volumes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RuleList:
    """Ordered antecedents with first-match semantics; leaf ``j`` (1-based)
    belongs to rule ``j`` and leaf 0 is the default."""

    schema: Schema
    rules: tuple[Antecedent, ...] = ()

    @property
    def m(self) -> int:
        return len(self.rules)

    @cached_property
    def matrix(self) -> np.ndarray:
        if not self.rules:
            return np.zeros((0, self.schema.p), dtype=np.int64)
        return np.array([a.row(self.schema.p) for a in self.rules], dtype=np.int64)

    def assign(self, points) -> np.ndarray:
        X = np.ascontiguousarray(points, dtype=np.int64).reshape(-1, self.schema.p)
        return _kernels.first_match(self.matrix, X)

    leaf_index = assign

    @cached_property
    def volumes(self) -> tuple[int, ...]:
        """Leaf volumes, index 0 the default leaf."""
        try:
            return tuple(list_leaf_volumes(self.rules, self.schema))
        except SearchGuardError:
            return tuple(volume_by_enumeration(self.rules, self.schema))

    def stats(self, data: Dataset) -> LeafStats:
        counts = np.bincount(
            self.assign(data.unique_rows), weights=data.weights, minlength=self.m + 1
        ).astype(np.int64)
        return LeafStats(tuple(range(self.m + 1)), counts, self.volumes, data.n)


def list_leaf_volumes(rules, schema: Schema) -> list[int]:
    """Volumes of every leaf of a rule list by inclusion-exclusion.

    Index 0 is the default leaf (domain minus everything claimed by rules).
    """
    if len(rules) - 1 > MAX_IE_TERMS_LOG2:
        raise SearchGuardError("too many inclusion-exclusion terms")
    mat = (
        np.array([a.row(schema.p) for a in rules], dtype=np.int64)
        if len(rules) else np.zeros((0, schema.p), dtype=np.int64)
    )
    return _kernels.ie_volumes(mat, schema.q)


def list_leaf_volume(rules, schema: Schema) -> int:
    """Volume of the leaf owned by the last rule of ``rules``."""
    if not rules:
        raise ValueError("need at least one rule")
    return list_leaf_volumes(rules, schema)[len(rules)]


def volume_by_enumeration(rules, schema: Schema) -> list[int]:
    """Leaf volumes by counting first matches over the whole domain grid."""
    if schema.domain_size > ENUMERATION_DOMAIN_LIMIT:
        raise SearchGuardError("domain too large to enumerate")
    pts = schema.domain_points(ENUMERATION_DOMAIN_LIMIT)
    mat = (
        np.array([a.row(schema.p) for a in rules], dtype=np.int64)
        if len(rules) else np.zeros((0, schema.p), dtype=np.int64)
    )
    leaf = _kernels.first_match(mat, pts)
    return [int(v) for v in np.bincount(leaf, minlength=len(rules) + 1)]


# ---------------------------------------------------------------------------
# posterior
# ---------------------------------------------------------------------------

def _list_score(m, cards, counts, volumes, n, hyper: ListModelHyper, universe) -> float:
    a = hyper.alpha
    counts = np.asarray(counts, dtype=float)
    out = universe.log_length_prior(m, hyper.lam) + universe.log_rule_prior(cards, hyper.eta)
    out += float(gammaln(counts + a).sum()) - math.lgamma(n + (m + 1) * a)
    if not hyper.omit_dirichlet_normalizer:
        out += math.lgamma((m + 1) * a) - (m + 1) * math.lgamma(a)
    for c, v in zip(counts, volumes):
        if c > 0:
            if v == 0:
                raise RuntimeError("points assigned to a zero-volume leaf")
            out -= c * math.log(v)
    return out


def log_posterior_list(
    rule_list: RuleList, stats: LeafStats, hyper: ListModelHyper, universe: AntecedentUniverse
) -> float:
    """Prior over list length and rule choices times the Dirichlet-multinomial
    evidence over the m + 1 leaves, divided by V_l^{n_l}."""
    for a in rule_list.rules:
        if a not in universe.index:
            raise ValueError(f"rule {a.conditions} is not in the antecedent universe")
    if len(set(rule_list.rules)) != rule_list.m:
        raise ValueError("duplicate rules")
    if stats.n_leaves != rule_list.m + 1:
        raise ValueError("leaf statistics do not belong to this list")
    return _list_score(
        rule_list.m, [a.card for a in rule_list.rules], stats.counts, stats.volumes,
        stats.n, hyper, universe,
    )


def sample_prior(universe: AntecedentUniverse, hyper: ListModelHyper, rng) -> RuleList:
    """Draw a rule list top-down from the generative prior."""
    usable = len(universe)
    key = ("len-cdf", hyper.lam)
    cdf = universe._prior_cache.get(key)
    if cdf is None:
        j = np.arange(universe.size + 1)
        logw = j * math.log(hyper.lam) - gammaln(j + 1)
        cdf = universe._prior_cache[key] = np.cumsum(np.exp(logw - logsumexp(logw)))
    while True:
        m = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cdf) - 1)
        if m <= usable:
            break
    by_card: dict[int, list[int]] = {}
    for k, c in enumerate(universe.cards.tolist()):
        by_card.setdefault(c, []).append(k)
    left = {c: len(lst) for c, lst in by_card.items()}
    log_eta = math.log(hyper.eta)
    chosen = []
    for _ in range(m):
        avail = sorted(c for c, r in left.items() if r)
        w = np.exp([c * log_eta - math.lgamma(c + 1) for c in avail])
        c = avail[min(int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right")), len(avail) - 1)]
        # partial Fisher-Yates: uniform among the still-unused antecedents of size c
        lst, r = by_card[c], left[c]
        k = int(rng.integers(r))
        lst[k], lst[r - 1] = lst[r - 1], lst[k]
        left[c] = r - 1
        chosen.append(universe.antecedents[lst[r - 1]])
    return RuleList(universe.schema, tuple(chosen))


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

_MOVE_PROBS = (0.4, 0.4, 0.2)  # add, remove, swap


class _ListScorer:
    """Memoized scoring of rule lists given as tuples of universe indices."""

    def __init__(self, data: Dataset, universe: AntecedentUniverse, hyper: ListModelHyper):
        self.data = data
        self.universe = universe
        self.hyper = hyper
        self.X = data.unique_rows
        self.w = data.weights
        self.cache: dict = {}

    def stats(self, idx) -> LeafStats:
        rules = tuple(self.universe.antecedents[k] for k in idx)
        return RuleList(self.universe.schema, rules).stats(self.data)

    def __call__(self, idx) -> float:
        hit = self.cache.get(idx)
        if hit is not None:
            return hit
        u = self.universe
        mat = u.matrix[list(idx)] if idx else np.zeros((0, u.schema.p), dtype=np.int64)
        counts = np.bincount(_kernels.first_match(mat, self.X), weights=self.w, minlength=len(idx) + 1)
        if len(idx) - 1 > MAX_IE_TERMS_LOG2:
            vols = volume_by_enumeration([u.antecedents[k] for k in idx], u.schema)
        else:
            vols = _kernels.ie_volumes(mat, u.schema.q)
        s = _list_score(
            len(idx), [int(u.cards[k]) for k in idx], counts, vols, self.data.n, self.hyper, u
        )
        self.cache[idx] = s
        return s


def _mh_step(state, score, scorer: _ListScorer, rng, usable: int):
    m = len(state)
    u = rng.random()
    if u < _MOVE_PROBS[0]:
        if m >= usable:
            return state, score, False
        taken = set(state)
        while True:
            k = int(rng.integers(usable))
            if k not in taken:
                break
        pos = int(rng.integers(m + 1))
        cand = state[:pos] + (k,) + state[pos:]
        log_q = math.log(usable - m)
    elif u < _MOVE_PROBS[0] + _MOVE_PROBS[1]:
        if m == 0:
            return state, score, False
        pos = int(rng.integers(m))
        cand = state[:pos] + state[pos + 1:]
        log_q = -math.log(usable - m + 1)
    else:
        if m < 2:
            return state, score, False
        i, j = sorted(rng.choice(m, size=2, replace=False).tolist())
        lst = list(state)
        lst[i], lst[j] = lst[j], lst[i]
        cand = tuple(lst)
        log_q = 0.0
    cand_score = scorer(cand)
    log_acc = cand_score - score + log_q
    if log_acc >= 0 or rng.random() < math.exp(log_acc):
        return cand, cand_score, True
    return state, score, False


def prune_empty_rules(rule_list: RuleList) -> RuleList:
    """Drop rules whose leaf has zero volume (fully shadowed)."""
    vols = rule_list.volumes
    kept = tuple(a for a, v in zip(rule_list.rules, vols[1:]) if v > 0)
    return RuleList(rule_list.schema, kept)


def mcmc_search(
    data: Dataset,
    universe: AntecedentUniverse,
    hyper: ListModelHyper,
    chains: int = 3,
    budget: int = 5_000,
    seed: int = 0,
    check_every: int = 500,
    rhat_threshold: float = 1.05,
    min_iterations: int = 1_000,
) -> FitResult:
    """Metropolis-Hastings over rule lists with add / remove / swap moves.

    Chains advance in lockstep blocks of ``check_every`` iterations; the
    search stops once the Gelman-Rubin statistic of the log-posterior
    traces drops below ``rhat_threshold`` (after ``min_iterations``) or the
    per-chain ``budget`` is spent. Returns the best list seen by any chain,
    with zero-volume rules pruned.
    """
    if chains < 2:
        raise ValueError("need at least 2 chains for the convergence diagnostic")
    if len(universe) == 0:
        raise ValueError("antecedent universe is empty")
    if data.n < 1:
        raise ValueError("empty dataset")
    scorer = _ListScorer(data, universe, hyper)
    usable = len(universe)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(chains)]
    states = [()] * chains
    scores = [scorer(())] * chains
    traces = [[] for _ in range(chains)]
    best_traces = [[] for _ in range(chains)]
    bests = [((), scores[0])] * chains
    accepted = 0
    done = 0
    rhat = math.inf
    while done < budget:
        block = min(check_every, budget - done)
        for c in range(chains):
            st, sc, rng = states[c], scores[c], rngs[c]
            bst, bsc = bests[c]
            for _ in range(block):
                st, sc, acc = _mh_step(st, sc, scorer, rng, usable)
                accepted += acc
                if sc > bsc:
                    bst, bsc = st, sc
                traces[c].append(sc)
                best_traces[c].append(bsc)
            states[c], scores[c], bests[c] = st, sc, (bst, bsc)
        done += block
        if done >= 10:
            rhat = gelman_rubin(traces)
            if done >= min_iterations and rhat < rhat_threshold:
                break
    winner = max(range(chains), key=lambda c: (bests[c][1], -c))
    idx = bests[winner][0]
    rules = RuleList(universe.schema, tuple(universe.antecedents[k] for k in idx))
    pruned = prune_empty_rules(rules)
    stats = pruned.stats(data)
    score = log_posterior_list(pruned, stats, hyper, universe)
    return FitResult(
        model=pruned,
        score=score,
        stats=stats,
        trace=np.asarray(traces[winner]),
        best_trace=np.asarray(best_traces[winner]),
        traces=[np.asarray(t) for t in traces],
        rhat=rhat,
        accepted=accepted,
        iterations=done,
    )
