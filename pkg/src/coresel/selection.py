"""Coreset selectors.

The coverage-centric selector prunes a fraction of the hardest examples,
splits the remaining score range into equal-width strata, then fills the
budget smallest-stratum-first with uniform sampling inside each stratum.
The other selectors are the usual baselines: uniform random, keep-hardest,
keep-easiest, stratified-only, importance sampling, and the
median-distance ("moderate") selector over feature embeddings.

All selectors return a SelectionResult whose size is exactly the coreset
budget floor(n * (1 - alpha)), and are deterministic given their seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .datamodel import ScoreTable, EmbeddingMatrix, SelectionResult
from .errors import DataError
from .rng import stream


def _as_fraction(rate: float) -> Fraction:
    # str() first: treats 0.9 as the decimal 9/10 rather than its binary float
    return Fraction(str(float(rate)))


def coreset_budget(n: int, alpha: float) -> int:
    """floor(n * (1 - alpha)), computed exactly for decimal pruning rates."""
    if not 0 <= alpha < 1:
        raise DataError(f"pruning rate alpha must be in [0, 1), got {alpha}")
    return int(n * (1 - _as_fraction(alpha)))


def hard_cutoff_count(n: int, beta: float) -> int:
    """floor(n * beta), computed exactly for decimal cutoff rates."""
    if not 0 <= beta <= 1:
        raise DataError(f"hard cutoff rate beta must be in [0, 1], got {beta}")
    return int(n * _as_fraction(beta))


def _require_canonical(table: ScoreTable) -> None:
    if table.orientation != "higher_is_harder":
        raise DataError(
            "selector requires canonical higher_is_harder scores; run canonicalize_scores first"
        )


def _require_budget(n: int, alpha: float) -> int:
    m = coreset_budget(n, alpha)
    if m < 1:
        raise DataError(f"coreset budget floor({n} * (1 - {alpha})) = {m}, need at least 1")
    return m


@dataclass(frozen=True)
class CcsParams:
    """Knobs of the coverage-centric selector."""

    alpha: float
    beta: float = 0.0
    k: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise DataError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.beta < 0 or _as_fraction(self.beta) > 1 - _as_fraction(self.alpha):
            raise DataError(
                f"beta must satisfy 0 <= beta <= 1 - alpha, got beta={self.beta}, alpha={self.alpha}"
            )
        if self.k < 1:
            raise DataError(f"stratum count k must be >= 1, got {self.k}")
        if not 0 <= int(self.seed) < 2**64:
            raise DataError(f"seed must fit in 64 bits, got {self.seed}")


@dataclass(frozen=True, eq=False)
class StrataPartition:
    """Equal-width score intervals and the survivor indices inside each."""

    ranges: list[tuple[float, float]]
    members: list[np.ndarray]

    @property
    def k(self) -> int:
        return len(self.ranges)

    def sizes(self) -> list[int]:
        return [len(m) for m in self.members]


def prune_hardest(table: ScoreTable, beta: float) -> np.ndarray:
    """Drop the floor(n*beta) highest-score indices; return sorted survivors.

    Ties at the cutoff score are dropped lowest-index-first.
    """
    _require_canonical(table)
    n = table.n
    cut = hard_cutoff_count(n, beta)
    if cut == 0:
        return np.arange(n, dtype=np.int64)
    # stable sort on negated scores: descending score, ascending index on ties
    order = np.argsort(-table.scores, kind="stable")
    survivors = np.sort(order[cut:]).astype(np.int64)
    return survivors


def partition_strata(table: ScoreTable, survivors: np.ndarray, k: int) -> StrataPartition:
    """Split survivor scores into k equal-width strata over [min, max].

    Intervals are half-open with the last one closed; a survivor with score
    s goes to stratum floor((s - s_min) / width), clamped to k-1. If all
    survivor scores are equal, everything lands in stratum 0.
    """
    survivors = np.asarray(survivors, dtype=np.int64)
    if survivors.size == 0:
        raise DataError("cannot partition an empty survivor set")
    if k < 1:
        raise DataError(f"stratum count k must be >= 1, got {k}")
    scores = table.scores[survivors]
    s_min = float(scores.min())
    s_max = float(scores.max())
    if s_min == s_max:
        ranges = [(s_min, s_max)] * k
        members = [survivors] + [np.empty(0, dtype=np.int64)] * (k - 1)
        return StrataPartition(ranges=ranges, members=members)
    width = (s_max - s_min) / k
    assign = np.floor((scores - s_min) / width).astype(np.int64)
    np.clip(assign, 0, k - 1, out=assign)
    members = [survivors[assign == i] for i in range(k)]
    bounds = [s_min + i * width for i in range(k)] + [s_max]
    ranges = [(bounds[i], bounds[i + 1]) for i in range(k)]
    return StrataPartition(ranges=ranges, members=members)


def _sample_without_replacement(rng: np.random.Generator, members: np.ndarray, size: int) -> np.ndarray:
    return rng.choice(members, size=size, replace=False)


def _ccs_core(table: ScoreTable, params: CcsParams, method: str) -> SelectionResult:
    _require_canonical(table)
    n = table.n
    m = _require_budget(n, params.alpha)
    survivors = prune_hardest(table, params.beta)
    if m > survivors.size:
        raise DataError(
            f"infeasible budget: need {m} examples but only {survivors.size} survive the "
            f"beta={params.beta} hard cutoff"
        )
    partition = partition_strata(table, survivors, params.k)

    remaining = list(range(params.k))
    budget = m
    picked: list[np.ndarray] = []
    trace: list[dict[str, int]] = []
    while remaining:
        # fewest examples first; ties go to the lowest interval index
        idx = min(remaining, key=lambda i: (len(partition.members[i]), i))
        members = partition.members[idx]
        share = min(len(members), budget // len(remaining))
        if share > 0:
            rng = stream(params.seed, idx)
            picked.append(_sample_without_replacement(rng, members, share))
        trace.append({"stratum": idx, "size": len(members), "budget": share})
        remaining.remove(idx)
        budget -= share

    selected = np.sort(np.concatenate(picked)) if picked else np.empty(0, dtype=np.int64)
    result_params: dict = {
        "alpha": params.alpha,
        "beta": params.beta,
        "k": params.k,
        "seed": int(params.seed),
        "stratum_trace": trace,
    }
    if budget > 0:
        # unreachable when the budget is feasible, guarded anyway: never
        # return an undersized coreset silently
        pool = np.setdiff1d(survivors, selected, assume_unique=True)
        extra = _sample_without_replacement(stream(params.seed, params.k), pool, budget)
        selected = np.sort(np.concatenate([selected, extra]))
        result_params["topup"] = int(budget)
        warnings.warn(
            f"stratified loop left {budget} unassigned; topped up uniformly from survivors",
            stacklevel=2,
        )
    return SelectionResult(selected=selected, method=method, params=result_params, source_n=n)


def ccs_select(table: ScoreTable, params: CcsParams) -> SelectionResult:
    """Coverage-centric selection: hard cutoff, equal-width strata, then
    budget allocation smallest-stratum-first with uniform sampling."""
    return _ccs_core(table, params, method="ccs")


def stratified_only_select(table: ScoreTable, alpha: float, k: int, seed: int) -> SelectionResult:
    """Stratified sampling ablation: the coverage-centric selector with beta=0."""
    return _ccs_core(table, CcsParams(alpha=alpha, beta=0.0, k=k, seed=seed), method="stratified")


def random_select(table: ScoreTable, alpha: float, seed: int) -> SelectionResult:
    """Uniform sample without replacement of the coreset budget.

    Shares the single-stratum RNG path, so with the same seed this equals
    the stratified selector at k=1, beta=0.
    """
    n = table.n
    m = _require_budget(n, alpha)
    rng = stream(seed, 0)
    chosen = _sample_without_replacement(rng, np.arange(n, dtype=np.int64), m)
    return SelectionResult(
        selected=np.sort(chosen),
        method="random",
        params={"alpha": alpha, "seed": int(seed)},
        source_n=n,
    )


def topk_hard_select(table: ScoreTable, alpha: float) -> SelectionResult:
    """Keep the budget's worth of hardest examples (ties: lower index first).

    This is the importance-first baseline; the score kind decides whether it
    acts as the forgetting, margin, error-norm, or entropy variant.
    """
    _require_canonical(table)
    m = _require_budget(table.n, alpha)
    order = np.argsort(-table.scores, kind="stable")
    return SelectionResult(
        selected=np.sort(order[:m]),
        method="topk-hard",
        params={"alpha": alpha},
        source_n=table.n,
    )


def prune_hard_select(table: ScoreTable, alpha: float) -> SelectionResult:
    """Keep the budget's worth of easiest examples (ties: lower index first)."""
    _require_canonical(table)
    m = _require_budget(table.n, alpha)
    order = np.argsort(table.scores, kind="stable")
    return SelectionResult(
        selected=np.sort(order[:m]),
        method="prune-hard",
        params={"alpha": alpha},
        source_n=table.n,
    )


def importance_probabilities(table: ScoreTable) -> np.ndarray:
    """Per-example sampling probabilities for the importance-sampling selector.

    The weighting is written for margin-style raw scores where smaller means
    harder, so canonical scores are negated back first: with s the raw score
    and s_max its maximum, weight = exp((s_max - s) / s_max), normalized.
    Requires s_max > 0.
    """
    _require_canonical(table)
    raw = -table.scores
    s_max = float(raw.max())
    if s_max <= 0:
        raise DataError(
            "importance-sampling weights undefined for non-positive score maximum "
            f"(max raw score = {s_max})"
        )
    weights = np.exp((s_max - raw) / s_max)
    return weights / weights.sum()


def importance_sampling_select(table: ScoreTable, alpha: float, seed: int) -> SelectionResult:
    """Sequential weighted draws without replacement from the importance
    probabilities, until the budget is filled."""
    n = table.n
    m = _require_budget(n, alpha)
    probs = importance_probabilities(table)
    rng = stream(seed)
    remaining = probs.copy()
    chosen = np.empty(m, dtype=np.int64)
    for t in range(m):
        cum = np.cumsum(remaining)
        draw = rng.random() * cum[-1]
        idx = int(np.searchsorted(cum, draw, side="right"))
        idx = min(idx, n - 1)
        while remaining[idx] == 0.0:  # float-boundary guard; zero-mass entries are never hit otherwise
            idx -= 1
        chosen[t] = idx
        remaining[idx] = 0.0
    return SelectionResult(
        selected=np.sort(chosen),
        method="importance",
        params={"alpha": alpha, "seed": int(seed)},
        source_n=n,
    )


def _largest_remainder_quotas(counts: np.ndarray, total: int) -> np.ndarray:
    """Apportion `total` across groups proportionally to `counts`."""
    n = int(counts.sum())
    base = (total * counts) // n
    remainder = (total * counts) % n
    quotas = base.astype(np.int64)
    leftover = total - int(base.sum())
    if leftover > 0:
        # largest remainder first, ties to the lower group index
        order = np.lexsort((np.arange(len(counts)), -remainder))
        quotas[order[:leftover]] += 1
    return quotas


def moderate_select(table: ScoreTable, embeddings: EmbeddingMatrix, alpha: float) -> SelectionResult:
    """Median-distance selector: per class, keep the examples whose distance
    to the class centroid is closest to the class median distance.

    Per-class quotas are proportional to class size (largest-remainder
    apportionment), so the total is exactly the coreset budget.
    """
    n = table.n
    if embeddings.n != n:
        raise DataError(f"embeddings have {embeddings.n} rows but score table has {n}")
    if embeddings.ids is not None and not np.array_equal(embeddings.ids, table.ids):
        raise DataError("embedding ids do not match score table ids")
    m = _require_budget(n, alpha)

    classes = np.unique(table.labels)
    quotas = _largest_remainder_quotas(
        np.array([np.count_nonzero(table.labels == c) for c in classes]), m
    )
    values = embeddings.values.astype(np.float64)
    picked: list[np.ndarray] = []
    for c, quota in zip(classes, quotas):
        rows = np.flatnonzero(table.labels == c)
        centroid = values[rows].mean(axis=0)
        dist = np.sqrt(((values[rows] - centroid) ** 2).sum(axis=1))
        gap = np.abs(dist - np.median(dist))
        order = np.argsort(gap, kind="stable")  # rows ascending, so ties keep lower index
        picked.append(rows[order[:quota]])
    selected = np.sort(np.concatenate(picked))
    return SelectionResult(
        selected=selected,
        method="moderate",
        params={"alpha": alpha},
        source_n=n,
    )


SELECTOR_NAMES = ("ccs", "random", "topk-hard", "prune-hard", "stratified", "importance", "moderate")
