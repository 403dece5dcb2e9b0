"""Coverage diagnostics over feature embeddings.

For a candidate coreset S and a set of evaluation points, the empirical
coverage curve maps each coverage fraction p to the smallest radius r such
that balls of radius r around S reach a p-fraction of the evaluation
points. Its area (the mean nearest-coreset distance) is the single-number
coverage score: lower means the coreset blankets the distribution better.

Both the curve integral and the direct mean are implemented and must agree
to 1e-9 relative; `coverage_report` checks that identity on every call.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .datamodel import EmbeddingMatrix, PRCurve, SelectionResult, fmt_float
from .errors import DataError

AUC_IDENTITY_RTOL = 1e-9

# cap on doubles held per distance block (~16 MiB)
_BLOCK_BUDGET = 2_000_000


@dataclass(frozen=True)
class CoverageReport:
    auc_pr: float
    curve: PRCurve
    n_eval: int
    n_excluded: int
    metric: str = "l2"


def _min_dist_block(coreset: np.ndarray, block: np.ndarray) -> np.ndarray:
    # stable accumulation: difference, square, sum, sqrt of the row minimum
    diff = block[:, None, :] - coreset[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    return np.sqrt(sq.min(axis=1))


def min_distances(
    coreset_points: EmbeddingMatrix,
    eval_points: EmbeddingMatrix,
    threads: int = 1,
) -> np.ndarray:
    """Exact minimum L2 distance from each evaluation point to the coreset.

    Brute force over all pairs, blocked over evaluation points; each point's
    value is independent of blocking and thread count.
    """
    if coreset_points.d != eval_points.d:
        raise DataError(
            f"dimension mismatch: coreset is {coreset_points.d}-d, eval is {eval_points.d}-d"
        )
    coreset = coreset_points.values.astype(np.float64)
    evals = eval_points.values.astype(np.float64)
    n_eval = evals.shape[0]
    block = max(1, _BLOCK_BUDGET // max(1, coreset.shape[0] * coreset.shape[1]))
    spans = [(lo, min(lo + block, n_eval)) for lo in range(0, n_eval, block)]
    out = np.empty(n_eval, dtype=np.float64)
    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(_min_dist_block, coreset, evals[lo:hi]): (lo, hi) for lo, hi in spans}
            for fut, (lo, hi) in futures.items():
                out[lo:hi] = fut.result()
    else:
        for lo, hi in spans:
            out[lo:hi] = _min_dist_block(coreset, evals[lo:hi])
    return out


def _apply_exclusion(distances: np.ndarray, exclude: Iterable[int] | None) -> tuple[np.ndarray, int]:
    if exclude is None:
        return distances, 0
    n = len(distances)
    excl = np.unique(np.asarray(list(exclude), dtype=np.int64))
    if excl.size and (excl[0] < 0 or excl[-1] >= n):
        bad = int(excl[0]) if excl[0] < 0 else int(excl[-1])
        raise DataError(f"excluded evaluation index {bad} outside [0, {n})")
    keep = np.ones(n, dtype=bool)
    keep[excl] = False
    kept = distances[keep]
    if kept.size == 0:
        raise DataError("exclusion removed every evaluation point")
    return kept, int(excl.size)


def pr_curve(
    coreset_points: EmbeddingMatrix,
    eval_points: EmbeddingMatrix,
    exclude: Iterable[int] | None = None,
    threads: int = 1,
) -> PRCurve:
    """Empirical coverage curve: sorted nearest-coreset distances against
    uniform coverage steps. `exclude` drops evaluation rows (outlier filter)."""
    distances = min_distances(coreset_points, eval_points, threads=threads)
    kept, n_excluded = _apply_exclusion(distances, exclude)
    radii = np.sort(kept)
    coverage = np.arange(1, len(radii) + 1, dtype=np.float64) / len(radii)
    return PRCurve(radii=radii, coverage=coverage, excluded_count=n_excluded)


def auc_pr(curve: PRCurve) -> float:
    """Area under the coverage curve: the exact integral of the empirical
    step function, i.e. the equal-weight mean of the radii."""
    return float(curve.radii.mean())


def auc_pr_direct(
    coreset_points: EmbeddingMatrix,
    eval_points: EmbeddingMatrix,
    exclude: Iterable[int] | None = None,
    threads: int = 1,
) -> float:
    """Mean nearest-coreset distance, computed without building the curve."""
    distances = min_distances(coreset_points, eval_points, threads=threads)
    kept, _ = _apply_exclusion(distances, exclude)
    return float(kept.mean())


def partial_cover_radius(curve: PRCurve, p: float) -> float:
    """Smallest radius on the curve whose coverage reaches p."""
    if not 0 < p <= 1:
        raise DataError(f"coverage target p must be in (0, 1], got {p}")
    idx = int(np.searchsorted(curve.coverage, p, side="left"))
    idx = min(idx, len(curve.radii) - 1)
    return float(curve.radii[idx])


def coverage_report(
    coreset_points: EmbeddingMatrix,
    eval_points: EmbeddingMatrix,
    exclude: Iterable[int] | None = None,
    threads: int = 1,
) -> CoverageReport:
    """Curve plus area, with the curve-vs-direct identity checked."""
    curve = pr_curve(coreset_points, eval_points, exclude=exclude, threads=threads)
    area = auc_pr(curve)
    direct = auc_pr_direct(coreset_points, eval_points, exclude=exclude, threads=threads)
    tol = AUC_IDENTITY_RTOL * max(1.0, abs(direct))
    if abs(area - direct) > tol:
        raise DataError(
            f"coverage area mismatch: curve integral {area!r} vs direct mean {direct!r}"
        )
    return CoverageReport(
        auc_pr=area,
        curve=curve,
        n_eval=curve.n_eval,
        n_excluded=curve.excluded_count,
    )


def compare_coverage(
    selections: Sequence[SelectionResult],
    train_embeddings: EmbeddingMatrix,
    eval_embeddings: EmbeddingMatrix,
    exclude: Iterable[int] | None = None,
    threads: int = 1,
) -> list[dict]:
    """Coverage area per selection, each restricted to its selected train rows."""
    rows = []
    for sel in selections:
        if sel.source_n != train_embeddings.n:
            raise DataError(
                f"selection {sel.method!r} references {sel.source_n} examples but train "
                f"embeddings have {train_embeddings.n} rows"
            )
        subset = EmbeddingMatrix(values=train_embeddings.values[sel.selected])
        area = auc_pr_direct(subset, eval_embeddings, exclude=exclude, threads=threads)
        rows.append(
            {
                "method": sel.method,
                "alpha": sel.params.get("alpha"),
                "auc_pr": area,
                "m": sel.m,
            }
        )
    return rows


def comparison_csv(rows: Sequence[dict]) -> str:
    """The comparison table as CSV: one line per selection."""
    lines = ["method,alpha,auc_pr,m"]
    for row in rows:
        alpha = "" if row["alpha"] is None else row["alpha"]
        lines.append(f"{row['method']},{alpha},{fmt_float(row['auc_pr'])},{row['m']}")
    return "\n".join(lines) + "\n"
