"""Difficulty scores computed from training traces.

Four classics:
  * forgetting: how many times an example flips from correctly to
    incorrectly classified between consecutive epochs. Never-learned
    examples score 0, like always-learned ones.
  * area under the margin: mean over epochs of (target score minus the
    best non-target score). Low margin means hard or mislabeled, so the
    orientation is lower_is_harder.
  * error L2 norm: mean over the first few epochs of the L2 distance
    between the softmax output and the one-hot target.
  * entropy: Shannon entropy of the final checkpoint's output.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .trace import TrainingTrace, TraceError

PROB_TOLERANCE = 1e-4


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Scores aligned with ids and target labels, plus orientation metadata."""

    ids: np.ndarray
    labels: np.ndarray
    scores: np.ndarray
    score_kind: str
    orientation: str
    metadata: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "ids", np.ascontiguousarray(self.ids, dtype=np.int64))
        object.__setattr__(self, "labels", np.ascontiguousarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "scores", np.ascontiguousarray(self.scores, dtype=np.float64))

    @property
    def n(self) -> int:
        return len(self.ids)


def canonicalize(table: ScoreTable) -> ScoreTable:
    """Flip lower_is_harder tables to the canonical higher_is_harder form."""
    if table.orientation == "higher_is_harder":
        return table
    return replace(table, scores=-table.scores, orientation="higher_is_harder")


def forgetting_score(trace: TrainingTrace) -> ScoreTable:
    """Count of correct-to-incorrect transitions across consecutive epochs."""
    if trace.epochs < 2:
        raise TraceError(f"forgetting needs at least 2 epochs, trace has {trace.epochs}")
    forgotten = trace.correct[:-1] & ~trace.correct[1:]
    return ScoreTable(
        ids=trace.ids,
        labels=trace.targets,
        scores=forgotten.sum(axis=0).astype(np.float64),
        score_kind="forgetting",
        orientation="higher_is_harder",
    )


def _margin_source(trace: TrainingTrace) -> tuple[np.ndarray, str]:
    # margins prefer raw logits; probabilities are a per-epoch monotone fallback
    if trace.logits is not None:
        return trace.logits, "logits"
    if trace.probs is not None:
        return trace.probs, "probs"
    raise TraceError("margin score needs logits or probs recorded in the trace")


def aum_score(trace: TrainingTrace) -> ScoreTable:
    """Mean margin between the target class and the strongest other class.

    Orientation is lower_is_harder (small or negative margins flag hard and
    mislabeled examples); `canonicalize` or the exporter flips it.
    """
    values, source = _margin_source(trace)
    if values.shape[2] < 2:
        raise TraceError("margin score undefined for single-class traces")
    cols = np.arange(trace.n)
    target_vals = values[:, cols, trace.targets]
    masked = values.copy()
    masked[:, cols, trace.targets] = -np.inf
    best_other = masked.max(axis=2)
    margins = (target_vals - best_other).mean(axis=0)
    return ScoreTable(
        ids=trace.ids,
        labels=trace.targets,
        scores=margins,
        score_kind="aum",
        orientation="lower_is_harder",
        metadata={"margin_source": source, "epochs_used": trace.epochs},
    )


def _require_normalized(probs: np.ndarray, context: str) -> None:
    sums = probs.sum(axis=-1)
    bad = np.abs(sums - 1.0) > PROB_TOLERANCE
    if np.any(bad) or np.any(probs < -PROB_TOLERANCE):
        raise TraceError(f"{context}: probability vectors not normalized")


def el2n_score(trace: TrainingTrace, epochs_used: int = 10) -> ScoreTable:
    """Mean L2 norm of (probs - onehot(target)) over the first epochs_used epochs."""
    if epochs_used < 1:
        raise TraceError(f"epochs_used must be >= 1, got {epochs_used}")
    if trace.probs is None:
        raise TraceError("error-norm score needs probability vectors recorded in the trace")
    if trace.epochs < epochs_used:
        raise TraceError(
            f"error-norm score needs the first {epochs_used} epochs, trace has {trace.epochs}"
        )
    probs = trace.probs[:epochs_used]
    _require_normalized(probs, "error-norm score")
    onehot = np.zeros_like(probs[0])
    onehot[np.arange(trace.n), trace.targets] = 1.0
    norms = np.sqrt(((probs - onehot[None]) ** 2).sum(axis=2))
    return ScoreTable(
        ids=trace.ids,
        labels=trace.targets,
        scores=norms.mean(axis=0),
        score_kind="el2n",
        orientation="higher_is_harder",
        metadata={"epochs_used": epochs_used},
    )


def entropy_score(trace: TrainingTrace) -> ScoreTable:
    """Shannon entropy (natural log) of the final epoch's probability vectors."""
    if trace.probs is None:
        raise TraceError("entropy score needs probability vectors recorded in the trace")
    probs = trace.probs[-1]
    _require_normalized(probs, "entropy score")
    clipped = np.clip(probs, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(clipped > 0, clipped * np.log(clipped), 0.0)
    return ScoreTable(
        ids=trace.ids,
        labels=trace.targets,
        scores=-terms.sum(axis=1),
        score_kind="entropy",
        orientation="higher_is_harder",
    )
