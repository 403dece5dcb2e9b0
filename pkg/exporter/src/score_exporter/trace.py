"""Training traces: per-epoch, per-example records captured during a
training run, decoupled from whatever framework produced them.

Trace file format: JSONL, one record per (epoch, example):

    {"epoch": 0, "id": 17, "correct": true, "target": 3,
     "logits": [...]}          # or "probs": [...]

Every example must appear in every recorded epoch exactly once, and epoch
indices must be contiguous from 0.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class TraceError(ValueError):
    """Malformed or inconsistent training trace."""


@dataclass(frozen=True, eq=False)
class TrainingTrace:
    """Dense view of a trace: epoch-major arrays aligned on example order.

    `logits` and `probs` are (epochs, n, classes) arrays or None when the
    trace did not record them.
    """

    ids: np.ndarray
    targets: np.ndarray
    correct: np.ndarray
    logits: np.ndarray | None = None
    probs: np.ndarray | None = None

    def __post_init__(self):
        ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        targets = np.ascontiguousarray(self.targets, dtype=np.int64)
        correct = np.ascontiguousarray(self.correct, dtype=bool)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "correct", correct)
        n = len(ids)
        if n == 0:
            raise TraceError("trace has no examples")
        if np.unique(ids).size != n:
            raise TraceError("duplicate example ids in trace")
        if len(targets) != n:
            raise TraceError("targets misaligned with ids")
        if correct.ndim != 2 or correct.shape[1] != n:
            raise TraceError(f"correctness must be (epochs, {n}), got {correct.shape}")
        if correct.shape[0] == 0:
            raise TraceError("trace has no epochs")
        for name in ("logits", "probs"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            object.__setattr__(self, name, arr)
            if arr.shape[:2] != correct.shape or arr.ndim != 3:
                raise TraceError(f"{name} must be (epochs, n, classes), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise TraceError(f"non-finite {name} in trace")
        if np.any(targets < 0):
            raise TraceError("negative target class")
        for arr in (self.logits, self.probs):
            if arr is not None and int(targets.max()) >= arr.shape[2]:
                raise TraceError(
                    f"target class {int(targets.max())} outside the {arr.shape[2]} recorded classes"
                )

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def epochs(self) -> int:
        return self.correct.shape[0]

    @property
    def n_classes(self) -> int:
        for arr in (self.logits, self.probs):
            if arr is not None:
                return arr.shape[2]
        return int(self.targets.max()) + 1


def load_trace(path: str | os.PathLike) -> TrainingTrace:
    """Parse and validate a JSONL trace file."""
    p = Path(path)
    if not p.is_file():
        raise TraceError(f"trace file not found: {p}")
    records: dict[int, dict[int, dict]] = {}
    with open(p, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise TraceError(f"{p}:{lineno}: invalid JSON: {e}") from None
            for key in ("epoch", "id", "correct", "target"):
                if key not in rec:
                    raise TraceError(f"{p}:{lineno}: missing key {key!r}")
            epoch, ex_id = int(rec["epoch"]), int(rec["id"])
            per_epoch = records.setdefault(epoch, {})
            if ex_id in per_epoch:
                raise TraceError(f"{p}:{lineno}: example {ex_id} recorded twice in epoch {epoch}")
            per_epoch[ex_id] = rec
    if not records:
        raise TraceError(f"{p}: empty trace")

    epochs = sorted(records)
    if epochs != list(range(len(epochs))):
        missing = next(e for e in range(len(epochs)) if e not in records)
        raise TraceError(f"{p}: missing epoch record {missing} (epochs must be contiguous from 0)")

    ids = sorted(records[0])
    id_set = set(ids)
    for epoch in epochs:
        got = set(records[epoch])
        if got != id_set:
            odd = (id_set ^ got).pop()
            raise TraceError(f"{p}: example {odd} missing or extra in epoch {epoch}")

    n, n_epochs = len(ids), len(epochs)
    targets = np.empty(n, dtype=np.int64)
    correct = np.empty((n_epochs, n), dtype=bool)
    has_logits = all("logits" in records[e][i] for e in epochs for i in ids)
    has_probs = all("probs" in records[e][i] for e in epochs for i in ids)
    logits = probs = None

    for col, ex_id in enumerate(ids):
        first = records[0][ex_id]
        targets[col] = int(first["target"])
        for epoch in epochs:
            rec = records[epoch][ex_id]
            if int(rec["target"]) != targets[col]:
                raise TraceError(f"{p}: example {ex_id} changes target across epochs")
            correct[epoch, col] = bool(rec["correct"])

    def gather(key):
        width = len(records[0][ids[0]][key])
        out = np.empty((n_epochs, n, width), dtype=np.float64)
        for col, ex_id in enumerate(ids):
            for epoch in epochs:
                vec = records[epoch][ex_id][key]
                if len(vec) != width:
                    raise TraceError(f"{p}: example {ex_id} epoch {epoch}: ragged {key}")
                out[epoch, col] = vec
        return out

    if has_logits:
        logits = gather("logits")
    if has_probs:
        probs = gather("probs")
    if not has_logits and not has_probs:
        any_vec = any(
            "logits" in rec or "probs" in rec for e in epochs for rec in records[e].values()
        )
        if any_vec:
            raise TraceError(f"{p}: logits/probs present for some records but not all")

    return TrainingTrace(
        ids=np.array(ids, dtype=np.int64), targets=targets, correct=correct,
        logits=logits, probs=probs,
    )


def save_trace(trace: TrainingTrace, path: str | os.PathLike) -> None:
    """Write the JSONL trace format (mostly useful for the demo and tests)."""
    lines = []
    for epoch in range(trace.epochs):
        for col, ex_id in enumerate(trace.ids.tolist()):
            rec = {
                "epoch": epoch,
                "id": ex_id,
                "correct": bool(trace.correct[epoch, col]),
                "target": int(trace.targets[col]),
            }
            if trace.logits is not None:
                rec["logits"] = [float(v) for v in trace.logits[epoch, col]]
            if trace.probs is not None:
                rec["probs"] = [float(v) for v in trace.probs[epoch, col]]
            lines.append(json.dumps(rec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
