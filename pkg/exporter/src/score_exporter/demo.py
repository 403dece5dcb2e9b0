"""Minimal end-to-end example: train a toy softmax classifier on synthetic
blobs, log a per-epoch trace, compute all four difficulty scores, and
export toolkit-ready files.

    python -m score_exporter.demo --out-dir demo_out --epochs 12 --seed 0
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .export import EmbeddingExport, export
from .scores import aum_score, el2n_score, entropy_score, forgetting_score
from .trace import TrainingTrace, save_trace


def make_blobs(n_per_class: int, classes: int, seed: int):
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(classes) / classes
    means = 4.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    xs, ys = [], []
    for c in range(classes):
        xs.append(means[c] + rng.normal(size=(n_per_class, 2)))
        ys.append(np.full(n_per_class, c))
    return np.concatenate(xs), np.concatenate(ys)


def train_and_trace(x, y, epochs: int, lr: float = 0.5) -> TrainingTrace:
    n, d = x.shape
    classes = int(y.max()) + 1
    xb = np.hstack([x, np.ones((n, 1))])
    w = np.zeros((d + 1, classes))
    correct = np.empty((epochs, n), dtype=bool)
    logits_log = np.empty((epochs, n, classes))
    probs_log = np.empty((epochs, n, classes))
    for epoch in range(epochs):
        logits = xb @ w
        shifted = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        correct[epoch] = logits.argmax(axis=1) == y
        logits_log[epoch] = logits
        probs_log[epoch] = probs
        grad = probs.copy()
        grad[np.arange(n), y] -= 1.0
        w -= lr * (xb.T @ grad) / n
    return TrainingTrace(
        ids=np.arange(n), targets=y, correct=correct, logits=logits_log, probs=probs_log
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="demo_out")
    parser.add_argument("--epochs", type=int, default=12)
    parser.add_argument("--per-class", type=int, default=40)
    parser.add_argument("--classes", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    x, y = make_blobs(args.per_class, args.classes, args.seed)
    trace = train_and_trace(x, y, epochs=args.epochs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_trace(trace, out / "trace.jsonl")

    tables = [
        forgetting_score(trace),
        aum_score(trace),
        el2n_score(trace, epochs_used=min(10, trace.epochs)),
        entropy_score(trace),
    ]
    embeddings = EmbeddingExport(ids=trace.ids, values=x.astype(np.float32))
    written = export(tables, embeddings, out)
    final_acc = float(trace.correct[-1].mean())
    print(f"trained {args.epochs} epochs, final train accuracy {final_acc:.3f}")
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
