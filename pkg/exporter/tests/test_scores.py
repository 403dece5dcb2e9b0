import math

import numpy as np
import pytest

from score_exporter import (
    TraceError,
    TrainingTrace,
    aum_score,
    canonicalize,
    el2n_score,
    entropy_score,
    forgetting_score,
)


def correctness_trace(flags):
    """Single-example trace with the given per-epoch correctness."""
    flags = np.asarray(flags, dtype=bool).reshape(-1, 1)
    return TrainingTrace(ids=[0], targets=[0], correct=flags)


def full_trace(logits, targets, correct=None):
    logits = np.asarray(logits, dtype=float)
    epochs, n, _ = logits.shape
    probs = np.exp(logits - logits.max(axis=2, keepdims=True))
    probs /= probs.sum(axis=2, keepdims=True)
    if correct is None:
        correct = logits.argmax(axis=2) == np.asarray(targets)[None, :]
    return TrainingTrace(ids=np.arange(n), targets=targets, correct=correct,
                         logits=logits, probs=probs)


# --- forgetting ---

@pytest.mark.parametrize("flags,expect", [
    ([1, 1, 1, 1], 0),
    ([1, 0, 1, 0], 2),
    ([0, 0, 1, 1], 0),
    ([0, 1, 0, 1, 0], 2),
])
def test_forgetting_counts_transitions(flags, expect):
    table = forgetting_score(correctness_trace(flags))
    assert table.scores[0] == expect
    assert table.orientation == "higher_is_harder"
    assert table.score_kind == "forgetting"


def test_forgetting_needs_two_epochs():
    with pytest.raises(TraceError, match="2 epochs"):
        forgetting_score(correctness_trace([1]))


def test_forgetting_zero_for_monotone_correctness():
    rng = np.random.default_rng(0)
    for _ in range(20):
        cut = int(rng.integers(0, 8))
        flags = [0] * cut + [1] * (8 - cut)
        assert forgetting_score(correctness_trace(flags)).scores[0] == 0


# --- area under the margin ---

def test_aum_constant_margin():
    logits = np.tile(np.array([[[1.0, 2.0, 0.5]]]), (5, 1, 1))
    table = aum_score(full_trace(logits, targets=[1]))
    assert table.scores[0] == pytest.approx(1.0)
    assert table.orientation == "lower_is_harder"


def test_aum_mean_over_epochs():
    # margins +1 then -1 average to zero
    logits = np.array([[[2.0, 1.0]], [[0.0, 1.0]]])
    table = aum_score(full_trace(logits, targets=[0]))
    assert table.scores[0] == pytest.approx(0.0)


def test_aum_matches_direct_recomputation():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(7, 12, 4))
    targets = rng.integers(0, 4, size=12)
    table = aum_score(full_trace(logits, targets=targets))
    for i in range(12):
        margins = []
        for e in range(7):
            row = logits[e, i]
            others = np.delete(row, targets[i])
            margins.append(row[targets[i]] - others.max())
        assert table.scores[i] == pytest.approx(np.mean(margins), rel=1e-12)


def test_aum_single_class_rejected():
    logits = np.zeros((3, 2, 1))
    trace = TrainingTrace(ids=[0, 1], targets=[0, 0],
                          correct=np.ones((3, 2), dtype=bool), logits=logits)
    with pytest.raises(TraceError, match="single-class"):
        aum_score(trace)


def test_aum_probability_fallback_recorded():
    rng = np.random.default_rng(2)
    probs = rng.dirichlet(np.ones(3), size=(4, 6))
    trace = TrainingTrace(ids=np.arange(6), targets=rng.integers(0, 3, 6),
                          correct=np.ones((4, 6), dtype=bool), probs=probs)
    table = aum_score(trace)
    assert table.metadata["margin_source"] == "probs"


def test_aum_canonicalize_negates():
    logits = np.tile(np.array([[[3.0, 1.0]]]), (2, 1, 1))
    table = aum_score(full_trace(logits, targets=[0]))
    canon = canonicalize(table)
    assert canon.orientation == "higher_is_harder"
    assert canon.scores[0] == pytest.approx(-2.0)


# --- error L2 norm ---

def test_el2n_zero_for_perfect_prediction():
    probs = np.zeros((1, 1, 3))
    probs[0, 0, 2] = 1.0
    trace = TrainingTrace(ids=[0], targets=[2], correct=[[True]], probs=probs)
    assert el2n_score(trace, epochs_used=1).scores[0] == 0.0


def test_el2n_uniform_binary():
    trace = TrainingTrace(ids=[0], targets=[0], correct=[[True]],
                          probs=[[[0.5, 0.5]]])
    assert el2n_score(trace, epochs_used=1).scores[0] == pytest.approx(math.sqrt(0.5), abs=1e-12)


def test_el2n_matches_direct_recomputation():
    rng = np.random.default_rng(3)
    probs = rng.dirichlet(np.ones(5), size=(10, 8))
    targets = rng.integers(0, 5, size=8)
    trace = TrainingTrace(ids=np.arange(8), targets=targets,
                          correct=np.ones((10, 8), dtype=bool), probs=probs)
    table = el2n_score(trace, epochs_used=4)
    for i in range(8):
        norms = []
        for e in range(4):
            onehot = np.zeros(5)
            onehot[targets[i]] = 1.0
            norms.append(np.linalg.norm(probs[e, i] - onehot))
        assert table.scores[i] == pytest.approx(np.mean(norms), abs=1e-6)


def test_el2n_rejects_unnormalized():
    trace = TrainingTrace(ids=[0], targets=[0], correct=[[True]],
                          probs=[[[0.9, 0.9]]])
    with pytest.raises(TraceError, match="not normalized"):
        el2n_score(trace, epochs_used=1)


def test_el2n_rejects_short_trace():
    trace = TrainingTrace(ids=[0], targets=[0], correct=[[True]],
                          probs=[[[1.0, 0.0]]])
    with pytest.raises(TraceError, match="first 10 epochs"):
        el2n_score(trace, epochs_used=10)


def test_el2n_needs_probs():
    trace = TrainingTrace(ids=[0], targets=[0], correct=[[True]],
                          logits=[[[1.0, 0.0]]])
    with pytest.raises(TraceError, match="probability vectors"):
        el2n_score(trace, epochs_used=1)


# --- entropy ---

def test_entropy_one_hot_is_zero():
    trace = TrainingTrace(ids=[0], targets=[0], correct=[[True]],
                          probs=[[[1.0, 0.0, 0.0]]])
    assert entropy_score(trace).scores[0] == 0.0


@pytest.mark.parametrize("C", [2, 3, 7])
def test_entropy_uniform_is_log_c(C):
    probs = np.full((1, 1, C), 1.0 / C)
    trace = TrainingTrace(ids=[0], targets=[0], correct=[[True]], probs=probs)
    assert entropy_score(trace).scores[0] == pytest.approx(math.log(C), abs=1e-12)


def test_entropy_binary_half():
    trace = TrainingTrace(ids=[0], targets=[1], correct=[[True]],
                          probs=[[[0.5, 0.5]]])
    assert entropy_score(trace).scores[0] == pytest.approx(math.log(2), abs=1e-12)


def test_entropy_uses_final_epoch():
    probs = np.stack([np.full((1, 2), 0.5), np.array([[1.0, 0.0]])])
    trace = TrainingTrace(ids=[0], targets=[0], correct=[[True], [True]], probs=probs)
    assert entropy_score(trace).scores[0] == 0.0


def test_entropy_bounds():
    rng = np.random.default_rng(4)
    probs = rng.dirichlet(np.ones(6), size=(3, 30))
    trace = TrainingTrace(ids=np.arange(30), targets=rng.integers(0, 6, 30),
                          correct=np.ones((3, 30), dtype=bool), probs=probs)
    scores = entropy_score(trace).scores
    assert np.all(scores >= 0) and np.all(scores <= math.log(6) + 1e-12)


# --- ordering invariance of every score ---

def test_scores_invariant_to_record_order(tmp_path):
    from score_exporter import load_trace, save_trace

    rng = np.random.default_rng(5)
    logits = rng.normal(size=(6, 9, 4))
    probs = np.exp(logits)
    probs /= probs.sum(axis=2, keepdims=True)
    trace = TrainingTrace(ids=np.arange(9), targets=rng.integers(0, 4, 9),
                          correct=rng.random((6, 9)) > 0.4, logits=logits, probs=probs)
    p = tmp_path / "t.jsonl"
    save_trace(trace, p)
    lines = p.read_text().strip().split("\n")
    q = tmp_path / "r.jsonl"
    q.write_text("\n".join(reversed(lines)) + "\n")
    a, b = load_trace(p), load_trace(q)
    for score in (forgetting_score, aum_score, entropy_score):
        np.testing.assert_array_equal(score(a).scores, score(b).scores)
    np.testing.assert_array_equal(
        el2n_score(a, epochs_used=3).scores, el2n_score(b, epochs_used=3).scores
    )
