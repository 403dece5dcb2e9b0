import numpy as np
import pytest

from coresel import (
    DataError,
    EmbeddingMatrix,
    ScoreTable,
    SelectionResult,
    analytic_difficulty,
    beta_grid_search,
    generate_mixture,
    inject_label_noise,
    knn_accuracy,
    logreg_accuracy,
    random_select,
    sweep,
    topk_hard_select,
)
from coresel.synthbench import (
    SyntheticDataset,
    class_posteriors,
    default_beta_grid,
    logreg_loss_and_grad,
    make_preset,
)


def small_ds(seed=0, sigma=0.25, classes=3, dim=4, size=120):
    return generate_mixture(classes=classes, dim=dim, size=size, sigma=sigma, seed=seed)


def full_selection(ds):
    return SelectionResult(
        selected=np.arange(ds.n_train), method="full", params={}, source_n=ds.n_train
    )


def handmade_ds():
    """C=2 in 2-d with hand-placed points: one at a mean, one equidistant."""
    means = np.array([[0.0, 0.0], [10.0, 0.0]])
    pts = np.array(
        [[0.0, 0.0], [5.0, 0.0], [0.5, 0.1], [9.5, -0.2], [0.2, 0.3], [10.1, 0.1]],
        dtype=np.float32,
    )
    labels = np.array([0, 0, 0, 1, 0, 1])
    return SyntheticDataset(
        points=EmbeddingMatrix(values=pts),
        labels=labels,
        means=means,
        sigma=1.0,
        class_weights=np.array([0.5, 0.5]),
        train_idx=np.array([0, 1, 2, 3]),
        test_idx=np.array([4, 5]),
        clean_labels=labels.copy(),
    )


# --- generate_mixture ---

def test_generate_deterministic():
    a = small_ds(seed=11)
    b = small_ds(seed=11)
    np.testing.assert_array_equal(a.points.values, b.points.values)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.train_idx, b.train_idx)
    np.testing.assert_array_equal(a.means, b.means)


def test_generate_different_seeds_differ():
    a = small_ds(seed=1)
    b = small_ds(seed=2)
    assert not np.array_equal(a.points.values, b.points.values)


def test_generate_class_weights_apportionment():
    ds = generate_mixture(classes=2, dim=2, size=100, sigma=0.1,
                          class_weights=[0.9, 0.1], seed=0)
    counts = np.bincount(ds.labels, minlength=2)
    assert abs(counts[0] - 90) <= 1 and abs(counts[1] - 10) <= 1


def test_generate_split_is_stratified_and_complete():
    ds = small_ds(seed=3)
    assert len(np.intersect1d(ds.train_idx, ds.test_idx)) == 0
    assert len(ds.train_idx) + len(ds.test_idx) == ds.points.n
    for c in range(ds.n_classes):
        assert (ds.labels[ds.train_idx] == c).any()
        assert (ds.labels[ds.test_idx] == c).any()


def test_generate_rejects_degenerate():
    with pytest.raises(DataError):
        generate_mixture(classes=1, dim=2, size=10, sigma=0.1)
    with pytest.raises(DataError):
        generate_mixture(classes=5, dim=2, size=6, sigma=0.1)
    with pytest.raises(DataError):
        generate_mixture(classes=2, dim=2, size=10, sigma=0.0)


def test_separable_mixture_is_nearly_perfectly_classifiable():
    ds = generate_mixture(classes=2, dim=2, size=100, sigma=0.05, seed=0)
    acc = knn_accuracy(full_selection(ds), ds, k_nn=1)
    assert acc >= 0.95


# --- analytic_difficulty ---

def test_difficulty_zero_at_class_mean():
    ds = handmade_ds()
    t = analytic_difficulty(ds)
    assert t.scores[0] < 1e-10  # exactly at its mean, 10 sigma from the other


def test_difficulty_half_at_equidistant_point():
    ds = handmade_ds()
    t = analytic_difficulty(ds)
    assert t.scores[1] == pytest.approx(0.5, abs=1e-12)


def test_difficulty_orientation_and_kind():
    t = analytic_difficulty(small_ds())
    assert t.orientation == "higher_is_harder"
    assert t.score_kind == "synthetic"
    assert t.n == small_ds().n_train


def test_difficulty_matches_direct_bayes_oracle():
    from scipy.stats import multivariate_normal

    ds = small_ds(seed=5, sigma=0.6)  # moderate spread keeps densities representable
    t = analytic_difficulty(ds)
    x = ds.points.values[ds.train_idx].astype(np.float64)
    dens = np.stack(
        [
            ds.class_weights[c]
            * multivariate_normal.pdf(x, mean=ds.means[c], cov=ds.sigma**2 * np.eye(ds.means.shape[1]))
            for c in range(ds.n_classes)
        ],
        axis=1,
    )
    post = dens / dens.sum(axis=1, keepdims=True)
    assigned = ds.labels[ds.train_idx]
    want = 1.0 - post[np.arange(len(assigned)), assigned]
    np.testing.assert_allclose(t.scores, want, atol=1e-12)


def test_posteriors_sum_to_one():
    ds = small_ds(seed=6)
    post = class_posteriors(ds, np.arange(ds.points.n))
    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)


# --- label noise ---

def test_inject_noise_flips_requested_fraction_of_train():
    ds = small_ds(seed=7, size=200)
    noisy = inject_label_noise(ds, 0.1, seed=7)
    flipped = np.flatnonzero(noisy.labels != ds.labels)
    assert len(flipped) == ds.n_train // 10
    assert set(flipped.tolist()) <= set(ds.train_idx.tolist())
    np.testing.assert_array_equal(noisy.labels[ds.test_idx], ds.labels[ds.test_idx])
    np.testing.assert_array_equal(noisy.clean_labels, ds.clean_labels)


def test_inject_noise_targets_hardest():
    ds = small_ds(seed=8, size=200)
    clean_scores = analytic_difficulty(ds).scores
    noisy = inject_label_noise(ds, 0.1, seed=8)
    flipped_rows = np.flatnonzero(noisy.labels != ds.labels)
    flipped_train_pos = np.searchsorted(ds.train_idx, flipped_rows)
    n_flip = len(flipped_rows)
    hardest = np.argsort(-clean_scores, kind="stable")[:n_flip]
    assert set(flipped_train_pos.tolist()) == set(hardest.tolist())


def test_noisy_points_become_hardest_after_rescoring():
    ds = small_ds(seed=9, size=300, sigma=0.3)
    noisy = inject_label_noise(ds, 0.1, seed=9)
    rescored = analytic_difficulty(noisy)
    flipped_rows = np.flatnonzero(noisy.labels != ds.labels)
    flipped_pos = np.searchsorted(ds.train_idx, flipped_rows)
    clean_pos = np.setdiff1d(np.arange(ds.n_train), flipped_pos)
    assert np.median(rescored.scores[flipped_pos]) > np.median(rescored.scores[clean_pos])


# --- knn_accuracy ---

def test_knn_zero_distance_neighbor_wins():
    ds = handmade_ds()
    # test point 4 is near mean 0; train point 0 is exactly at mean 0
    sel = SelectionResult(selected=np.array([0, 3]), method="x", params={}, source_n=4)
    assert knn_accuracy(sel, ds, k_nn=1) == 1.0


def test_knn_single_point_per_class_at_means():
    means = np.array([[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]])
    rng = np.random.default_rng(0)
    pts = [means]
    labels = [np.arange(3)]
    for c in range(3):
        pts.append(means[c] + 0.2 * rng.normal(size=(20, 2)))
        labels.append(np.full(20, c))
    points = np.concatenate(pts).astype(np.float32)
    labels = np.concatenate(labels)
    ds = SyntheticDataset(
        points=EmbeddingMatrix(values=points),
        labels=labels,
        means=means,
        sigma=0.2,
        class_weights=np.full(3, 1 / 3),
        train_idx=np.arange(3),
        test_idx=np.arange(3, len(points)),
        clean_labels=labels.copy(),
    )
    sel = SelectionResult(selected=np.arange(3), method="x", params={}, source_n=3)
    assert knn_accuracy(sel, ds, k_nn=1) >= 0.9


def test_knn_full_subset_on_separable_data():
    ds = generate_mixture(classes=3, dim=4, size=150, sigma=0.05, seed=1)
    assert knn_accuracy(full_selection(ds), ds, k_nn=5) >= 0.95


def test_knn_clamps_oversized_k_with_warning():
    ds = small_ds()
    sel = random_select(analytic_difficulty(ds), 0.9, 0)
    with pytest.warns(UserWarning, match="clamping"):
        a = knn_accuracy(sel, ds, k_nn=10**6)
    assert 0.0 <= a <= 1.0


def test_knn_vote_tie_goes_to_nearest():
    # one vote each at k=2: the nearer neighbor's label must win
    means = np.array([[0.0], [1.0]])
    pts = np.array([[0.0], [1.0], [0.4], [0.6]], dtype=np.float32)
    labels = np.array([0, 1, 0, 1])
    ds = SyntheticDataset(
        points=EmbeddingMatrix(values=pts),
        labels=labels,
        means=means,
        sigma=1.0,
        class_weights=np.array([0.5, 0.5]),
        train_idx=np.array([0, 1]),
        test_idx=np.array([2, 3]),
        clean_labels=labels.copy(),
    )
    sel = SelectionResult(selected=np.arange(2), method="x", params={}, source_n=2)
    assert knn_accuracy(sel, ds, k_nn=2) == 1.0


# --- logreg ---

def test_logreg_zero_epochs_predicts_fixed_class():
    ds = small_ds(seed=10, classes=2, size=100)
    acc = logreg_accuracy(full_selection(ds), ds, epochs=0)
    test_labels = ds.labels[ds.test_idx]
    prior0 = float((test_labels == 0).mean())
    assert acc == pytest.approx(prior0)
    assert acc == pytest.approx(max((test_labels == c).mean() for c in range(2)))


def test_logreg_learns_separable_data():
    ds = generate_mixture(classes=2, dim=3, size=120, sigma=0.1, seed=2)
    assert logreg_accuracy(full_selection(ds), ds, epochs=200, learning_rate=0.5) >= 0.95


def test_logreg_diverging_lr_raises():
    ds = generate_mixture(classes=2, dim=3, size=80, sigma=0.3, seed=3)
    with pytest.raises(DataError, match="learning rate"):
        logreg_accuracy(full_selection(ds), ds, epochs=5000, learning_rate=1e12)


def test_logreg_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    for trial in range(5):
        x = rng.normal(size=(10, 3))
        x = np.hstack([x, np.ones((10, 1))])
        y = rng.integers(0, 3, size=10)
        w = rng.normal(size=(4, 3)) * 0.5
        _, grad = logreg_loss_and_grad(w, x, y)
        eps = 1e-6
        for _ in range(10):
            i, j = rng.integers(0, 4), rng.integers(0, 3)
            wp, wm = w.copy(), w.copy()
            wp[i, j] += eps
            wm[i, j] -= eps
            lp, _ = logreg_loss_and_grad(wp, x, y)
            lm, _ = logreg_loss_and_grad(wm, x, y)
            fd = (lp - lm) / (2 * eps)
            assert grad[i, j] == pytest.approx(fd, rel=1e-5, abs=1e-10)


# --- sweep ---

def test_sweep_alpha_zero_rows_identical_accuracy():
    ds = small_ds(seed=12)
    result = sweep(ds, methods=["ccs", "random", "topk-hard"], alphas=[0.0],
                   betas=[0.0], ks=[3], seeds=[0])
    accs = {r.accuracy for r in result.rows}
    assert len(accs) == 1


def test_sweep_reproducible_and_thread_invariant():
    ds = small_ds(seed=13)
    kwargs = dict(methods=["ccs", "random"], alphas=[0.5, 0.8], betas=[0.1],
                  ks=[5], seeds=[0, 1], classifier="knn")
    a = sweep(ds, **kwargs)
    b = sweep(ds, **kwargs)
    c = sweep(ds, threads=4, **kwargs)
    assert a.to_csv() == b.to_csv() == c.to_csv()


def test_sweep_csv_shape():
    ds = small_ds(seed=14)
    result = sweep(ds, methods=["random"], alphas=[0.5], betas=[0.0], ks=[1], seeds=[0, 1])
    lines = result.to_csv().strip().split("\n")
    assert lines[0] == "method,alpha,beta,k,seed,accuracy,auc_pr"
    assert len(lines) == 3
    row = lines[1].split(",")
    assert row[0] == "random" and float(row[5]) <= 1.0 and float(row[6]) >= 0.0


def test_sweep_error_carries_grid_coordinates():
    ds = small_ds(seed=15)
    with pytest.raises(DataError, match="alpha=0.2 beta=0.5"):
        sweep(ds, methods=["ccs"], alphas=[0.2], betas=[0.5], ks=[3], seeds=[0])


def test_sweep_random_accuracy_nonincreasing_in_alpha():
    ds = generate_mixture(classes=4, dim=6, size=600, sigma=0.35, seed=20)
    result = sweep(ds, methods=["random"], alphas=[0.1, 0.5, 0.9],
                   betas=[0.0], ks=[1], seeds=[0, 1, 2, 3, 4])
    medians = []
    for alpha in (0.1, 0.5, 0.9):
        medians.append(np.median([r.accuracy for r in result.rows if r.alpha == alpha]))
    # monotone up to seed noise
    assert medians[0] >= medians[1] - 0.02
    assert medians[1] >= medians[2] - 0.02


# --- beta grid search ---

def test_default_beta_grid_contents():
    assert default_beta_grid(0.9) == [0.0, 0.1]
    assert default_beta_grid(0.3) == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]
    assert default_beta_grid(0.95) == [0.0]


def test_beta_grid_singleton():
    ds = small_ds(seed=16)
    result = beta_grid_search(ds, alpha=0.5, k=3, beta_grid=[0.0], seeds=(0, 1))
    assert result.best_beta == 0.0
    assert len(result.rows) == 1


def test_beta_grid_empty_rejected():
    with pytest.raises(DataError, match="empty"):
        beta_grid_search(small_ds(), alpha=0.5, beta_grid=[])


def test_beta_grid_marks_infeasible_entries():
    ds = small_ds(seed=17)
    result = beta_grid_search(ds, alpha=0.3, k=3, beta_grid=[0.0, 0.2, 0.5], seeds=(0,))
    flags = {r.beta: r.feasible for r in result.rows}
    assert flags[0.0] and flags[0.2] and not flags[0.5]
    assert result.best_beta in (0.0, 0.2)


def test_beta_grid_rejects_beta_above_one_minus_alpha():
    ds = small_ds(seed=18)
    with pytest.raises(DataError, match="violates"):
        beta_grid_search(ds, alpha=0.9, beta_grid=[0.2], seeds=(0,))


# --- presets ---

def test_full_train_upper_bounds_pruned_subsets_on_default_preset():
    from coresel import CcsParams, ccs_select
    from coresel.synthbench import PRESETS

    ds = make_preset("default", seed=0)
    tab = analytic_difficulty(ds)
    full_acc = knn_accuracy(full_selection(ds), ds)
    cfg = PRESETS["default"]
    pruned = [knn_accuracy(topk_hard_select(tab, 0.9), ds)]
    for s in range(5):
        pruned.append(knn_accuracy(random_select(tab, 0.9, s), ds))
        pruned.append(knn_accuracy(
            ccs_select(tab, CcsParams(alpha=0.9, beta=cfg["ccs_beta"], k=cfg["ccs_k"], seed=s)), ds
        ))
    assert full_acc + 0.02 >= max(pruned)  # upper bound within seed noise


def test_presets_construct():
    for name in ("default", "separable", "noisy"):
        ds = make_preset(name, seed=0)
        assert ds.points.n == 10000
    with pytest.raises(DataError, match="unknown preset"):
        make_preset("bogus")


def test_noisy_preset_has_flipped_train_labels():
    ds = make_preset("noisy", seed=0)
    assert (ds.labels != ds.clean_labels).sum() == ds.n_train // 10
