import numpy as np
import pytest

from dglearn.classifier import (KernelConfig, RegularizationConfig,
                                decision_scores, gram, load_model_record,
                                predict, rls_objective, save_model_record,
                                smo_solve, train_rls, train_svm)
from dglearn.graph import eigendecompose, laplacian
from dglearn.nystrom import ExtrapolatedBasis, build_invariant_graph
from oracles import (affinity_oracle, make_dataset,
                     representer_scores_oracle, ridge_alpha_oracle,
                     svm_dual_oracle)

KERNEL = KernelConfig(bandwidth=1.0)


def separable_blobs(rng, per_class=5, gap=6.0, n_extra_unlabeled=0):
    """Two far-apart 2-d blobs; labeled-first layout."""
    n = 2 * per_class + n_extra_unlabeled
    x0 = rng.standard_normal((2, per_class)) * 0.4
    x1 = rng.standard_normal((2, per_class)) * 0.4 + np.array([[gap], [0.0]])
    cols = [x0, x1]
    labels = [0] * per_class + [1] * per_class
    if n_extra_unlabeled:
        half = n_extra_unlabeled // 2
        cols.append(rng.standard_normal((2, half)) * 0.4)
        cols.append(rng.standard_normal((2, n_extra_unlabeled - half)) * 0.4
                    + np.array([[gap], [0.0]]))
        labels += [0] * half + [1] * (n_extra_unlabeled - half)
    feats = np.hstack(cols)
    return make_dataset(feats, labels, n_labeled=2 * per_class)


def invariant_graph_for(dataset):
    lap = laplacian(dataset.features, 1.0)
    spec = eigendecompose(lap)
    return build_invariant_graph(ExtrapolatedBasis(spec.eigenvectors),
                                 spec.eigenvalues)


def test_gram_single_point():
    assert np.allclose(gram(np.array([[2.0]]), KERNEL), [[1.0]])


def test_gram_coincident_points():
    x = np.array([[1.0, 1.0], [0.5, 0.5]])
    assert np.allclose(gram(x, KERNEL), [[1.0, 1.0], [1.0, 1.0]])


def test_gram_is_psd_with_unit_diagonal():
    rng = np.random.default_rng(0)
    k = gram(rng.standard_normal((3, 8)), KERNEL)
    assert np.allclose(np.diag(k), 1.0)
    assert np.linalg.eigvalsh(k)[0] >= -1e-8


def test_median_bandwidth_heuristic():
    from dglearn.classifier import median_bandwidth
    line = np.array([[0.0, 1.0, 10.0]])  # pairwise distances 1, 9, 10
    assert median_bandwidth(line) == 9.0
    assert median_bandwidth(np.zeros((2, 1))) == 1.0  # no pairs: safe default


def test_rls_reduces_to_kernel_ridge_oracle():
    rng = np.random.default_rng(1)
    data = separable_blobs(rng, per_class=4, n_extra_unlabeled=4)
    reg = RegularizationConfig(lambda1=0.5, lambda2=0.0)
    model = train_rls(data, None, reg, KERNEL)
    oracle = ridge_alpha_oracle(data.features, data.labels, data.n_labeled,
                                data.n_classes, 0.5, 1.0)
    assert np.allclose(model.coefficients, oracle, atol=1e-8)


def test_rls_interpolates_single_labeled_point():
    rng = np.random.default_rng(2)
    feats = np.hstack([np.array([[0.0], [0.0]]), rng.standard_normal((2, 3)) + 4.0])
    data = make_dataset(feats, [1, 0, 0, 0], n_labeled=1)
    model = train_rls(data, None, RegularizationConfig(1e-6, 0.0), KERNEL)
    assert predict(model, np.array([[0.0], [0.0]]))[0] == 1


def test_rls_stationarity_by_finite_differences():
    rng = np.random.default_rng(3)
    data = separable_blobs(rng, per_class=3, n_extra_unlabeled=6)
    graph = invariant_graph_for(data)
    reg = RegularizationConfig(lambda1=0.4, lambda2=0.2)
    model = train_rls(data, graph, reg, KERNEL)
    alpha = model.coefficients
    step = 1e-6
    grad = np.zeros_like(alpha)
    for i in range(alpha.shape[0]):
        for c in range(alpha.shape[1]):
            up = alpha.copy()
            up[i, c] += step
            down = alpha.copy()
            down[i, c] -= step
            grad[i, c] = (rls_objective(up, data, graph, reg, KERNEL)
                          - rls_objective(down, data, graph, reg, KERNEL)) / (2 * step)
    assert np.linalg.norm(grad) < 1e-6


def test_rls_requires_labels_and_graph_consistency():
    rng = np.random.default_rng(4)
    data = separable_blobs(rng, per_class=2)
    with pytest.raises(ValueError, match="invariant graph"):
        train_rls(data, None, RegularizationConfig(1.0, 0.1), KERNEL)
    unlabeled = make_dataset(data.features, data.true_labels, n_labeled=0)
    with pytest.raises(ValueError, match="labeled"):
        train_rls(unlabeled, None, RegularizationConfig(1.0, 0.0), KERNEL)


def test_rls_geometric_penalty_nonnegative():
    rng = np.random.default_rng(5)
    data = separable_blobs(rng, per_class=3, n_extra_unlabeled=4)
    graph = invariant_graph_for(data)
    model = train_rls(data, graph, RegularizationConfig(0.3, 0.05), KERNEL)
    f = gram(data.features, KERNEL) @ model.coefficients
    penalty = float(np.sum(f * (graph.matrix @ f)))
    assert np.isfinite(penalty) and penalty >= -1e-9


def test_predict_recovers_training_point_class():
    rng = np.random.default_rng(6)
    data = separable_blobs(rng, per_class=3)
    model = train_rls(data, None, RegularizationConfig(1e-4, 0.0), KERNEL)
    got = predict(model, data.features[:, :data.n_labeled])
    assert np.array_equal(got, data.labels[:data.n_labeled])


def test_predict_tie_breaks_to_lowest_class():
    data = make_dataset(np.array([[-1.0, 1.0], [0.0, 0.0]]), [0, 1])
    model = train_rls(data, None, RegularizationConfig(0.1, 0.0), KERNEL)
    midpoint = np.zeros((2, 1))
    scores = decision_scores(model, midpoint)
    assert abs(scores[0, 0] - scores[1, 0]) < 1e-12
    assert predict(model, midpoint)[0] == 0


def test_predict_matches_representer_oracle():
    rng = np.random.default_rng(7)
    data = separable_blobs(rng, per_class=4, n_extra_unlabeled=2)
    graph = invariant_graph_for(data)
    model = train_rls(data, graph, RegularizationConfig(0.7, 0.01), KERNEL)
    queries = rng.standard_normal((2, 5)) * 3.0
    scores = decision_scores(model, queries)
    oracle = representer_scores_oracle(model.coefficients, model.bias,
                                       model.training_features, queries, 1.0)
    assert np.allclose(scores, oracle, atol=1e-10)


def test_predict_rejects_dimension_mismatch():
    data = make_dataset(np.zeros((2, 2)), [0, 1])
    model = train_rls(data, None, RegularizationConfig(1.0, 0.0), KERNEL)
    with pytest.raises(ValueError, match="dimension"):
        predict(model, np.zeros((3, 1)))


def test_svm_separable_pair_hits_bounds():
    feats = np.array([[0.0, 6.0], [0.0, 0.0]])
    data = make_dataset(feats, [0, 1])
    model = train_svm(data, None, RegularizationConfig(1.0, 0.0), KERNEL)
    got = predict(model, feats)
    assert np.array_equal(got, [0, 1])
    # With lambda1 this large the unconstrained pair optimum exceeds the box,
    # so both multipliers sit at the 1/l bound.
    y = np.array([1.0, -1.0])
    k_ll = affinity_oracle(feats, feats, 1.0)
    q = (k_ll / 2.0) * np.outer(y, y)
    beta, _ = smo_solve(q, y, 0.5)
    assert np.allclose(beta, [0.5, 0.5], atol=1e-10)


def test_smo_dual_feasibility_and_monotone_objective():
    rng = np.random.default_rng(8)
    for _ in range(5):
        l = 10
        y = np.array([1.0] * 5 + [-1.0] * 5)
        a = rng.standard_normal((l + 2, l))
        base = a.T @ a / l
        q = base * np.outer(y, y)
        box = 1.0 / l
        beta, info = smo_solve(q, y, box)
        assert abs(beta @ y) <= 1e-10
        assert beta.min() >= 0.0 and beta.max() <= box + 1e-15
        diffs = np.diff(info.objective_per_pass)
        if diffs.size:
            assert diffs.min() >= -1e-12


def test_svm_matches_brute_force_dual_oracle():
    rng = np.random.default_rng(9)
    data = separable_blobs(rng, per_class=5)
    lam1 = 1.0
    model = train_svm(data, None, RegularizationConfig(lam1, 0.0), KERNEL)
    got = predict(model, data.features)

    l = data.n_labeled
    y = np.where(data.labels[:l] == 1, 1.0, -1.0)
    k_ll = affinity_oracle(data.features[:, :l], data.features[:, :l], 1.0)
    q = (k_ll / (2.0 * lam1)) * np.outer(y, y)
    beta = svm_dual_oracle(q, y, 1.0 / l)
    f = (k_ll / (2.0 * lam1)) @ (y * beta)
    free = (beta > 1e-6) & (beta < 1.0 / l - 1e-6)
    b = float(np.mean(y[free] - f[free])) if free.any() else 0.0
    oracle_pred = (f + b > 0).astype(int)
    assert np.array_equal(got, oracle_pred)


def test_svm_single_class_split_warns_and_scores_constant():
    feats = np.array([[0.0, 0.5, 4.0], [0.0, 0.5, 4.0]])
    data = make_dataset(feats, [0, 0, 1], n_labeled=2)  # only class 0 labeled
    with pytest.warns(RuntimeWarning, match="single-class"):
        model = train_svm(data, None, RegularizationConfig(1.0, 0.0), KERNEL)
    assert np.array_equal(predict(model, feats), [0, 0, 0])


def test_svm_with_graph_runs_and_classifies():
    rng = np.random.default_rng(10)
    data = separable_blobs(rng, per_class=4, n_extra_unlabeled=4)
    graph = invariant_graph_for(data)
    model = train_svm(data, graph, RegularizationConfig(0.5, 0.01), KERNEL)
    got = predict(model, data.features[:, :data.n_labeled])
    assert np.array_equal(got, data.labels[:data.n_labeled])


def test_model_record_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    data = separable_blobs(rng, per_class=3)
    model = train_svm(data, None, RegularizationConfig(0.9, 0.0), KERNEL)
    path = tmp_path / "model.txt"
    save_model_record(model, path)
    rec = load_model_record(path)
    assert rec["kind"] == "svm"
    assert rec["bandwidth"] == 1.0
    assert rec["lambda1"] == 0.9 and rec["lambda2"] == 0.0
    assert np.array_equal(rec["coefficients"], model.coefficients)
    assert np.array_equal(rec["bias"], model.bias)
