import json

import numpy as np
import pytest

import siamgcn


def random_graph(n, density, rng):
    w = np.triu(rng.uniform(0.1, 2.0, (n, n)) * (rng.random((n, n)) < density), 1)
    return w + w.T


def test_laplacian_matches_numpy():
    rng = np.random.default_rng(0)
    w = random_graph(12, 0.4, rng)
    lap, lmax = siamgcn.normalized_laplacian(w)
    d = w.sum(axis=1)
    inv = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 0.0)
    expected = np.eye(12) - inv[:, None] * w * inv[None, :]
    np.testing.assert_allclose(lap, expected, atol=1e-14)
    assert lmax == pytest.approx(np.linalg.eigvalsh(expected).max(), abs=1e-10)

    values, vectors = siamgcn.symmetric_eig(lap)
    np.testing.assert_allclose(values, np.linalg.eigvalsh(lap), atol=1e-10)
    np.testing.assert_allclose(vectors @ np.diag(values) @ vectors.T, lap, atol=1e-10)


def test_chebyshev_filter_equals_spectral_filter():
    rng = np.random.default_rng(1)
    w = random_graph(15, 0.3, rng)
    lap, lmax = siamgcn.normalized_laplacian(w)
    scaled = siamgcn.rescale_laplacian(lap, lmax)
    signal = rng.normal(size=15)
    theta = rng.normal(size=4).tolist()
    fast = siamgcn.chebyshev_filter(scaled, signal, theta)
    exact = siamgcn.spectral_filter(lap, lmax, signal, theta)
    np.testing.assert_allclose(fast, exact, rtol=0, atol=1e-10 * np.linalg.norm(exact))


def test_loss_and_metrics():
    loss, grad = siamgcn.global_loss([0.5, 0.5], [1, 0])
    assert loss == pytest.approx(0.21, abs=1e-12)
    assert grad == pytest.approx([-0.35, 0.35])

    assert siamgcn.roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert siamgcn.knn_classify(np.array([[0.0, 1.0, 2.0]]), [1, 0, 0], 1) == [1]
    assert siamgcn.permutation_test([0.0] * 20, [5.0] * 20, 999, 3) == pytest.approx(1e-3)

    pairs = siamgcn.sample_pairs([0, 1] * 10, ["a", "b"] * 10, 40, 2)
    assert len(pairs) == 40
    assert sum(match for _, _, match, _ in pairs) == 20


def test_pearson_and_pca():
    rng = np.random.default_rng(2)
    ts = rng.normal(size=(50, 6))
    np.testing.assert_allclose(siamgcn.pearson_profiles(ts), np.corrcoef(ts.T), atol=1e-12)
    train = rng.normal(size=(10, 5))
    test = rng.normal(size=(4, 5))
    d = siamgcn.pca_euclidean_baseline(train, test, 1.0)
    assert d.shape == (4, 4)
    np.testing.assert_allclose(np.diag(d), 0.0)


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    w = random_graph(8, 0.5, rng)
    lap, lmax = siamgcn.normalized_laplacian(w)
    model = siamgcn.Model.init(siamgcn.rescale_laplacian(lap, lmax), 8, [4, 4], 2, seed=5)
    assert model.num_nodes == 8
    assert model.parameter_count == 8 * 4 * 3 + 4 * 4 * 3 + 9 + 1
    a, b = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
    s = model.similarity(a, b, True)
    assert 0.0 < s < 1.0
    assert model.similarity(a, b, True) == model.similarity(b, a, True)
    assert model.embed(a).shape == (8, 4)

    path = tmp_path / "model.json"
    model.save(path, siamgcn.graph_hash(w), 5, 1)
    assert siamgcn.load_checkpoint(path).similarity(a, b, True) == s


def test_pipeline(tmp_path):
    overrides = {
        "synth.subjects": "24",
        "synth.rois": "8",
        "synth.timepoints": "40",
        "graph.k": "3",
        "model.widths": "4,4",
        "model.k_order": "2",
        "train.epochs": "2",
        "train.pair_budget": "60",
        "train.test_fraction": "0.3",
        "eval.n_perm": "100",
    }
    for step in ("synth", "preprocess", "train"):
        assert siamgcn.run(step, tmp_path, overrides=overrides) is None
    report = siamgcn.run("evaluate", tmp_path, overrides=overrides)
    n = report["n_subjects"]
    assert report["n_pairs"] == n * (n - 1) // 2
    assert 0.0 <= report["learned"]["auc"] <= 1.0
    assert json.loads((tmp_path / "eval" / "report.json").read_text())["n_pairs"] == report["n_pairs"]
    p = siamgcn.run("permtest", tmp_path, overrides=overrides, distances="eval/distances.csv")
    assert 0.0 < p <= 1.0


def test_errors(tmp_path):
    with pytest.raises(siamgcn.ValidationError):
        siamgcn.global_loss([0.4, 0.6], [1, 1])
    with pytest.raises(ValueError):
        siamgcn.run("train", tmp_path)
    with pytest.raises(siamgcn.ValidationError, match="unknown config key"):
        siamgcn.run("synth", tmp_path, overrides={"graph.bogus": "1"})
    with pytest.raises(siamgcn.ValidationError):
        siamgcn.normalized_laplacian(np.array([[0.0, 1.0], [2.0, 0.0]]))
