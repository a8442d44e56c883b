from collections import Counter

import numpy as np
import pytest

from pressmat.baselines import (
    _lloyd,
    _seed_centroids,
    build_bmi_classes,
    gnb_classify,
    gnb_fit,
    kmeans,
    knn_classify,
    knn_classify_batch,
    linreg_fit,
    linreg_predict,
)
from pressmat.dataset import SubjectRecord

from conftest import make_subject


def oracle_knn(train_x, train_y, query, k, metric):
    """Straight-from-definition kNN with explicit tie rules."""
    dists = []
    for i, row in enumerate(train_x):
        if metric == "euclidean":
            d = sum((a - b) ** 2 for a, b in zip(row, query)) ** 0.5
        elif metric == "cosine":
            dot = sum(a * b for a, b in zip(row, query))
            na = sum(a * a for a in row) ** 0.5
            nb = sum(b * b for b in query) ** 0.5
            d = 1.0 - dot / (na * nb)
        else:
            d = sum(abs(a - b) ** 3 for a, b in zip(row, query)) ** (1.0 / 3.0)
        dists.append((d, i))
    dists.sort(key=lambda t: (t[0], t[1]))
    votes = Counter(train_y[i] for _, i in dists[:k])
    top = max(votes.values())
    return min(c for c, n in votes.items() if n == top)


class TestKnn:
    def test_query_equals_training_point(self):
        x = np.array([[1.0, 2.0], [5.0, 5.0]])
        y = np.array([0, 1])
        assert knn_classify(x, y, [5.0, 5.0], k=1) == 1

    def test_one_dimensional_nearest(self):
        x = np.array([[0.0], [10.0]])
        y = np.array([0, 1])
        assert knn_classify(x, y, [4.0], k=1, metric="euclidean") == 0

    def test_cosine_scale_invariance(self):
        x = np.array([[1.0, 2.0], [-3.0, 1.0]])
        y = np.array([0, 1])
        assert knn_classify(x, y, [2.0, 4.0], k=1, metric="cosine") == 0

    def test_cosine_zero_vector_rejected(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        y = np.array([0, 1])
        with pytest.raises(ValueError):
            knn_classify(x, y, [0.0, 0.0], k=1, metric="cosine")

    def test_vote_tie_takes_smallest_class(self):
        x = np.array([[0.0], [1.0], [10.0], [11.0]])
        y = np.array([3, 3, 1, 1])
        assert knn_classify(x, y, [5.5], k=4) == 1

    @pytest.mark.parametrize("metric", ["euclidean", "cosine", "minkowski3"])
    def test_matches_oracle(self, metric):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(30, 4)) + 1.0
        y = rng.integers(0, 4, size=30)
        queries = rng.normal(size=(15, 4)) + 1.0
        got = knn_classify_batch(x, y, queries, k=5, metric=metric)
        want = [oracle_knn(x, y, q, 5, metric) for q in queries]
        assert got.tolist() == want

    def test_k_bounds(self):
        x = np.zeros((3, 2))
        y = np.array([0, 1, 2])
        with pytest.raises(ValueError):
            knn_classify(x, y, [0, 0], k=4)

    def test_self_training_k1_perfect(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(40, 3))
        y = rng.integers(0, 5, size=40)
        got = knn_classify_batch(x, y, x, k=1)
        assert np.array_equal(got, y)

    def test_distance_tie_prefers_earlier_training_row(self):
        # two training points equidistant from the query; k=1 must take row 0
        x = np.array([[-1.0], [1.0]])
        assert knn_classify(x, np.array([7, 2]), [0.0], k=1) == 7
        assert knn_classify(x[::-1], np.array([2, 7]), [0.0], k=1) == 2


class TestGnb:
    def test_separable_perfect(self):
        rng = np.random.default_rng(2)
        x = np.concatenate([rng.normal(-10, 1, (20, 1)), rng.normal(10, 1, (20, 1))])
        y = np.array([0] * 20 + [1] * 20)
        model = gnb_fit(x, y)
        assert np.array_equal(gnb_classify(model, x), y)

    def test_prior_dominance_identical_likelihoods(self):
        x = np.zeros((10, 1))
        y = np.array([0] * 7 + [1] * 3)
        model = gnb_fit(x, y)
        assert np.all(gnb_classify(model, np.zeros((5, 1))) == 0)

    def test_variance_floor(self):
        x = np.array([[1.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 0, 1, 1])
        model = gnb_fit(x, y)
        assert np.all(model.variances > 0)
        assert np.isfinite(gnb_classify(model, [[1.0]])).all()

    def test_missing_class_rejected(self):
        with pytest.raises(ValueError, match="class 2"):
            gnb_fit(np.zeros((4, 1)), np.array([0, 0, 1, 1]), n_classes=3)


class TestLinreg:
    def test_exact_affine_recovery(self):
        x = np.linspace(-5, 5, 20).reshape(-1, 1)
        y = 3.0 * x[:, 0] + 2.0
        model = linreg_fit(x, y)
        assert model.coef[0] == pytest.approx(3.0, abs=1e-9)
        assert model.intercept == pytest.approx(2.0, abs=1e-9)

    def test_pure_noise_r2_near_zero(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(200, 3))
        y = rng.normal(size=200)
        model = linreg_fit(x[:100], y[:100])
        pred = linreg_predict(model, x[100:])
        truth = y[100:]
        r2 = 1 - ((truth - pred) ** 2).sum() / ((truth - truth.mean()) ** 2).sum()
        assert abs(r2) < 0.25

    def test_duplicated_column_minimum_norm(self):
        rng = np.random.default_rng(4)
        x1 = rng.normal(size=(30, 1))
        x = np.hstack([x1, x1])
        y = 2.0 * x1[:, 0] + 1.0
        model = linreg_fit(x, y)
        assert np.all(np.isfinite(model.coef))
        pred = linreg_predict(model, x)
        np.testing.assert_allclose(pred, y, atol=1e-8)
        # minimum-norm splits the weight between the twin columns
        assert model.coef[0] == pytest.approx(model.coef[1], abs=1e-8)

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(50, 4))
        y = rng.normal(size=50)
        model = linreg_fit(x, y)
        res = y - linreg_predict(model, x)
        design = np.hstack([x, np.ones((50, 1))])
        assert np.abs(design.T @ res).max() < 1e-8


class TestKmeans:
    def _blobs(self, rng, k=5, per=30, spread=0.2, sep=20.0):
        centers = rng.normal(size=(k, 2)) * sep
        pts = np.concatenate([c + rng.normal(0, spread, (per, 2)) for c in centers])
        labels = np.repeat(np.arange(k), per)
        return pts, labels

    def test_recovers_separated_blobs(self):
        rng = np.random.default_rng(6)
        pts, truth = self._blobs(rng)
        _, labels = kmeans(pts, 5, restarts=10, seed=0)
        # same partition up to relabeling
        for c in range(5):
            members = labels[truth == c]
            assert len(set(members.tolist())) == 1
        assert len(set(labels.tolist())) == 5

    def test_k_equals_n_zero_inertia(self):
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(6, 2))
        centroids, labels = kmeans(pts, 6, restarts=3, seed=1)
        assert sorted(labels.tolist()) == list(range(6))
        d = ((pts - centroids[labels]) ** 2).sum()
        assert d == pytest.approx(0.0, abs=1e-18)

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        pts, _ = self._blobs(rng)
        _, l1 = kmeans(pts, 5, seed=3)
        _, l2 = kmeans(pts, 5, seed=3)
        assert np.array_equal(l1, l2)

    def test_k_too_large_rejected(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((3, 2)), 4, seed=0)

    def test_lloyd_inertia_non_increasing(self):
        rng = np.random.default_rng(9)
        pts = rng.normal(size=(60, 2))
        c0 = _seed_centroids(pts, 4, np.random.default_rng(0))
        _, _, _, history = _lloyd(pts, c0.copy(), max_iter=100)
        assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


class TestBuildBmiClasses:
    def test_five_singletons_in_order(self):
        subs = {
            f"S{i}": SubjectRecord(f"S{i}", 1.7, b * 1.7 * 1.7)
            for i, b in enumerate([18.0, 22.0, 26.0, 30.0, 34.0])
        }
        classes = build_bmi_classes(subs, mode="bmi", k=5, seed=0)
        ordered = [classes[f"S{i}"] for i in range(5)]
        assert ordered == [0, 1, 2, 3, 4]

    def test_identical_subjects_insufficient_diversity(self):
        subs = {f"S{i}": SubjectRecord(f"S{i}", 1.7, 70.0) for i in range(6)}
        with pytest.raises(ValueError, match="insufficient diversity"):
            build_bmi_classes(subs, mode="bmi", k=5, seed=0)

    def test_weight_height_mode_default(self):
        rng = np.random.default_rng(10)
        subs = {}
        for i in range(13):
            h = rng.uniform(1.55, 1.95)
            w = rng.uniform(50, 105)
            subs[f"S{i:02d}"] = SubjectRecord(f"S{i:02d}", h, w)
        classes = build_bmi_classes(subs, seed=1)
        assert set(classes.values()) == {0, 1, 2, 3, 4}
        # ordinality: class means sorted by BMI
        means = []
        for c in range(5):
            bmis = [subs[s].bmi for s, cls in classes.items() if cls == c]
            means.append(np.mean(bmis))
        assert means == sorted(means)

    def test_age_mode_requires_ages(self):
        subs = {
            "A": make_subject("A", age=30.0),
            "B": SubjectRecord("B", 1.8, 80.0, age_years=None),
        }
        with pytest.raises(ValueError, match="B"):
            build_bmi_classes(subs, mode="age_bmi", k=2, seed=0)
