"""Tests for oblique-tree growth, the split search, and forest prediction."""

import numpy as np
import pytest

from ccfmap.cca import ColumnStats
from ccfmap.errors import DataError
from ccfmap.forest import (
    CcfModel,
    FlatTree,
    Internal,
    Leaf,
    TrainConfig,
    best_split,
    default_feature_subsample,
    flatten_tree,
    grow_node,
    predict_class,
    predict_class_batch,
    predict_proba,
    predict_proba_batch,
    predict_raster,
    train_forest,
)
from ccfmap.pipeline import SampleSet


def _blobs(n_per_class, n_bands, separation, rng):
    """Two spherical Gaussian classes pushed apart along the all-ones axis."""
    u = np.ones(n_bands) / np.sqrt(n_bands)
    x0 = rng.normal(size=(n_per_class, n_bands)) - 0.5 * separation * u
    x1 = rng.normal(size=(n_per_class, n_bands)) + 0.5 * separation * u
    x = np.vstack([x0, x1])
    y = np.repeat([0, 1], n_per_class)
    perm = rng.permutation(len(y))
    return SampleSet(x[perm], y[perm])


def _perceptron_separable(x, y, epochs=60):
    """True when a linear separator exists (perceptron convergence)."""
    aug = np.hstack([x, np.ones((len(x), 1))])
    sign = np.where(y == 1, 1.0, -1.0)
    w = np.zeros(aug.shape[1])
    for _ in range(epochs):
        errors = 0
        for i in range(len(aug)):
            if sign[i] * (aug[i] @ w) <= 0:
                w += sign[i] * aug[i]
                errors += 1
        if errors == 0:
            return True
    return False


def _scalar_best_split(z, y, k):
    """Pure-python mirror of the split scan, same accumulation order."""
    n = len(y)
    total = [0] * k
    for lab in y:
        total[int(lab)] += 1
    best = None
    for j in range(z.shape[1]):
        order = np.argsort(z[:, j], kind="stable")
        zs = [float(z[i, j]) for i in order]
        ys = [int(y[i]) for i in order]
        left = [0] * k
        for i in range(n - 1):
            left[ys[i]] += 1
            if not (zs[i] < zs[i + 1]):
                continue
            nl = float(i + 1)
            nr = float(n) - nl
            gl = 0.0
            gr = 0.0
            for c in range(k):
                p = left[c] / nl
                gl += p * p
                q = (total[c] - left[c]) / nr
                gr += q * q
            g = (nl * (1.0 - gl) + nr * (1.0 - gr)) / float(n)
            if best is None or g < best[2]:
                lo, hi = zs[i], zs[i + 1]
                t = 0.5 * (lo + hi)
                if not (t < hi):
                    t = lo
                best = (j, t, g)
    return best


def _leaf_model(count_rows, n_bands=3):
    """Hand-built forest of single-leaf trees, one per counts row."""
    k = len(count_rows[0])
    fs = default_feature_subsample(n_bands)
    trees = []
    for counts in count_rows:
        c = np.asarray(counts, dtype=np.int64)
        trees.append(
            FlatTree(
                kind=np.zeros(1, np.uint8),
                features=np.full((1, fs), -1, np.int64),
                projections=np.zeros((1, fs)),
                thresholds=np.zeros(1),
                left=np.full(1, -1, np.int64),
                right=np.full(1, -1, np.int64),
                counts=c[None, :],
                probs=(c / c.sum())[None, :],
            )
        )
    return CcfModel(
        trees=trees,
        scaler=ColumnStats(np.zeros(n_bands), np.ones(n_bands)),
        n_bands=n_bands,
        class_names=tuple(f"c{i}" for i in range(k)),
        config=TrainConfig().resolved(n_bands),
    )


class TestFeatureSubsample:
    @pytest.mark.parametrize(
        "n_bands,expected",
        [(1, 1), (2, 2), (4, 3), (8, 4), (10, 5), (16, 5), (1024, 11)],
    )
    def test_values(self, n_bands, expected):
        assert default_feature_subsample(n_bands) == expected

    def test_zero_bands(self):
        with pytest.raises(DataError):
            default_feature_subsample(0)


class TestTrainConfig:
    def test_fills_default_subsample(self):
        cfg = TrainConfig().resolved(10)
        assert cfg.feature_subsample == 5
        assert cfg.n_trees == 10

    def test_explicit_subsample_kept(self):
        assert TrainConfig(feature_subsample=3).resolved(10).feature_subsample == 3

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_trees": 0},
            {"min_node_size": 0},
            {"max_depth": -1},
            {"gamma": -1.0},
            {"gamma": float("nan")},
            {"seed": -1},
            {"feature_subsample": 0},
            {"feature_subsample": 11},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(DataError):
            TrainConfig(**kwargs).resolved(10)


class TestBestSplit:
    def test_clean_boundary(self):
        z = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 0, 1, 1])
        assert best_split(z, y, 2) == (0, 1.5, 0.0)

    def test_tie_takes_lowest_threshold(self):
        z = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 1, 0, 1])
        comp, thr, gini = best_split(z, y, 2)
        assert (comp, thr) == (0, 0.5)
        assert gini == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_prefers_cleaner_component(self):
        noisy = np.array([0.0, 3.0, 1.0, 2.0])
        clean = np.array([0.0, 1.0, 2.0, 3.0])
        z = np.column_stack([noisy, clean])
        y = np.array([0, 0, 1, 1])
        comp, thr, gini = best_split(z, y, 2)
        assert comp == 1
        assert (thr, gini) == (1.5, 0.0)

    def test_constant_column_none(self):
        z = np.full((5, 1), 2.0)
        y = np.array([0, 1, 0, 1, 0])
        assert best_split(z, y, 2) is None

    def test_single_sample_none(self):
        assert best_split(np.array([[1.0]]), np.array([0]), 2) is None

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            best_split(np.zeros((3, 1)), np.zeros(2, dtype=int), 2)

    def test_matches_scalar_oracle_exactly(self):
        rng = np.random.default_rng(2024)
        for trial in range(200):
            n = int(rng.integers(2, 65))
            r = int(rng.integers(1, 4))
            k = int(rng.integers(2, 4))
            if trial % 2:
                z = rng.normal(size=(n, r))
            else:
                # gridded values force duplicate-handling through both paths
                z = rng.integers(0, 4, size=(n, r)).astype(np.float64)
            y = rng.integers(0, k, size=n)
            got = best_split(z, y, k)
            want = _scalar_best_split(z, y, k)
            if want is None:
                assert got is None
            else:
                assert got == want  # bit-exact tuple match


class TestGrowNode:
    def test_pure_node_is_leaf(self):
        s = SampleSet(np.random.default_rng(0).normal(size=(5, 2)), np.ones(5, dtype=int))
        node = grow_node(s, 0, TrainConfig(), np.random.default_rng(0))
        assert isinstance(node, Leaf)
        np.testing.assert_array_equal(node.class_counts, [0, 5])
        np.testing.assert_array_equal(node.class_probs, [0.0, 1.0])

    def test_unsplittable_mixed_node(self):
        s = SampleSet(np.ones((4, 2)), np.array([0, 0, 1, 1]))
        node = grow_node(s, 0, TrainConfig(), np.random.default_rng(1))
        assert isinstance(node, Leaf)
        np.testing.assert_array_equal(node.class_probs, [0.5, 0.5])

    def test_four_point_line(self):
        s = SampleSet(np.array([[0.0], [1.0], [2.0], [3.0]]), np.array([0, 0, 1, 1]))
        node = grow_node(s, 0, TrainConfig(), np.random.default_rng(0))
        assert isinstance(node, Internal)
        np.testing.assert_array_equal(node.feature_indices, [0])
        assert isinstance(node.left, Leaf) and isinstance(node.right, Leaf)
        # one pure pair on each side, whichever sign the direction took
        sides = sorted(
            [list(node.left.class_counts), list(node.right.class_counts)]
        )
        assert sides == [[0, 2], [2, 0]]
        boundary = node.threshold / node.projection[0]
        assert 1.0 < boundary < 2.0

    def test_max_depth_zero(self):
        s = SampleSet(np.arange(8.0).reshape(4, 2), np.array([0, 1, 0, 1]))
        node = grow_node(s, 0, TrainConfig(max_depth=0), np.random.default_rng(0))
        assert isinstance(node, Leaf)

    def test_min_node_size_stops_growth(self):
        s = SampleSet(np.array([[0.0], [1.0], [2.0]]), np.array([0, 1, 0]))
        node = grow_node(s, 0, TrainConfig(min_node_size=2), np.random.default_rng(0))
        assert isinstance(node, Leaf)  # 3 < 2 * min_node_size


class TestFlattenTree:
    def test_preorder_layout(self):
        left = Leaf(np.array([2, 0]), np.array([1.0, 0.0]))
        right = Leaf(np.array([0, 3]), np.array([0.0, 1.0]))
        root = Internal(np.array([0]), np.array([1.0]), 0.5, left, right)
        tree = flatten_tree(root, n_classes=2, feature_subsample=1)
        assert tree.n_nodes == 3
        np.testing.assert_array_equal(tree.kind, [1, 0, 0])
        np.testing.assert_array_equal(tree.left, [1, -1, -1])
        np.testing.assert_array_equal(tree.right, [2, -1, -1])
        np.testing.assert_array_equal(tree.counts[1], [2, 0])
        np.testing.assert_array_equal(tree.counts[2], [0, 3])

    def test_single_leaf(self):
        tree = flatten_tree(Leaf(np.array([1, 1]), np.array([0.5, 0.5])), 2, 3)
        assert tree.n_nodes == 1
        assert tree.kind[0] == 0


class TestTrainForest:
    def test_single_class_rejected(self):
        s = SampleSet(np.random.default_rng(0).normal(size=(10, 3)), np.zeros(10, int))
        with pytest.raises(DataError, match="degenerate labels"):
            train_forest(s)

    def test_too_few_samples(self):
        s = SampleSet(np.random.default_rng(0).normal(size=(3, 3)), np.array([0, 1, 0]))
        with pytest.raises(DataError, match="at least 4"):
            train_forest(s)

    def test_model_records_config(self):
        s = _blobs(30, 10, 6.0, np.random.default_rng(1))
        model = train_forest(s, TrainConfig(n_trees=3, seed=7))
        assert len(model.trees) == 3
        assert model.config.n_trees == 3
        assert model.config.feature_subsample == 5
        assert model.config.seed == 7
        assert model.n_bands == 10
        assert model.class_names == ("environment", "informal")

    def test_identity_scaler_default(self):
        s = _blobs(20, 4, 6.0, np.random.default_rng(2))
        model = train_forest(s, TrainConfig(n_trees=2))
        np.testing.assert_array_equal(model.scaler.mean, np.zeros(4))
        np.testing.assert_array_equal(model.scaler.stddev, np.ones(4))

    def test_scaler_band_mismatch(self):
        s = _blobs(20, 4, 6.0, np.random.default_rng(3))
        bad = ColumnStats(np.zeros(3), np.ones(3))
        with pytest.raises(DataError, match="scaler"):
            train_forest(s, TrainConfig(n_trees=1), scaler=bad)

    def test_perfect_fit_on_separable_blobs(self):
        rng = np.random.default_rng(11)
        s = _blobs(1000, 10, 8.0, rng)
        assert _perceptron_separable(s.features, s.labels)
        model = train_forest(s, TrainConfig(n_trees=10, seed=0))
        pred = predict_class_batch(model, s.features)
        assert (pred == s.labels).all()

    def test_max_depth_one_caps_tree_size(self):
        s = _blobs(50, 6, 2.0, np.random.default_rng(4))
        model = train_forest(s, TrainConfig(n_trees=4, max_depth=1, seed=0))
        assert all(t.n_nodes <= 3 for t in model.trees)

    def test_deterministic_rebuild(self):
        s = _blobs(60, 8, 3.0, np.random.default_rng(5))
        a = train_forest(s, TrainConfig(n_trees=5, seed=42))
        b = train_forest(s, TrainConfig(n_trees=5, seed=42))
        for ta, tb in zip(a.trees, b.trees):
            np.testing.assert_array_equal(ta.kind, tb.kind)
            np.testing.assert_array_equal(ta.projections, tb.projections)
            np.testing.assert_array_equal(ta.thresholds, tb.thresholds)
            np.testing.assert_array_equal(ta.counts, tb.counts)

    def test_seed_changes_forest(self):
        s = _blobs(60, 8, 3.0, np.random.default_rng(6))
        a = train_forest(s, TrainConfig(n_trees=3, seed=0))
        b = train_forest(s, TrainConfig(n_trees=3, seed=1))
        same = all(
            ta.n_nodes == tb.n_nodes and np.array_equal(ta.thresholds, tb.thresholds)
            for ta, tb in zip(a.trees, b.trees)
        )
        assert not same

    def test_worker_count_does_not_change_model(self, monkeypatch):
        s = _blobs(50, 6, 3.0, np.random.default_rng(7))
        monkeypatch.setenv("CCF_THREADS", "1")
        serial = train_forest(s, TrainConfig(n_trees=4, seed=9))
        monkeypatch.setenv("CCF_THREADS", "2")
        parallel = train_forest(s, TrainConfig(n_trees=4, seed=9))
        for ta, tb in zip(serial.trees, parallel.trees):
            np.testing.assert_array_equal(ta.kind, tb.kind)
            np.testing.assert_array_equal(ta.projections, tb.projections)
            np.testing.assert_array_equal(ta.thresholds, tb.thresholds)


class TestPrediction:
    def test_single_leaf_passthrough(self):
        model = _leaf_model([[1, 3]])
        np.testing.assert_array_equal(predict_proba(model, [0.0, 0.0, 0.0]), [0.25, 0.75])
        assert predict_class(model, [9.0, 9.0, 9.0]) == 1

    def test_two_tree_average_and_tie(self):
        model = _leaf_model([[5, 0], [0, 5]])
        probs = predict_proba(model, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(probs, [0.5, 0.5])
        assert predict_class(model, [1.0, 2.0, 3.0]) == 0  # tie -> lowest index

    def test_probs_sum_to_one(self):
        s = _blobs(80, 6, 2.0, np.random.default_rng(8))
        model = train_forest(s, TrainConfig(n_trees=5, seed=3))
        probs = predict_proba_batch(model, np.random.default_rng(9).normal(size=(40, 6)))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert (probs >= 0).all()

    def test_batch_equals_loop_bitwise(self):
        s = _blobs(60, 6, 2.5, np.random.default_rng(10))
        model = train_forest(s, TrainConfig(n_trees=4, seed=1))
        queries = np.random.default_rng(11).normal(size=(25, 6))
        batch = predict_proba_batch(model, queries)
        for i in range(len(queries)):
            single = predict_proba(model, queries[i])
            np.testing.assert_array_equal(batch[i], single)

    def test_wrong_band_count(self):
        model = _leaf_model([[1, 1]], n_bands=3)
        with pytest.raises(DataError, match="3"):
            predict_proba(model, [1.0, 2.0])
        with pytest.raises(DataError, match="3"):
            predict_proba_batch(model, np.ones((4, 2)))


class _ArrayRaster:
    """Minimal raster stand-in for predict_raster tests."""

    def __init__(self, values, nodata=None):
        self.values = values
        self.nodata = nodata


class TestPredictRaster:
    def _model(self):
        s = _blobs(60, 4, 4.0, np.random.default_rng(12))
        return train_forest(s, TrainConfig(n_trees=3, seed=2))

    def test_single_pixel_matches_direct_call(self):
        model = self._model()
        values = np.random.default_rng(13).normal(size=(1, 1, 4)).astype(np.float32)
        mask, prob = predict_raster(model, _ArrayRaster(values))
        direct = predict_proba(model, values[0, 0].astype(np.float64))
        assert mask.shape == (1, 1) and prob.shape == (1, 1)
        assert mask[0, 0] == np.argmax(direct)
        assert prob[0, 0] == np.float32(direct[1])

    def test_all_nodata(self):
        model = self._model()
        values = np.zeros((3, 4, 4), dtype=np.float32)
        mask, prob = predict_raster(model, _ArrayRaster(values, nodata=0.0))
        assert (mask == 255).all()
        assert (prob == -1.0).all()

    def test_grid_matches_pixel_loop(self):
        model = self._model()
        rng = np.random.default_rng(14)
        values = rng.normal(size=(16, 16, 4)).astype(np.float32)
        values[3, 5, 2] = -7.0  # nodata hit on one band
        raster = _ArrayRaster(values, nodata=-7.0)
        mask, prob = predict_raster(model, raster)
        for i in range(16):
            for j in range(16):
                if (values[i, j] == -7.0).any():
                    assert mask[i, j] == 255
                    assert prob[i, j] == -1.0
                else:
                    p = predict_proba(model, values[i, j].astype(np.float64))
                    assert mask[i, j] == np.argmax(p)
                    assert prob[i, j] == np.float32(p[1])

    def test_band_mismatch(self):
        model = self._model()
        with pytest.raises(DataError, match="band mismatch"):
            predict_raster(model, _ArrayRaster(np.zeros((2, 2, 5), np.float32)))


class TestSeedStability:
    def test_predictions_mostly_agree_across_seeds(self):
        rng = np.random.default_rng(15)
        train = _blobs(400, 10, 5.0, rng)
        queries = _blobs(800, 10, 5.0, np.random.default_rng(16))
        a = train_forest(train, TrainConfig(n_trees=50, seed=100))
        b = train_forest(train, TrainConfig(n_trees=50, seed=200))
        pa = predict_class_batch(a, queries.features)
        pb = predict_class_batch(b, queries.features)
        agreement = (pa == pb).mean()
        assert agreement >= 0.98
