import numpy as np
import pytest

from gskan.data import (
    DataError,
    Dataset,
    batch_iter,
    crossed_wave,
    gen_crossed_wave,
    gen_tabular,
    load_csv,
    minmax_apply,
    minmax_fit,
    normalize,
    train_test_split,
    write_csv,
    zscore_apply,
    zscore_fit,
)


def _ds(X, Y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Y = np.zeros((len(X), 1)) if Y is None else np.asarray(Y, dtype=float)
    return Dataset(X, Y)


class TestCrossedWave:
    def test_known_points(self):
        assert crossed_wave(0.0, 0.0) == 0.0
        assert abs(crossed_wave(1 / 6, 0.0) - 1.0) < 1e-15
        assert abs(crossed_wave(1 / 6, 1 / 3) + 1.0) < 1e-15

    def test_shapes_and_range(self):
        ds = gen_crossed_wave(500, seed=0, noise_std=0.0)
        assert ds.X.shape == (500, 2) and ds.Y.shape == (500, 1)
        assert np.all(np.abs(ds.X) <= 1)
        np.testing.assert_array_equal(ds.Y[:, 0], crossed_wave(ds.X[:, 0], ds.X[:, 1]))

    def test_noise_variance(self):
        ds = gen_crossed_wave(20000, seed=3)
        resid = ds.Y[:, 0] - crossed_wave(ds.X[:, 0], ds.X[:, 1])
        assert 7e-5 <= resid.var() <= 1.3e-4

    def test_deterministic(self):
        a, b = gen_crossed_wave(50, seed=7), gen_crossed_wave(50, seed=7)
        assert a.X.tobytes() == b.X.tobytes() and a.Y.tobytes() == b.Y.tobytes()
        assert not np.array_equal(a.X, gen_crossed_wave(50, seed=8).X)

    @pytest.mark.parametrize("kw", [{"n": 0, "seed": 0}, {"n": 5, "seed": 0, "noise_std": -1}])
    def test_rejects(self, kw):
        with pytest.raises(DataError):
            gen_crossed_wave(**kw)


def test_tabular_generator():
    ds = gen_tabular(300, seed=1)
    assert ds.X.shape == (300, 8)
    assert ds.feature_names == [f"f{i}" for i in range(8)]
    assert np.array_equal(ds.Y, gen_tabular(300, seed=1).Y)


class TestDataset:
    def test_row_mismatch(self):
        with pytest.raises(DataError, match="row counts"):
            Dataset(np.zeros((3, 2)), np.zeros((2, 1)))

    def test_non_finite(self):
        with pytest.raises(DataError, match="non-finite"):
            Dataset(np.array([[np.nan]]), np.zeros((1, 1)))

    def test_classification_flag(self):
        assert Dataset(np.zeros((2, 1)), np.array([0, 1])).is_classification
        assert not _ds([1.0, 2.0]).is_classification


class TestZscore:
    def test_known_values(self):
        train = _ds([1.0, 2.0, 3.0])
        stats = zscore_fit(train)
        np.testing.assert_allclose(zscore_apply(stats, train).X[:, 0], [-1.224744871391589, 0, 1.224744871391589])

    def test_train_statistics_applied_to_test(self):
        stats = zscore_fit(_ds([0.0, 2.0]))
        assert zscore_apply(stats, _ds([4.0])).X[0, 0] == 3.0

    def test_standardized(self):
        rng = np.random.default_rng(0)
        train = _ds(rng.normal(5, 3, size=(1000, 4)))
        out = zscore_apply(zscore_fit(train), train).X
        np.testing.assert_allclose(out.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=0), 1, atol=1e-12)

    def test_zero_variance(self):
        ds = Dataset(np.array([[1.0, 2.0], [1.0, 3.0]]), np.zeros((2, 1)), ["a", "b"])
        with pytest.raises(DataError, match="zero-variance feature.*a"):
            zscore_fit(ds)


class TestMinmax:
    def test_maps_to_range(self):
        out = minmax_apply(_ds([2.0, 4.0, 6.0]))
        np.testing.assert_allclose(out.X[:, 0], [-1, 0, 1])

    def test_custom_range(self):
        out = minmax_apply(_ds([2.0, 4.0, 6.0]), lo=0.0, hi=1.0)
        np.testing.assert_allclose(out.X[:, 0], [0, 0.5, 1])

    def test_constant_feature_midpoint(self):
        out = minmax_apply(Dataset(np.array([[5.0, 1.0], [5.0, 2.0]]), np.zeros((2, 1))))
        np.testing.assert_array_equal(out.X[:, 0], [0.0, 0.0])

    def test_stats_from_train_only(self):
        stats = minmax_fit(_ds([0.0, 10.0]))
        assert minmax_apply(_ds([20.0]), stats=stats).X[0, 0] == 3.0

    def test_normalize_dispatch(self):
        train, (test,) = normalize(_ds([0.0, 10.0]), [_ds([5.0])], "minmax")
        assert test.X[0, 0] == 0.0
        with pytest.raises(DataError, match="unknown"):
            normalize(train, [], "robust")


class TestSplitAndBatches:
    def test_split_sizes(self):
        train, test = train_test_split(_ds(np.arange(10.0)), 0.2, seed=0)
        assert (len(train), len(test)) == (8, 2)
        assert sorted(np.concatenate([train.X[:, 0], test.X[:, 0]])) == list(range(10))

    def test_split_deterministic(self):
        ds = _ds(np.arange(50.0))
        a = train_test_split(ds, 0.3, seed=4)[1].X
        assert np.array_equal(a, train_test_split(ds, 0.3, seed=4)[1].X)

    @pytest.mark.parametrize("frac", [0.0, 1.0, 0.01])
    def test_split_rejects(self, frac):
        with pytest.raises(DataError):
            train_test_split(_ds(np.arange(10.0)), frac, seed=0)

    def test_batch_sizes(self):
        sizes = [len(b) for b in batch_iter(_ds(np.arange(10.0)), 4, seed=0, epoch=0)]
        assert sizes == [4, 4, 2]

    def test_batches_cover_epoch(self):
        rows = np.concatenate([b.X[:, 0] for b in batch_iter(_ds(np.arange(23.0)), 5, 1, 2)])
        assert sorted(rows) == list(range(23))

    def test_order_depends_on_seed_and_epoch(self):
        ds = _ds(np.arange(40.0))
        first = lambda s, e: next(batch_iter(ds, 40, s, e)).X[:, 0]
        assert np.array_equal(first(0, 0), first(0, 0))
        assert not np.array_equal(first(0, 0), first(0, 1))
        assert not np.array_equal(first(0, 0), first(1, 0))


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        ds = gen_crossed_wave(25, seed=2)
        write_csv(ds, tmp_path / "d.csv")
        back = load_csv(tmp_path / "d.csv", ["target"])
        assert back.X.tobytes() == ds.X.tobytes()
        assert back.Y.tobytes() == ds.Y.tobytes()
        assert back.feature_names == ds.feature_names

    def test_header_and_index_targets(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,y\n1,2,3\n4,5,6\n")
        ds = load_csv(p, ["y"])
        np.testing.assert_array_equal(ds.X, [[1, 2], [4, 5]])
        np.testing.assert_array_equal(ds.Y, [[3], [6]])
        ds = load_csv(p, [0])
        assert ds.feature_names == ["b", "y"]

    def test_headerless(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,2\n3,4\n")
        ds = load_csv(p, [1], header=False)
        np.testing.assert_array_equal(ds.X[:, 0], [1, 3])

    def test_ragged_row(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,y\n1,2\n3\n")
        with pytest.raises(DataError, match="line 3 has 1 fields, expected 2"):
            load_csv(p, ["y"])

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,y\n1,2\nfoo,4\n")
        with pytest.raises(DataError, match="line 3, column 'a': non-numeric"):
            load_csv(p, ["y"])

    def test_missing_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,y\n1,2\n")
        with pytest.raises(DataError, match="missing target column 'z'"):
            load_csv(p, ["z"])

    def test_empty(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("")
        with pytest.raises(DataError, match="empty"):
            load_csv(p, ["y"])

    def test_labels(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,c\n0.5,1\n0.2,0\n")
        ds = load_csv(p, ["c"], labels=True)
        assert ds.Y.dtype == np.int64 and list(ds.Y) == [1, 0]
        p.write_text("a,c\n0.5,1.5\n")
        with pytest.raises(DataError, match="non-integer"):
            load_csv(p, ["c"], labels=True)
