import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coocspec.errors import InvalidParameterError
from coocspec.ingest import (
    EmptyDatasetError,
    ParseError,
    RatingSet,
    as_ratings,
    binarize,
    fold_views,
    guess_format,
    kfold_split,
    load_ratings,
)
from coocspec.sparse import InteractionMatrix

from conftest import ml100k_path, random_sparse, small_matrices


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_bytes(text.encode())
    return p


class TestLoad:
    def test_three_line_csv(self, tmp_path):
        p = write(tmp_path, "ratings.csv", "userId,movieId,rating,timestamp\n"
                  "1,10,4.0,964982703\n1,20,3.5,964982704\n2,10,1.0,964982705\n")
        r = load_ratings(p)
        assert len(r) == 3
        assert r.records[0] == (1, 10, 4.0, 964982703)

    def test_crlf_tab_separated(self, tmp_path):
        p = write(tmp_path, "u.data", "196\t242\t3\t881250949\r\n186\t302\t3\t891717742\r\n")
        r = load_ratings(p, "tab_separated")
        assert r.users.tolist() == [196, 186]
        assert r.timestamps.tolist() == [881250949, 891717742]

    def test_double_colon(self, tmp_path):
        p = write(tmp_path, "ratings.dat", "1::1193::5::978300760\n1::661::3::978302109\n")
        assert guess_format(p) == "double_colon"
        assert load_ratings(p).items.tolist() == [1193, 661]

    def test_header_only_is_empty(self, tmp_path):
        p = write(tmp_path, "ratings.csv", "userId,movieId,rating,timestamp\n")
        with pytest.raises(EmptyDatasetError):
            load_ratings(p)

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyDatasetError):
            load_ratings(write(tmp_path, "u.data", ""))

    def test_malformed_line_number(self, tmp_path):
        p = write(tmp_path, "ratings.csv", "userId,movieId,rating,timestamp\n"
                  "1,10,4.0,1\n1,x,3.5,2\n")
        with pytest.raises(ParseError) as exc:
            load_ratings(p)
        assert exc.value.line_no == 3
        assert "1,x,3.5,2" in str(exc.value)

    def test_format_mismatch_names_line(self, tmp_path):
        p = write(tmp_path, "u.data", "196\t242\t3\t881250949\n186\t302\t3\t891717742\n")
        with pytest.raises(ParseError) as exc:
            load_ratings(p, "csv_with_header")
        assert exc.value.line_no == 2

    def test_non_finite_rating(self, tmp_path):
        p = write(tmp_path, "u.data", "1\t2\tnan\t0\n")
        with pytest.raises(ParseError):
            load_ratings(p)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(InvalidParameterError):
            load_ratings(write(tmp_path, "u.data", "1\t2\t3\t4\n"), "xml")

    def test_ml100k_counts(self):
        p = ml100k_path()
        if not p.is_file():
            pytest.skip("MovieLens-100K not present")
        r = load_ratings(p)
        assert len(r) == 100_000
        X, maps = binarize(r)
        assert X.shape == (943, 1682)
        assert X.nnz == 100_000


class TestBinarize:
    R = RatingSet.from_records([(1, 1, 5.0, 0), (1, 2, 1.0, 0)])

    def test_threshold_zero(self):
        X, maps = binarize(self.R, 0.0)
        assert X.to_dense().tolist() == [[1.0, 1.0]]

    def test_threshold_three(self):
        X, maps = binarize(self.R, 3.0)
        assert X.to_dense().tolist() == [[1.0]]
        assert maps.item_ids.tolist() == [1]

    def test_everything_filtered(self):
        with pytest.raises(EmptyDatasetError):
            binarize(self.R, 6.0)

    def test_non_finite_threshold(self):
        with pytest.raises(InvalidParameterError):
            binarize(self.R, np.inf)

    def test_id_maps_are_dense_and_bijective(self):
        r = RatingSet.from_records([(50, 7, 1.0, 0), (3, 900, 2.0, 0), (50, 900, 1.0, 0)])
        X, maps = binarize(r)
        assert maps.user_map == {3: 0, 50: 1}
        assert maps.item_map == {7: 0, 900: 1}
        assert X.to_dense().tolist() == [[0.0, 1.0], [1.0, 1.0]]

    @settings(max_examples=100, deadline=None)
    @given(small_matrices(max_dim=15))
    def test_idempotent(self, X):
        if X.nnz == 0:
            return
        Y, maps = binarize(as_ratings(X, _ident(X)))
        Y2, maps2 = binarize(as_ratings(Y, maps))
        assert Y2 == Y
        np.testing.assert_array_equal(maps2.user_ids, maps.user_ids)


def _ident(X):
    from coocspec.ingest import IdMaps

    return IdMaps(np.arange(X.n_rows), np.arange(X.n_cols))


class TestFolds:
    def test_ten_interactions_five_folds(self):
        X = InteractionMatrix.from_dense(np.ones((1, 10)))
        fs = kfold_split(X, 5, seed=1)
        assert np.bincount(fs.assignment, minlength=5).tolist() == [2] * 5
        assert not fs.exempt.any()

    def test_sparse_user_exempt(self):
        X = InteractionMatrix.from_dense([[1, 1, 1, 0, 0, 0], [1, 1, 1, 1, 1, 1]])
        fs = kfold_split(X, 5, seed=0)
        assert fs.exempt[:3].all() and not fs.exempt[3:].any()
        for f in range(5):
            train, test = fold_views(X, fs, f)
            assert train.row(0).tolist() == [0, 1, 2]
            assert len(test[0]) == 0

    def test_two_folds_single_user(self):
        X = InteractionMatrix.from_dense(np.ones((1, 4)))
        fs = kfold_split(X, 2, seed=3)
        train, test = fold_views(X, fs, 0)
        assert train.nnz == 2 and len(test[0]) == 2

    def test_invalid(self):
        X = InteractionMatrix.from_dense(np.ones((1, 4)))
        with pytest.raises(InvalidParameterError):
            kfold_split(X, 1)
        fs = kfold_split(X, 2)
        with pytest.raises(InvalidParameterError):
            fold_views(X, fs, 2)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 7), st.integers(0, 10_000), st.floats(0.05, 0.9))
    def test_partition_and_balance(self, F, seed, density):
        X = random_sparse(15, 30, density, seed)
        fs = kfold_split(X, F, seed)
        # per user, fold sizes differ by at most one
        for u in range(X.n_rows):
            lo, hi = X.row_offsets[u], X.row_offsets[u + 1]
            if hi - lo >= F:
                sizes = np.bincount(fs.assignment[lo:hi], minlength=F)
                assert sizes.max() - sizes.min() <= 1
        D = X.to_dense()
        for f in range(F):
            train, test = fold_views(X, fs, f)
            T = np.zeros_like(D)
            for u, items in enumerate(test):
                T[u, items] = 1.0
            assert not (train.to_dense() * T).any()
            np.testing.assert_array_equal(train.to_dense() + T, D)

    def test_deterministic(self):
        X = random_sparse(50, 40, 0.3, 9)
        a, b = kfold_split(X, 5, 11), kfold_split(X, 5, 11)
        np.testing.assert_array_equal(a.assignment, b.assignment)
        assert not np.array_equal(a.assignment, kfold_split(X, 5, 12).assignment)

    def test_ml100k_fold0(self, ml100k):
        X, _ = ml100k
        fs = kfold_split(X, 5, seed=0)
        np.testing.assert_array_equal(fs.assignment, kfold_split(X, 5, seed=0).assignment)
        train, test = fold_views(X, fs, 0)
        # every ML-100K user has >= 20 ratings, so each fold holds out ~20% per user
        assert abs(train.nnz - 80_000) <= X.n_rows
        assert train.nnz + sum(len(t) for t in test) == X.nnz
