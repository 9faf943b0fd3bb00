import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triad.multiway import (
    DimensionError,
    QadDecomposition,
    array_from_json,
    array_to_json,
    balanced_partition,
    compose,
    khatri_rao,
    khatri_rao_columns,
    marginal,
    matrix_from_csv,
    matrix_to_csv,
    slice_matrix,
    submodel,
    unfold_to_three,
)

from conftest import random_qad


def brute_compose(dec):
    out = np.zeros(dec.dims)
    for idx in itertools.product(*(range(k) for k in dec.dims)):
        out[idx] = sum(dec.weights[j] * np.prod([f[i, j] for f, i in zip(dec.factors, idx)])
                       for j in range(dec.r))
    return out


e = np.eye(2)


class TestQadDecomposition:
    def test_rejects_zero_weight(self):
        with pytest.raises(ValueError):
            QadDecomposition((e, e, e), np.array([1.0, 0.0]))

    def test_rejects_column_mismatch(self):
        with pytest.raises(DimensionError):
            QadDecomposition((e, e, np.ones((2, 3))), np.ones(2))

    def test_dict_round_trip(self, rng):
        dec = random_qad(rng, (3, 4, 2), 2)
        back = QadDecomposition.from_dict(json.loads(json.dumps(dec.to_dict())))
        np.testing.assert_array_equal(compose(back), compose(dec))


class TestCompose:
    def test_single_indicator(self):
        x = np.array([[1.0], [0.0]])
        out = compose(QadDecomposition((x, x, x), np.ones(1)))
        expected = np.zeros((2, 2, 2))
        expected[0, 0, 0] = 1.0
        np.testing.assert_array_equal(out, expected)

    def test_orthogonal_diagonal(self):
        out = compose(QadDecomposition((e, e, e), np.ones(2)))
        expected = np.zeros((2, 2, 2))
        expected[0, 0, 0] = expected[1, 1, 1] = 1.0
        np.testing.assert_array_equal(out, expected)

    def test_matches_brute_force(self, rng):
        dec = random_qad(rng, (4, 4, 4), 3, positive=False)
        np.testing.assert_allclose(compose(dec), brute_compose(dec), atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 5), st.lists(st.integers(1, 8), min_size=1, max_size=4))
    def test_round_trip_random(self, seed, r, dims):
        dec = random_qad(np.random.default_rng(seed), dims, r, positive=False)
        if np.prod(dims) <= 512:
            np.testing.assert_allclose(compose(dec), brute_compose(dec), atol=1e-12)

    def test_scale_and_permutation_invariance(self, rng):
        dec = random_qad(rng, (3, 4, 5), 3)
        c = rng.uniform(0.5, 2.0, (3, 3))
        perm = [2, 0, 1]
        factors = tuple(f[:, perm] * c[i, perm] for i, f in enumerate(dec.factors))
        weights = dec.weights[perm] / np.prod(c[:, perm], axis=0)
        np.testing.assert_allclose(compose(QadDecomposition(factors, weights)), compose(dec), atol=1e-12)


class TestSubmodel:
    def test_indicator_pair(self):
        x = np.array([[1.0], [0.0]])
        out = submodel(QadDecomposition((x, x, x), np.ones(1)), {0, 1})
        np.testing.assert_array_equal(out, [[1.0, 0.0], [0.0, 0.0]])

    def test_single_index_is_matrix_vector(self, rng):
        dec = random_qad(rng, (4, 3, 5), 2)
        np.testing.assert_allclose(submodel(dec, {1}), dec.factors[1] @ dec.weights, atol=1e-14)

    def test_pair_matches_brute_force(self, rng):
        dec = random_qad(rng, (4, 4, 4), 3, positive=False)
        X1, X3 = dec.factors[0], dec.factors[2]
        expected = sum(dec.weights[j] * np.outer(X1[:, j], X3[:, j]) for j in range(3))
        np.testing.assert_allclose(submodel(dec, {0, 2}), expected, atol=1e-12)

    def test_matches_marginal_on_tables(self, rng):
        p = [rng.dirichlet(np.ones(k), 2).T for k in (3, 4, 2, 3)]
        dec = QadDecomposition(tuple(p), np.array([0.3, 0.7]))
        table = compose(dec)
        for keep in ({0}, {1, 3}, {0, 2, 3}):
            np.testing.assert_allclose(marginal(table, keep), submodel(dec, keep), atol=1e-14)

    def test_errors(self, rng):
        dec = random_qad(rng, (2, 2, 2), 1)
        with pytest.raises(ValueError):
            submodel(dec, set())
        with pytest.raises(IndexError):
            submodel(dec, {3})


class TestKhatriRao:
    def test_ordering(self):
        np.testing.assert_array_equal(khatri_rao([[1, 0], [0, 1]]), [0, 1, 0, 0])

    def test_contains_all_products(self):
        a, b = np.array([2.0, 3.0]), np.array([5.0, 7.0])
        assert sorted(khatri_rao([a, b])) == sorted([10.0, 14.0, 15.0, 21.0])

    def test_norm_identity(self, rng):
        a, b = rng.standard_normal(5), rng.standard_normal(7)
        np.testing.assert_allclose(np.linalg.norm(khatri_rao([a, b])),
                                   np.linalg.norm(a) * np.linalg.norm(b), rtol=1e-14)

    def test_columns_match_vectors(self, rng):
        A, B = rng.standard_normal((3, 2)), rng.standard_normal((4, 2))
        out = khatri_rao_columns([A, B])
        for j in range(2):
            np.testing.assert_allclose(out[:, j], khatri_rao([A[:, j], B[:, j]]))

    def test_empty(self):
        with pytest.raises(ValueError):
            khatri_rao([])


class TestUnfold:
    def test_three_way_is_axis_permutation(self, rng):
        x = rng.standard_normal((2, 3, 4))
        np.testing.assert_array_equal(unfold_to_three(x, 2, ((0,), (1,))), np.transpose(x, (0, 2, 1)))

    def test_indicator_image(self):
        x = np.zeros((2, 3, 2, 2))
        x[1, 2, 0, 1] = 1.0
        out = unfold_to_three(x, 0, ((1,), (2, 3)))
        assert out.shape == (3, 2, 4)
        assert out[2, 1, 1] == 1.0 and out.sum() == 1.0

    def test_matches_khatri_rao_factors(self, rng):
        dec = random_qad(rng, (3, 2, 4, 3), 2, positive=False)
        part = ((1, 3), (2,))
        three = QadDecomposition((khatri_rao_columns([dec.factors[1], dec.factors[3]]), dec.factors[0],
                                  dec.factors[2]), dec.weights)
        np.testing.assert_allclose(unfold_to_three(compose(dec), 0, part), compose(three), atol=1e-12)

    def test_preserves_norm_and_values(self, rng):
        x = rng.standard_normal((2, 3, 4, 2))
        out = unfold_to_three(x, 1)
        np.testing.assert_allclose(np.linalg.norm(out), np.linalg.norm(x))
        np.testing.assert_array_equal(np.sort(out.ravel()), np.sort(x.ravel()))

    def test_invalid_partition(self):
        x = np.zeros((2, 2, 2, 2))
        with pytest.raises(ValueError):
            unfold_to_three(x, 0, ((1,), (2,)))
        with pytest.raises(ValueError):
            unfold_to_three(x, 0, ((), (1, 2, 3)))

    def test_balanced_partition(self):
        assert balanced_partition((10, 10, 10, 10, 10), 0) == ((1, 2), (3, 4))
        g1, g2 = balanced_partition((2, 8, 2, 2), 3)
        assert sorted(g1 + g2) == [0, 1, 2] and {g1, g2} == {(1,), (0, 2)}


class TestSlice:
    def test_indicator(self):
        x = np.zeros((2, 2, 2))
        x[0, 0, 0] = 1.0
        np.testing.assert_array_equal(slice_matrix(x, 0), [[1, 0], [0, 0]])
        np.testing.assert_array_equal(slice_matrix(x, 1), np.zeros((2, 2)))

    def test_formula(self, rng):
        dec = random_qad(rng, (3, 4, 5), 2, positive=False)
        X1, X2, X3 = dec.factors
        x = compose(dec)
        for k in range(5):
            np.testing.assert_allclose(slice_matrix(x, k), X1 @ np.diag(dec.weights * X3[k]) @ X2.T, atol=1e-12)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            slice_matrix(np.zeros((2, 2, 2)), 2)


class TestSerialization:
    def test_json_round_trip(self, rng):
        x = rng.standard_normal((2, 3, 4))
        np.testing.assert_array_equal(array_from_json(array_to_json(x)), x)

    def test_json_is_axis_major(self):
        x = np.arange(6.0).reshape(2, 3)
        assert json.loads(array_to_json(x)) == {"dims": [2, 3], "values": [0, 1, 2, 3, 4, 5]}

    def test_json_size_mismatch(self):
        with pytest.raises(DimensionError):
            array_from_json('{"dims": [2, 2], "values": [1, 2, 3]}')

    def test_csv_round_trip(self, rng):
        m = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(matrix_from_csv(matrix_to_csv(m)), m)
