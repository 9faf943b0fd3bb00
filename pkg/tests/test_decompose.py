import json

import numpy as np
import pytest

from triad.decompose import (
    AlignmentError,
    DeficientRankError,
    align_components,
    decomposition_provider,
    eigen_stack,
    normalize_columns,
    recover_all_factors,
    recover_third_factor,
    recover_weights,
    table_provider,
    whiten,
)
from triad.jointdiag import off_criterion
from triad.multiway import QadDecomposition, compose, submodel

from conftest import best_permutation, random_qad


class TestWhiten:
    def test_identity(self):
        w = whiten(np.eye(3), 3)
        np.testing.assert_allclose(np.abs(w.W1), np.eye(3), atol=1e-14)
        np.testing.assert_allclose(w.W1 @ np.eye(3) @ w.W2.T, np.eye(3), atol=1e-14)

    def test_diagonal(self):
        A0 = np.diag([4.0, 1.0])
        w = whiten(A0, 2)
        np.testing.assert_allclose(w.singular_values, [4.0, 1.0])
        np.testing.assert_allclose(w.W1 @ A0 @ w.W2.T, np.eye(2), atol=1e-14)

    def test_construction_oracle(self, rng):
        X1, X2 = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
        Pi = np.diag([0.2, 0.3, 0.5])
        A0 = X1 @ Pi @ X2.T
        w = whiten(A0, 3)
        np.testing.assert_allclose(w.W1 @ A0 @ w.W2.T, np.eye(3), atol=1e-10)
        Q = w.W1 @ X1 @ np.sqrt(Pi)
        np.testing.assert_allclose(Q @ np.linalg.inv(Q), np.eye(3), atol=1e-10)
        # W2 X2 Pi^{1/2} is the inverse transpose of Q
        np.testing.assert_allclose(w.W2 @ X2 @ np.sqrt(Pi), np.linalg.inv(Q).T, atol=1e-10)
        assert w.rank_gap > 0

    def test_idempotent(self, rng):
        A0 = rng.standard_normal((4, 3)) @ rng.standard_normal((3, 5))
        w = whiten(A0, 3)
        w2 = whiten(w.W1 @ A0 @ w.W2.T, 3)
        # the identity's SVD is unique only up to a rotation
        np.testing.assert_allclose(w2.W1 @ w2.W1.T, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(w2.W1, w2.W2, atol=1e-10)

    def test_deficient_rank(self):
        with pytest.raises(DeficientRankError, match="deficient rank"):
            whiten(np.outer([1.0, 2.0], [3.0, 4.0]), 2)
        with pytest.raises(DeficientRankError):
            whiten(np.ones((1, 3)), 2)


class TestEigenStack:
    def test_rank_one(self, rng):
        dec = random_qad(rng, (3, 3, 4), 1)
        x = compose(dec)
        problem, _ = eigen_stack(x, submodel(dec, {0, 1}), 1)
        np.testing.assert_allclose(problem.matrices[:, 0, 0], dec.factors[2][:, 0], rtol=1e-12)

    def test_oracle_criterion(self, rng):
        dec = random_qad(rng, (3, 3, 4), 2)
        A0 = submodel(dec, {0, 1})
        problem, w = eigen_stack(compose(dec), A0, 2)
        Q = w.W1 @ dec.factors[0] @ np.diag(np.sqrt(dec.weights))
        assert off_criterion(Q, problem) <= 1e-18

    def test_noisy_criterion_is_second_order(self, rng):
        dec = random_qad(rng, (3, 3, 4), 2)
        A0 = submodel(dec, {0, 1})
        x = compose(dec)
        crits = []
        for sigma in (1e-3, 1e-4):
            noisy = x + sigma * np.random.default_rng(1).standard_normal(x.shape)
            problem, w = eigen_stack(noisy, A0, 2)
            Q = w.W1 @ dec.factors[0] @ np.diag(np.sqrt(dec.weights))
            crits.append(off_criterion(Q, problem))
        assert crits[0] > 0
        np.testing.assert_allclose(crits[0] / crits[1], 100.0, rtol=0.05)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            eigen_stack(np.zeros((2, 3, 2)), np.eye(2), 2)


class TestRecoverThirdFactor:
    def test_identity_factor(self, rng):
        X1, X2 = rng.uniform(0.1, 1, (4, 2)), rng.uniform(0.1, 1, (3, 2))
        dec = QadDecomposition((X1, X2, np.eye(2)), np.array([0.4, 0.6]))
        X3 = recover_third_factor(compose(dec), submodel(dec, {0, 1}), 2)
        perm = best_permutation(X3, np.eye(2))
        np.testing.assert_allclose(X3[:, perm], np.eye(2), atol=1e-8)

    def test_rank_one(self, rng):
        dec = random_qad(rng, (2, 3, 5), 1)
        X3 = recover_third_factor(compose(dec), submodel(dec, {0, 1}), 1)
        np.testing.assert_allclose(X3, dec.factors[2], rtol=1e-12)

    def test_hmm_third_direction(self):
        P = np.array([[0.7, 0.1], [0.2, 0.3], [0.1, 0.6]])
        K = np.array([[0.8, 0.2], [0.2, 0.8]])
        pi = np.array([0.5, 0.5])
        A = P @ np.diag(pi) @ K @ np.diag(1 / pi)
        B = P @ K.T
        dec = QadDecomposition((A, P, B), pi)
        X3 = recover_third_factor(compose(dec), submodel(dec, {0, 1}), 2)
        perm = best_permutation(X3, B)
        np.testing.assert_allclose(X3[:, perm], B, atol=1e-10)


class TestRecoverWeights:
    def test_identity(self):
        np.testing.assert_allclose(recover_weights(np.eye(2), [0.3, 0.7]), [0.3, 0.7])

    def test_orthonormal(self, rng):
        Xi, _ = np.linalg.qr(rng.standard_normal((5, 2)))
        np.testing.assert_allclose(recover_weights(Xi, Xi @ [2.0, -1.0]), [2.0, -1.0], atol=1e-14)

    def test_seeded(self, rng):
        Xi = rng.standard_normal((6, 3))
        pi = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(recover_weights(Xi, Xi @ pi), pi, atol=1e-12)

    def test_permutation(self, rng):
        Xi = rng.standard_normal((6, 3))
        pi = np.array([0.2, 0.3, 0.5])
        perm = [2, 0, 1]
        np.testing.assert_allclose(recover_weights(Xi[:, perm], Xi @ pi), pi[perm], atol=1e-12)

    def test_rank_deficient(self):
        with pytest.raises(np.linalg.LinAlgError):
            recover_weights(np.ones((3, 2)), np.ones(3))


def _check_recovery(dec, report, tol=1e-7):
    est = report.decomposition
    truth = [normalize_columns(X)[0] for X in dec.factors]
    perm = best_permutation(est.factors[0], truth[0])
    for X, T in zip(est.factors, truth):
        np.testing.assert_allclose(X[:, perm], T, atol=tol)
    np.testing.assert_allclose(compose(est), compose(dec), atol=tol * np.max(np.abs(compose(dec))))


class TestRecoverAll:
    def test_three_way(self, rng):
        dec = random_qad(rng, (4, 5, 6), 2)
        report = recover_all_factors(compose(dec), decomposition_provider(dec), 2)
        _check_recovery(dec, report)
        assert report.residual <= 1e-9

    def test_four_way_balanced(self, rng):
        dec = random_qad(rng, (3, 4, 3, 5), 2)
        report = recover_all_factors(compose(dec), decomposition_provider(dec), 2)
        _check_recovery(dec, report)

    def test_raw_factors_carry_submodel_scale(self, rng):
        p = [rng.dirichlet(np.ones(k), 3).T for k in (4, 5, 4)]
        pi = np.array([0.2, 0.3, 0.5])
        dec = QadDecomposition(tuple(p), pi)
        table = compose(dec)
        report = recover_all_factors(table, table_provider(table), 3)
        perm = best_permutation(report.raw_factors[0], p[0])
        for X, T in zip(report.raw_factors, p):
            np.testing.assert_allclose(X[:, perm], T, atol=1e-8)
        np.testing.assert_allclose(report.raw_weights[perm], pi, atol=1e-8)

    def test_common_permutation(self, rng):
        dec = random_qad(rng, (5, 5, 5), 3)
        report = recover_all_factors(compose(dec), decomposition_provider(dec), 3)
        perms = [best_permutation(normalize_columns(X)[0], normalize_columns(T)[0])
                 for X, T in zip(report.decomposition.factors, dec.factors)]
        assert all(p == perms[0] for p in perms)

    def test_explicit_partition(self, rng):
        dec = random_qad(rng, (3, 3, 3, 3), 3)
        parts = {0: ((1,), (2, 3)), 3: ((0, 2), (1,))}
        report = recover_all_factors(compose(dec), decomposition_provider(dec), 3, partitions=parts)
        _check_recovery(dec, report)
        assert report.directions[0].partition == ((1,), (2, 3))

    def test_requires_submodels(self, rng):
        with pytest.raises(ValueError, match="submodels"):
            recover_all_factors(compose(random_qad(rng, (3, 3, 3), 2)), None, 2)

    def test_residual_bound(self, rng):
        dec = random_qad(rng, (4, 4, 4), 2)
        x = compose(dec) + 0.05 * rng.standard_normal((4, 4, 4))
        with pytest.raises(AlignmentError):
            recover_all_factors(x, decomposition_provider(dec), 2, residual_bound=1e-6)

    def test_report_json(self, rng):
        dec = random_qad(rng, (3, 3, 3), 2)
        report = recover_all_factors(compose(dec), decomposition_provider(dec), 2)
        d = json.loads(report.to_json())
        assert {"decomposition", "criterion", "residual", "warnings"} <= set(d)
        assert report.to_json() == recover_all_factors(compose(dec), decomposition_provider(dec), 2).to_json()

    def test_scale_convention(self, rng):
        dec = random_qad(rng, (4, 4, 4), 2, positive=False)
        est = recover_all_factors(compose(dec), decomposition_provider(dec), 2).decomposition
        for X in est.factors:
            np.testing.assert_allclose(np.linalg.norm(X, axis=0), 1.0)
            assert np.all(X[np.argmax(np.abs(X), axis=0), [0, 1]] > 0)


class TestAlignComponents:
    def test_recovers_relative_permutation(self, rng):
        X1, X2 = rng.standard_normal((4, 3)), rng.standard_normal((5, 3))
        pi = np.array([0.2, 0.3, 0.5])
        pair = X1 @ np.diag(pi) @ X2.T
        perm = [1, 2, 0]
        p = align_components(X1, X2[:, perm] * 3.0, pair)
        np.testing.assert_allclose((X2[:, perm] * 3.0)[:, p], 3.0 * X2)
