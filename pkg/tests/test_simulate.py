import json
import math

import numpy as np
import pytest
from scipy import integrate, stats

from triad import simulate
from triad.simulate import (
    DEFAULT_HMM,
    DiscreteDesign,
    GaussianMixture,
    HmmSkewNormal,
    TMixture,
    design_from_dict,
    draw_hmm,
    draw_mixture,
    ise,
    replication_seeds,
)


class TestDesigns:
    def test_rejects_off_simplex(self):
        with pytest.raises(ValueError):
            GaussianMixture(pi=[0.7, 0.7])
        with pytest.raises(ValueError):
            HmmSkewNormal(pi=[0.3, 0.7])

    @pytest.mark.parametrize("design", [GaussianMixture(), TMixture(), DEFAULT_HMM,
                                        DiscreteDesign((np.eye(2),) * 3, [0.5, 0.5])])
    def test_dict_roundtrip(self, design):
        back = design_from_dict(json.loads(json.dumps(design.to_dict())))
        assert back.to_dict() == design.to_dict()

    def test_t_mean(self):
        d = TMixture()
        oracle = 5.0 * math.sqrt(5.0) * math.gamma(4.5) / math.gamma(5.0)
        assert d.mean(2, 1) == pytest.approx(oracle, rel=1e-12)
        assert d.mean(2, 1) == pytest.approx(stats.nct.mean(10, 5), rel=1e-10)

    @pytest.mark.parametrize("j", [0, 1])
    def test_skew_normal_density(self, j):
        total, _ = integrate.quad(lambda t: DEFAULT_HMM.pdf(j, t), -np.inf, np.inf)
        assert total == pytest.approx(1.0, abs=1e-8)
        assert DEFAULT_HMM.mean(j) == pytest.approx(
            stats.skewnorm.mean(DEFAULT_HMM.alpha[j], loc=DEFAULT_HMM.mu[j]), rel=1e-12)

    def test_discretized_columns(self):
        P = simulate.discretized_emissions(DEFAULT_HMM, np.linspace(-4, 4, 9))
        assert P.shape == (10, 2)
        np.testing.assert_allclose(P.sum(axis=0), 1.0, atol=1e-14)


class TestDraws:
    def test_degenerate_proportion(self):
        _, labels = draw_mixture(GaussianMixture(pi=[1.0, 0.0]), 1000, 0)
        assert np.all(labels == 0)

    def test_gaussian_mean(self):
        y, _ = draw_mixture(GaussianMixture(), 20000, 1)
        se = y.std(axis=0) / math.sqrt(y.shape[0])
        assert np.all(np.abs(y.mean(axis=0) - [1.5, 2.0, 2.5]) <= 3 * se)

    def test_t_draw_mean(self):
        d = TMixture(pi=[0.0, 1.0])
        y, _ = draw_mixture(d, 50000, 2)
        se = y[:, 0].std() / math.sqrt(y.shape[0])
        assert abs(y[:, 0].mean() - d.mean(0, 1)) <= 3 * se

    def test_identity_chain_is_constant(self):
        _, z = draw_hmm(HmmSkewNormal(K=np.eye(2)), 500, 3)
        assert np.all(z == z[:, :1])

    def test_transition_frequency(self):
        _, z = draw_hmm(DEFAULT_HMM, 100000, 4)
        stay = np.mean(z[:, 1] == z[:, 0])
        assert abs(stay - 0.8) <= 3 * math.sqrt(0.16 / 100000)

    def test_emission_mean(self):
        rng = np.random.default_rng(5)
        y = DEFAULT_HMM.emit(rng, np.zeros(100000, dtype=int))
        assert DEFAULT_HMM.mean(0) == pytest.approx(-1.2176, abs=1e-4)
        assert abs(y.mean() - DEFAULT_HMM.mean(0)) <= 3 * y.std() / math.sqrt(y.size)

    def test_discretize_indices(self):
        y, _ = draw_hmm(DEFAULT_HMM, 100, 6, discretize=np.linspace(-4, 4, 9))
        assert y.dtype.kind == "i" and y.min() >= 0 and y.max() <= 9

    def test_counts_total(self):
        d = DiscreteDesign((np.array([[0.6, 0.1], [0.4, 0.9]]),) * 3, [0.4, 0.6])
        assert d.draw_counts(777, 0).sum() == 777
        assert d.table().sum() == pytest.approx(1.0)


class TestIse:
    def test_gaussian_shift(self):
        # closed form for unit normals a apart: (1 - exp(-a^2/4)) / sqrt(pi)
        f = lambda t: stats.norm.pdf(t)
        g = lambda t: stats.norm.pdf(t - 1.0)
        assert ise(f, g) == pytest.approx((1 - math.exp(-0.25)) / math.sqrt(math.pi), rel=1e-8)

    def test_zero(self):
        f = lambda t: stats.norm.pdf(t, 3.0)
        assert ise(f, f) == 0.0


class TestHarness:
    def test_seeds_deterministic(self):
        assert replication_seeds(3, 5) == replication_seeds(3, 5)
        assert len(set(replication_seeds(3, 50))) == 50

    def test_rmise_smoke(self):
        rep = simulate.run_rmise(GaussianMixture(), [0.5], reps=2, n=300, seed=0)
        assert len(rep.rows) == 6 and rep.failures == 0
        assert rep.to_csv().splitlines()[0] == "# triad rmise csv v1"
        assert len(rep.to_csv().splitlines()) == 8
        json.loads(rep.to_json())

    def test_rmise_deterministic(self):
        a = simulate.run_rmise(GaussianMixture(), [0.4], reps=2, n=300, seed=7)
        b = simulate.run_rmise(GaussianMixture(), [0.4], reps=2, n=300, seed=7)
        assert a.to_csv() == b.to_csv()

    def test_reps_validated(self):
        with pytest.raises(ValueError):
            simulate.run_rmise(GaussianMixture(), [0.5], reps=1)

    def test_standard_error_scaling(self):
        d = DiscreteDesign((np.array([[0.8, 0.2], [0.2, 0.8]]),) * 3, [0.5, 0.5])
        se = {}
        for reps in (50, 200):
            seeds = replication_seeds(0, reps)
            err = np.array([simulate._rate_rep((d, 2000, s))[0] for s in seeds])
            se[reps] = err.std(ddof=1) / math.sqrt(reps)
        assert 0.35 <= se[200] / se[50] <= 0.65

    def test_coverage_report(self):
        rep = simulate.run_coverage(reps=20, n=2000, seed=1, series_kappa=20)
        assert len(rep.rows) == 18 and rep.failures == 0
        cov = np.array([row["oracle_coverage"] for row in rep.rows])
        # intervals built from the Monte Carlo deviation cover near the nominal level
        assert 0.85 <= cov.mean() <= 1.0
        assert rep.to_csv().startswith("# triad coverage csv v1")
        assert 0.0 <= rep.config["K_within_0.05"] <= 1.0

    def test_rate_rows(self):
        d = DiscreteDesign((np.array([[0.8, 0.2], [0.2, 0.8]]),) * 3, [0.5, 0.5])
        rep = simulate.run_rate(d, [1000, 4000], reps=10, seed=0)
        assert [row["n"] for row in rep.rows] == [1000, 4000]
        assert rep.rows[1]["rmse"] < rep.rows[0]["rmse"]
