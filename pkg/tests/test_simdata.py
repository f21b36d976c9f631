"""Synthetic design grid: parameter vectors, covariate schemes, population info."""

import numpy as np
import pytest
from scipy import stats

from seqfed.families import LogisticFamily
from seqfed.glm import fit_mqle
from seqfed.linalg import inv_spd, max_eigenvalue
from seqfed.quantiles import chi2_quantile
from seqfed.sequential import SiteConfig, run_site
from seqfed.simdata import (
    COMMON_INDICES,
    THETA,
    SimDesign,
    dump_pools,
    gen_covariates,
    gen_responses,
    logistic_information_gaussian,
    make_pool,
    true_common_cov_block,
    true_information,
)


class TestSimDesign:
    def test_b2_vectors_verbatim(self):
        design = SimDesign(beta_setup="B2")
        np.testing.assert_array_equal(design.site_beta(1), [-2.0, 2.0, 1.0, 1.0, 0.0])
        np.testing.assert_array_equal(design.site_beta(2), [-2.0, 2.0, 1.0, 1.0, 0.5])
        np.testing.assert_array_equal(
            design.site_beta(3), [-2.0, 2.0, 1.0, 1.0, 0.5, 0.0]
        )
        np.testing.assert_array_equal(design.site_beta(4), [-1.5, 2.0, 1.0, 1.0, 0.0])
        np.testing.assert_array_equal(design.site_beta(5), [-2.5, 2.0, 1.0, 1.0, 1.0])

    def test_b1_is_homogeneous(self):
        design = SimDesign(beta_setup="B1")
        for site in range(1, 6):
            np.testing.assert_array_equal(
                design.site_beta(site), [-2.0, 2.0, 1.0, 1.0, 0.0]
            )

    def test_shared_block_is_two_one_everywhere(self):
        for setup in ("B1", "B2"):
            design = SimDesign(beta_setup=setup)
            selector = design.selector()
            for site in range(1, 6):
                np.testing.assert_array_equal(
                    selector.select(design.site_beta(site)), THETA
                )
        assert COMMON_INDICES == (1, 2)

    def test_budget_weights(self):
        np.testing.assert_array_equal(
            SimDesign(proportions="p1").budget_weights(), np.ones(5)
        )
        np.testing.assert_array_equal(
            SimDesign(proportions="p2").budget_weights(), [1.0, 1.0, 1.0, 1.0, 6.0]
        )

    def test_h2_scales(self):
        design = SimDesign(covariates="h2")
        np.testing.assert_array_equal(design.site_scales(1), np.ones(4))
        np.testing.assert_array_equal(design.site_scales(2), [1.0, 1.0, 4.0, 4.0])
        np.testing.assert_array_equal(design.site_scales(4), [1.0, 1.0, 2.0, 2.0])
        np.testing.assert_array_equal(design.site_scales(5), [1.0, 1.0, 4.0, 4.0])

    def test_validation(self):
        with pytest.raises(ValueError):
            SimDesign(beta_setup="B3")
        with pytest.raises(ValueError):
            SimDesign(proportions="p0")
        with pytest.raises(ValueError):
            SimDesign(covariates="h3")
        with pytest.raises(ValueError):
            SimDesign(beta_setup="B2", n_sites=3)
        with pytest.raises(ValueError):
            SimDesign(proportions="p2", n_sites=4)
        with pytest.raises(ValueError):
            SimDesign(pool_size=0)


class TestGenCovariates:
    def test_intercept_column(self):
        rng = np.random.default_rng(41)
        X = gen_covariates(SimDesign(), 1, 50, rng)
        assert X.shape == (50, 5)
        np.testing.assert_array_equal(X[:, 0], np.ones(50))

    def test_h1_sample_covariance_near_identity(self):
        rng = np.random.default_rng(42)
        X = gen_covariates(SimDesign(), 1, 100_000, rng)
        cov = np.cov(X[:, 1:], rowvar=False)
        assert np.abs(cov - np.eye(4)).max() < 0.05

    def test_h2_inflated_variances(self):
        rng = np.random.default_rng(43)
        design = SimDesign(covariates="h2")
        X = gen_covariates(design, 2, 100_000, rng)
        var = X[:, 1:].var(axis=0, ddof=1)
        np.testing.assert_allclose(var[:2], [1.0, 1.0], rtol=0.05)
        np.testing.assert_allclose(var[2:], [4.0, 4.0], rtol=0.05)

    def test_fixed_seed_reproduces(self):
        a = gen_covariates(SimDesign(), 3, 100, np.random.default_rng(44))
        b = gen_covariates(SimDesign(), 3, 100, np.random.default_rng(44))
        np.testing.assert_array_equal(a, b)


class TestGenResponses:
    def test_zero_coefficients_give_half_rate(self):
        rng = np.random.default_rng(45)
        n = 10_000
        X = gen_covariates(SimDesign(), 1, n, rng)
        y = gen_responses(X, np.zeros(5), rng)
        assert set(np.unique(y)) <= {0.0, 1.0}
        rate = y.mean()
        assert abs(rate - 0.5) < 3.0 * np.sqrt(0.25 / n)

    def test_huge_intercept_saturates(self):
        rng = np.random.default_rng(46)
        X = gen_covariates(SimDesign(), 1, 2000, rng)
        y = gen_responses(X, np.array([50.0, 0.0, 0.0, 0.0, 0.0]), rng)
        assert np.all(y == 1.0)

    def test_mqle_round_trip_recovers_beta(self):
        design = SimDesign()
        rng = np.random.default_rng(47)
        beta = design.site_beta(1)
        X = gen_covariates(design, 1, 100_000, rng)
        y = gen_responses(X, beta, rng)
        fit = fit_mqle(X, y, LogisticFamily())
        assert fit.converged
        inv, singular = inv_spd(fit.info)
        assert not singular
        se = np.sqrt(np.diag(inv))
        np.testing.assert_array_less(np.abs(fit.beta - beta), 3.0 * se)


class TestPopulationInformation:
    def test_quadrature_matches_monte_carlo(self):
        design = SimDesign()
        info = true_information(design, 1)
        rng = np.random.default_rng(48)
        X = gen_covariates(design, 1, 200_000, rng)
        g = LogisticFamily().info_weight(X @ design.site_beta(1))
        mc = (X * g[:, None]).T @ X / X.shape[0]
        np.testing.assert_allclose(mc, info, rtol=0.02, atol=0.002)

    def test_b1_common_block_eigenvalue_frozen(self):
        block = true_common_cov_block(SimDesign(), 1)
        assert max_eigenvalue(block) == pytest.approx(25.37697, abs=1e-4)

    def test_h2_inflation_shrinks_nothing_on_common_block(self):
        # larger nuisance-covariate variance changes the common block but
        # keeps it positive definite
        block = true_common_cov_block(SimDesign(covariates="h2"), 2)
        vals = np.linalg.eigvalsh(block)
        assert vals.min() > 0

    def test_no_slope_degenerate_case(self):
        # all slopes zero: weight is constant g(b0) and the information is
        # g(b0) * diag(1, scales)
        g = float(LogisticFamily().info_weight(np.array([-1.0]))[0])
        info = logistic_information_gaussian([-1.0, 0.0, 0.0], [2.0, 0.5])
        np.testing.assert_allclose(info, g * np.diag([1.0, 2.0, 0.5]), rtol=1e-12)

    def test_scales_length_mismatch(self):
        with pytest.raises(ValueError):
            logistic_information_gaussian([0.0, 1.0], [1.0, 1.0])


class TestDumpRoundTrip:
    def test_dump_then_load_is_exact(self, tmp_path):
        from seqfed.datasets import DataSource, load_dataset

        design = SimDesign(beta_setup="B2", pool_size=40)
        rng = np.random.default_rng(49)
        pools = [make_pool(design, site, rng) for site in range(1, 6)]
        path = tmp_path / "pools.csv"
        dump_pools(path, pools)
        loaded = load_dataset(
            DataSource(path=str(path), response="y", site_col="site",
                       common_cols=("x1", "x2"))
        )
        assert [s.label for s in loaded] == ["1", "2", "3", "4", "5"]
        for site, (X, y) in zip(loaded, pools):
            np.testing.assert_array_equal(site.X, X)
            np.testing.assert_array_equal(site.y, y)
            assert site.n_dropped == 0


class TestExchangeability:
    def test_stopping_time_distribution_survives_pool_shuffle(self):
        # recruiting from a shuffled copy of the same pool must leave the
        # stopping-time distribution unchanged
        design = SimDesign(pool_size=1200)
        config = SiteConfig(
            d1=0.8,
            d2=2.0,
            budget_sq=chi2_quantile(2, 0.95),
            selector=design.selector(),
        )
        plain, shuffled = [], []
        for rep in range(200):
            data_rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(entropy=50, spawn_key=(rep,)))
            )
            X, y = make_pool(design, 1, data_rng)
            perm = np.random.default_rng(rep).permutation(X.shape[0])
            run_rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(entropy=51, spawn_key=(rep,)))
            )
            plain.append(run_site(X, y, config, run_rng).stopping_time)
            run_rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(entropy=51, spawn_key=(rep,)))
            )
            shuffled.append(run_site(X[perm], y[perm], config, run_rng).stopping_time)
        ks = stats.ks_2samp(plain, shuffled)
        assert ks.pvalue > 0.01, f"KS p-value {ks.pvalue}"
