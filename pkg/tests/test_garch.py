import math

import numpy as np
import pytest

from gplstm import distributions as d
from gplstm.garch import (
    MODEL_IDS,
    GarchParams,
    GarchSpec,
    VarianceUnderflowError,
    fit_mle,
    forecast_one_step,
    log_likelihood,
    parse_model_id,
    simulate,
    variance_filter,
)

SG = GarchSpec("sgarch", "norm")
SG_TRUE = GarchParams(mu=0.0, k0=0.05, alpha1=0.10, rho1=0.85)


class TestSpec:
    def test_nine_ids(self):
        assert len(MODEL_IDS) == 9
        assert "gjr-garch-sstd" in MODEL_IDS

    @pytest.mark.parametrize("mid", ["sgarch-norm", "egarch-std", "gjr-garch-sstd"])
    def test_roundtrip(self, mid):
        assert parse_model_id(mid).model_id == mid

    def test_unknown(self):
        with pytest.raises(ValueError):
            parse_model_id("figarch-norm")

    def test_order_fixed(self):
        with pytest.raises(ValueError):
            GarchSpec("sgarch", "norm", p=2)


class TestFilter:
    def test_sgarch_arithmetic(self):
        p = GarchParams(k0=0.1, alpha1=0.1, rho1=0.8)
        h = variance_filter(SG, p, [1.0, 0.0], h0=1.0)
        assert h[1] == pytest.approx(1.0)

    @pytest.mark.parametrize("eps,expect", [(-1.0, 1.1), (1.0, 1.0)])
    def test_gjr_indicator(self, eps, expect):
        p = GarchParams(k0=0.1, alpha1=0.1, rho1=0.8, gamma=0.1)
        h = variance_filter(GarchSpec("gjr", "norm"), p, [eps, 0.0], h0=1.0)
        assert h[1] == pytest.approx(expect)

    def test_egarch_fixed_point(self):
        p = GarchParams(alpha0=0.0, alpha1=0.0, gamma1=0.0, beta1=0.5)
        h = variance_filter(GarchSpec("egarch", "norm"), p, [0.7, -0.3, 0.0], h0=1.0)
        np.testing.assert_allclose(h, 1.0)

    def test_egarch_log_recursion(self):
        p = GarchParams(alpha0=-0.1, alpha1=-0.05, gamma1=0.2, beta1=0.9)
        spec = GarchSpec("egarch", "std")
        p.nu = 6.0
        r = np.array([0.5, -1.2, 0.3])
        h = variance_filter(spec, p, r, h0=1.0, extend=True)
        lh, e_abs = 0.0, d.abs_mean("std", 6.0)
        for t in range(3):
            v = r[t] / math.sqrt(math.exp(lh))
            lh = -0.1 - 0.05 * v + 0.2 * (abs(v) - e_abs) + 0.9 * lh
            assert h[t + 1] == pytest.approx(math.exp(lh), rel=1e-12)

    def test_only_uses_past(self):
        r = np.random.default_rng(0).normal(size=50)
        h = variance_filter(SG, SG_TRUE, r, h0=1.0)
        r2 = r.copy()
        r2[30:] = 9.0
        assert np.array_equal(variance_filter(SG, SG_TRUE, r2, h0=1.0)[:31], h[:31])

    def test_underflow_reports_index(self):
        p = GarchParams(k0=-1.0, alpha1=0.0, rho1=0.0)
        with pytest.raises(VarianceUnderflowError, match="index 1"):
            variance_filter(SG, p, [0.1, 0.2, 0.3], h0=1.0)


class TestLikelihood:
    def test_single_normal_term(self):
        # one observation at eps=0 with h=1 (the padding observation is discarded)
        p = GarchParams(k0=1.0)
        ll2 = log_likelihood(SG, p, [0.0, 0.0], h0=1.0)
        assert ll2 / 2 == pytest.approx(-0.5 * math.log(2 * math.pi))

    def test_t_limit(self):
        r = np.random.default_rng(1).normal(size=200)
        p = GarchParams(k0=0.05, alpha1=0.1, rho1=0.85)
        ll_n = log_likelihood(SG, p, r, h0=1.0)
        q = GarchParams(k0=0.05, alpha1=0.1, rho1=0.85, nu=1e6)
        assert log_likelihood(GarchSpec("sgarch", "std"), q, r, h0=1.0) == pytest.approx(ll_n, abs=1e-4 * 200)

    def test_sstd_xi_one_equals_std(self):
        r = np.random.default_rng(2).normal(size=200)
        p = GarchParams(k0=0.05, alpha1=0.1, rho1=0.85, nu=7.0, xi=1.0)
        a = log_likelihood(GarchSpec("gjr", "sstd"), p, r, h0=1.0)
        b = log_likelihood(GarchSpec("gjr", "std"), p, r, h0=1.0)
        assert a == b

    def test_infeasible_is_minus_inf(self):
        p = GarchParams(k0=0.05, alpha1=0.5, rho1=0.6)
        assert log_likelihood(SG, p, [0.1, 0.2, 0.3]) == -np.inf


class TestFit:
    def test_recovers_sgarch(self):
        r = simulate(SG, SG_TRUE, 5000, seed=11)
        fit = fit_mle(SG, r, seed=0)
        for name in ("k0", "alpha1", "rho1"):
            assert abs(getattr(fit.params, name) - getattr(SG_TRUE, name)) < 0.05
        assert fit.converged

    def test_beats_random_probes(self):
        r = simulate(SG, SG_TRUE, 1500, seed=3)
        fit = fit_mle(SG, r, seed=0)
        rng = np.random.default_rng(0)
        var = np.var(r)
        for _ in range(100):
            a, b = rng.dirichlet([1, 1, 1])[:2] * rng.uniform(0.5, 0.999)
            p = GarchParams(mu=rng.normal(0, 0.05), k0=var * rng.uniform(0.01, 1), alpha1=a, rho1=b)
            assert fit.loglik >= log_likelihood(SG, p, r, h0=fit.h0)

    def test_iid_data(self):
        # with alpha1 ~ 0 the split between k0 and rho1 is unidentified, so the
        # identified quantities are checked: no ARCH effect, right variance level
        for seed in range(5):
            r = np.random.default_rng(seed).normal(size=1000)
            fit = fit_mle(SG, r, seed=seed)
            p = fit.params
            iid = GarchParams(mu=float(np.mean(r)), k0=float(np.var(r)))
            assert fit.loglik >= log_likelihood(SG, iid, r, h0=fit.h0) - 1e-6
            assert p.alpha1 < 0.1
            assert p.k0 / (1 - p.alpha1 - p.rho1) == pytest.approx(1.0, rel=0.2)

    @pytest.mark.parametrize("mid", ["egarch-std", "gjr-garch-sstd", "sgarch-sstd"])
    def test_feasible_fit(self, mid):
        spec = parse_model_id(mid)
        r = simulate(SG, SG_TRUE, 800, seed=5) * 0.01
        fit = fit_mle(spec, r, seed=0)
        assert fit.params.feasible(spec)
        assert np.isfinite(fit.loglik)

    def test_too_short(self):
        with pytest.raises(ValueError):
            fit_mle(SG, np.zeros(10))

    def test_deterministic(self):
        r = simulate(SG, SG_TRUE, 600, seed=8)
        assert fit_mle(SG, r, seed=2).params == fit_mle(SG, r, seed=2).params


class TestForecast:
    def test_constant_variance(self):
        r = np.random.default_rng(0).normal(size=100)
        fit = fit_mle(SG, r, seed=0)
        fit.params = GarchParams(mu=0.3, k0=0.04)
        mu, sd = forecast_one_step(fit, r)
        assert mu == 0.3 and sd == pytest.approx(0.2)

    def test_matches_extended_filter(self):
        r = simulate(SG, SG_TRUE, 400, seed=1)
        fit = fit_mle(SG, r[:300], seed=0)
        _, sd = forecast_one_step(fit, r)
        h = variance_filter(SG, fit.params, np.append(r, 0.0), h0=fit.h0)
        assert sd == pytest.approx(math.sqrt(h[-1]), rel=1e-14)


class TestSimulate:
    def test_unconditional_variance(self):
        r = simulate(SG, SG_TRUE, 100_000, seed=0)
        assert np.var(r) == pytest.approx(0.05 / 0.05, rel=0.1)

    def test_sstd_innovations_standardized(self):
        spec = GarchSpec("sgarch", "sstd")
        p = GarchParams(k0=1.0, nu=8.0, xi=1.5)
        r = simulate(spec, p, 200_000, seed=0)
        assert abs(np.mean(r)) < 0.01 and np.var(r) == pytest.approx(1.0, rel=0.03)
