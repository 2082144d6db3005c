import math

import numpy as np
import pytest

from fracvol.fbm import FbmGrid, generate_fbm
from fracvol.model import (
    CouplingMode,
    ModelParams,
    girsanov_weight,
    sample_lag_returns,
    second_weight,
    simulate_market,
    volatility_path,
)

# mpmath: exp(-5 + 0.59**2 / 2)
THETA_REF = 0.00801893226505402458


@pytest.fixture
def ref():
    return ModelParams.reference_defaults()


class TestParams:
    def test_theta_from_beta(self, ref):
        assert ref.theta == pytest.approx(THETA_REF, rel=1e-14)
        assert ref.log_vol_var == pytest.approx(0.3481, rel=1e-14)

    def test_beta_from_theta_round_trip(self, ref):
        p = ModelParams(hurst=0.83, vol_scale=0.59, theta=ref.theta)
        assert p.beta == pytest.approx(-5.0, abs=1e-13)

    def test_exactly_one_of_beta_theta(self):
        with pytest.raises(ValueError):
            ModelParams(beta=-5.0, theta=0.01)
        with pytest.raises(ValueError):
            ModelParams()

    @pytest.mark.parametrize(
        "bad",
        [dict(hurst=0.5), dict(hurst=1.0), dict(vol_scale=-0.1), dict(obs_scale=0.0),
         dict(spot=0.0), dict(riskfree=-0.01)],
    )
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            ModelParams.reference_defaults(**bad)

    def test_with_keeps_beta(self, ref):
        p = ref.with_(vol_scale=0.0, riskfree=0.02)
        assert p.beta == -5.0 and p.theta == pytest.approx(math.exp(-5.0))
        assert p.riskfree == 0.02


class TestVolatility:
    def test_requires_delta_horizon(self, ref):
        fbm = generate_fbm(FbmGrid(3, 0.25), 0.83, seed=0)
        with pytest.raises(ValueError):
            volatility_path(fbm, ref)

    def test_degenerate_noise(self, ref):
        p = ref.with_(vol_scale=0.0)
        fbm = generate_fbm(FbmGrid(20, 0.5), 0.83, seed=0)
        sigma = volatility_path(fbm, p)
        assert sigma.shape == (19,)
        assert np.allclose(sigma, p.theta, rtol=1e-15)

    def test_law_of_sigma(self, ref):
        n = 100_000
        fbm = generate_fbm(FbmGrid(2, 1.0), 0.83, seed=1, n_paths=n)
        sigma = volatility_path(fbm, ref)[:, -1]
        se = sigma.std() / math.sqrt(n)
        assert abs(sigma.mean() - THETA_REF) < 3 * se
        logs = np.log(sigma)
        se_var = np.std((logs - logs.mean()) ** 2) / math.sqrt(n)
        assert abs(logs.var() - 0.3481) < 3 * se_var
        # median e^beta: binomial SE of the fraction below it
        frac = np.mean(sigma < math.exp(ref.beta))
        assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / n)

    @pytest.mark.parametrize("n_moment", [2, 4])
    def test_lognormal_moments(self, ref, n_moment):
        n = 100_000
        fbm = generate_fbm(FbmGrid(4, 1.0), 0.83, seed=2, n_paths=n)
        s = volatility_path(fbm, ref)[:, -1] ** n_moment
        # theta^n exp(n(n-1)/2 k^2 delta^(2H-2))
        target = ref.theta**n_moment * math.exp(n_moment * (n_moment - 1) / 2 * 0.3481)
        assert np.isfinite(s.mean())
        assert abs(s.mean() - target) < 3 * s.std() / math.sqrt(n)

    def test_moments_stabilize(self, ref):
        fbm = generate_fbm(FbmGrid(1, 1.0), 0.83, seed=3, n_paths=400_000)
        sigma = volatility_path(fbm, ref)[:, 0]
        for n_moment in range(1, 7):
            s = sigma**n_moment
            small = s[:40_000].mean()
            big = s.mean()
            se = s[:40_000].std() / math.sqrt(40_000)
            assert np.isfinite(big)
            assert abs(small - big) < 4 * se


class TestSimulation:
    def test_shapes_and_positivity(self, ref):
        grid = FbmGrid(50, 0.5)
        path = simulate_market(ref, "independent", grid, seed=0, n_paths=7)
        assert path.sigma.shape == path.price.shape == path.discounted.shape == (7, 51)
        assert np.all(path.sigma > 0) and np.all(path.price > 0)
        assert np.all(path.price[:, 0] == ref.spot)
        assert path.w_path is None
        single = simulate_market(ref, "independent", grid, seed=0)
        assert single.price.shape == (51,)

    def test_discounted(self):
        p = ModelParams.reference_defaults(riskfree=0.01, spot=3.0)
        path = simulate_market(p, "independent", FbmGrid(10), seed=4)
        assert np.allclose(path.discounted, path.price * np.exp(-0.01 * path.times), rtol=1e-14)

    def test_dt_must_divide_delta(self, ref):
        with pytest.raises(ValueError):
            simulate_market(ref, "independent", FbmGrid(10, 0.3), seed=0)

    def test_reproducible(self, ref):
        for mode in CouplingMode:
            a = simulate_market(ref, mode, FbmGrid(30, 0.5), seed=11, n_paths=3)
            b = simulate_market(ref, mode, FbmGrid(30, 0.5), seed=11, n_paths=3)
            assert np.array_equal(a.price, b.price) and np.array_equal(a.sigma, b.sigma)

    def test_identified_shares_generator(self, ref):
        path = simulate_market(ref, "identified", FbmGrid(30, 0.5), seed=5, n_paths=2)
        assert np.array_equal(path.b_path, path.w_path)
        indep = simulate_market(ref, "independent", FbmGrid(30, 0.5), seed=5, n_paths=2,
                                fbm_route="kernel")
        assert not np.array_equal(indep.b_path, indep.w_path)
        # same seed: the volatility driver is the same stream in both modes
        assert np.array_equal(indep.w_path, path.w_path)

    def test_log_euler_step(self, ref):
        grid = FbmGrid(5, 0.5)
        path = simulate_market(ref.with_(drift=0.001), "independent", grid, seed=6)
        db = np.diff(path.b_path)
        s = path.sigma[:-1]
        expected = (0.001 - 0.5 * s**2) * grid.dt + s * db
        assert np.allclose(np.diff(np.log(path.price)), expected, rtol=1e-12, atol=1e-16)

    def test_gbm_martingale_when_drift_is_rate(self):
        p = ModelParams.reference_defaults(vol_scale=0.0, riskfree=0.01, drift=0.01)
        path = simulate_market(p, "independent", FbmGrid(5), seed=7, n_paths=100_000)
        z = path.discounted[:, -1]
        assert abs(z.mean() - p.spot) < 3 * z.std() / math.sqrt(z.size)

    def test_leptokurtic_daily_returns(self, ref):
        from fracvol.stats import excess_kurtosis

        r = sample_lag_returns(ref, 1.0, 100_000, seed=8)
        k = excess_kurtosis(r)
        assert k.value > 3 * k.stderr


class TestWeights:
    def test_eta_trivial_when_drift_is_rate(self):
        p = ModelParams.reference_defaults(riskfree=0.01, drift=0.01)
        path = simulate_market(p, "independent", FbmGrid(10), seed=0, n_paths=4)
        assert np.all(girsanov_weight(path, p) == 1.0)

    def test_eta_positive_and_starts_at_one(self):
        p = ModelParams.reference_defaults(riskfree=0.01)
        path = simulate_market(p, "identified", FbmGrid(20, 0.5), seed=1, n_paths=50)
        eta = girsanov_weight(path, p)
        assert np.all(eta[:, 0] == 1.0) and np.all(eta > 0)

    def test_eta_mean_one(self):
        n = 100_000
        p = ModelParams.reference_defaults(riskfree=0.01)
        path = simulate_market(p, "independent", FbmGrid(2, 0.125), seed=9, n_paths=n,
                               fbm_route="kernel")
        eta = girsanov_weight(path, p)[:, -1]
        assert abs(eta.mean() - 1.0) < 3 * eta.std() / math.sqrt(n)

    def test_eta_formula(self):
        p = ModelParams.reference_defaults(riskfree=0.01, drift=0.002)
        path = simulate_market(p, "independent", FbmGrid(6, 0.5), seed=2)
        lam = (p.riskfree - p.drift) / path.sigma[:-1]
        db = np.diff(path.b_path)
        expected = math.exp(np.sum(lam * db) - 0.5 * np.sum(lam**2) * 0.5)
        assert girsanov_weight(path, p)[-1] == pytest.approx(expected, rel=1e-12)

    def test_second_weight_zero_path(self, ref):
        path = simulate_market(ref, "independent", FbmGrid(10, 0.5), seed=3, fbm_route="kernel")
        from dataclasses import replace

        zero = replace(path, w_path=np.zeros_like(path.w_path))
        assert np.allclose(second_weight(zero), np.exp(-zero.times / 2), rtol=1e-15)

    def test_second_weight_errors(self, ref):
        ident = simulate_market(ref, "identified", FbmGrid(4), seed=0)
        with pytest.raises(ValueError):
            second_weight(ident)
        exact = simulate_market(ref, "independent", FbmGrid(4), seed=0)
        with pytest.raises(ValueError):
            second_weight(exact)

    def test_second_weight_martingale(self, ref):
        n = 100_000
        path = simulate_market(ref, "independent", FbmGrid(5), seed=4, n_paths=n,
                               fbm_route="kernel")
        w = second_weight(path)[:, -1]
        assert abs(w.mean() - 1.0) < 3 * w.std() / math.sqrt(n)

    def test_product_weight_martingale(self):
        n = 100_000
        p = ModelParams.reference_defaults(riskfree=0.01)
        path = simulate_market(p, "independent", FbmGrid(2, 0.125), seed=5, n_paths=n,
                               fbm_route="kernel")
        w = (girsanov_weight(path, p) * second_weight(path))[:, -1]
        assert abs(w.mean() - 1.0) < 3 * w.std() / math.sqrt(n)
        # a genuinely different density from eta alone
        assert not np.allclose(w, girsanov_weight(path, p)[:, -1])


class TestSampleReturns:
    def test_chunking_invariant_given_chunk(self, ref):
        a = sample_lag_returns(ref, 1.0, 2500, seed=1, chunk=1000)
        b = sample_lag_returns(ref, 1.0, 2500, seed=1, chunk=1000)
        assert np.array_equal(a, b)
        c = sample_lag_returns(ref, 1.0, 2000, seed=1, chunk=1000)
        assert np.array_equal(a[:2000], c)
