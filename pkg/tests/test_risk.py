import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracvol.density import mixture_cdf
from fracvol.model import ModelParams
from fracvol.risk import (
    ROOT_TOL,
    RiskQuery,
    baseline_sigma,
    expected_shortfall,
    lognormal_baseline,
    return_quantile,
    risk_report,
    var_level,
)

# mpmath: ndtri(0.01)
Z_01 = -2.32634787404084110
# mpmath: -expm1(-theta^2/2 + theta z_0.01) at the default parameters
BASELINE_VAR_LAG1 = 0.0185134586269510552


@pytest.fixture
def query():
    return RiskQuery(ModelParams.reference_defaults())


class TestQuantile:
    @pytest.mark.parametrize("lag", [1.0, 7.0, 30.0])
    @pytest.mark.parametrize("p", [1e-4, 0.01, 0.3])
    def test_residual(self, query, lag, p):
        spec = query.spec(lag)
        q = return_quantile(spec, p)
        assert abs(float(mixture_cdf(q, spec)) - p) <= ROOT_TOL

    def test_domain(self, query):
        for p in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                return_quantile(query.spec(1.0), p)


class TestVar:
    def test_median_near_zero(self):
        q = RiskQuery(ModelParams.reference_defaults(), pstar=0.5)
        # median return sits at the tiny negative convexity drift
        assert abs(var_level(q, 1.0)) < 1e-4

    def test_median_exactly_zero_when_drift_cancels(self):
        theta = math.exp(-5.0)
        p = ModelParams.reference_defaults(vol_scale=0.0, drift=0.5 * theta**2)
        q = RiskQuery(p, pstar=0.5)
        assert abs(var_level(q, 1.0)) < 1e-15
        assert abs(lognormal_baseline(q, 1.0)[0]) < 1e-15

    def test_increasing_in_lag(self, query):
        v = [var_level(query, lag) for lag in query.lags]
        assert np.all(np.diff(v) > 0)

    def test_decreasing_in_pstar(self):
        p = ModelParams.reference_defaults()
        v = [var_level(RiskQuery(p, pstar=ps), 1.0) for ps in (0.001, 0.01, 0.05, 0.2)]
        assert np.all(np.diff(v) < 0)

    @given(st.floats(0.01, 1e6))
    @settings(max_examples=20, deadline=None)
    def test_scale_equivariant(self, capital):
        p = ModelParams.reference_defaults()
        base = RiskQuery(p)
        scaled = RiskQuery(p, capital=capital)
        v1, v2 = var_level(base, 3.0), var_level(scaled, 3.0)
        assert v2 == pytest.approx(capital * v1, rel=1e-12)
        assert expected_shortfall(scaled, 3.0, v2) == pytest.approx(
            capital * expected_shortfall(base, 3.0, v1), rel=1e-12
        )

    def test_degenerate_matches_baseline(self):
        q = RiskQuery(ModelParams.reference_defaults(vol_scale=0.0))
        for lag in (1.0, 10.0):
            v = var_level(q, lag)
            bv, bes = lognormal_baseline(q, lag)
            assert v == pytest.approx(bv, rel=1e-9)
            assert expected_shortfall(q, lag, v) == pytest.approx(bes, rel=1e-9)


class TestShortfall:
    def test_exceeds_var(self, query):
        for lag in (1.0, 5.0, 30.0):
            v = var_level(query, lag)
            assert expected_shortfall(query, lag, v) >= v

    def test_point_mass_bound(self):
        from fracvol.risk import _tail_loss_integral

        # a vanishing-variance node below the threshold: tail loss is the point loss
        m = np.array([-0.03])
        val = _tail_loss_integral(0.0, m, np.array([1e-30]))
        assert val[0] == pytest.approx(-math.expm1(-0.03), rel=1e-14)

    def test_consistency_guard(self, query):
        v = var_level(query, 1.0)
        with pytest.raises(ValueError):
            expected_shortfall(query, 1.0, 1.1 * v)
        with pytest.raises(ValueError):
            expected_shortfall(query, 1.0, query.capital)

    def test_against_direct_integral(self, query):
        # tail mean by adaptive integration of (1 - e^r) against the density
        from scipy.integrate import quad

        from fracvol.density import mixture_density

        spec = query.spec(1.0)
        v = var_level(query, 1.0)
        qr = math.log1p(-v)
        val, _ = quad(lambda r: -math.expm1(r) * mixture_density(r, spec), -1.0, qr,
                      epsabs=1e-14, limit=400, points=[qr - 0.05])
        assert expected_shortfall(query, 1.0, v) == pytest.approx(val / 0.01, rel=1e-8)


class TestBaseline:
    def test_closed_form_value(self, query):
        assert lognormal_baseline(query, 1.0)[0] == pytest.approx(BASELINE_VAR_LAG1, rel=1e-12)

    def test_z_quantile(self, query):
        theta = query.params.theta
        var = lognormal_baseline(query, 4.0)[0]
        q = math.log1p(-var)
        assert (q + 0.5 * theta**2 * 4.0) / (theta * 2.0) == pytest.approx(Z_01, rel=1e-12)

    def test_rms_option(self):
        p = ModelParams.reference_defaults()
        q = RiskQuery(p, baseline_vol="rms")
        assert baseline_sigma(q) == pytest.approx(p.theta * math.exp(0.5 * 0.3481), rel=1e-12)
        assert lognormal_baseline(q, 1.0)[0] > lognormal_baseline(RiskQuery(p), 1.0)[0]


class TestReport:
    def test_rows(self, query):
        rep = risk_report(query)
        arr = rep.as_array()
        assert arr.shape == (30, 5)
        assert np.array_equal(arr[:, 0], np.arange(1, 31))
        assert np.all(arr[:, 2] >= arr[:, 1]) and np.all(arr[:, 4] >= arr[:, 3])

    @pytest.mark.parametrize(
        "kwargs",
        [dict(pstar=0.0), dict(pstar=1.0), dict(capital=0.0), dict(lags=()), dict(lags=(0,)),
         dict(baseline_vol="median")],
    )
    def test_query_errors(self, kwargs):
        with pytest.raises(ValueError):
            RiskQuery(ModelParams.reference_defaults(), **kwargs)
