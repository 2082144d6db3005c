"""
Value at risk and expected shortfall on the model's return law.

For capital ``S`` and tail probability ``P*`` the VaR ``L`` solves
``F(log(1 - L/S)) = P*`` and the expected shortfall is

    E* = S / P* * int_{-inf}^{log(1 - L/S)} (1 - e^r) P(r) dr

Both are compared with a single-volatility lognormal baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from fracvol.density import ReturnDensitySpec, mixture_cdf
from fracvol.model import ModelParams

ROOT_TOL = 1e-10
_CONSISTENCY_TOL = 1e-8


@dataclass(frozen=True)
class RiskQuery:
    """Tail probability, capital and lags for a risk sweep.

    ``baseline_vol`` picks the baseline volatility: ``"mean"`` uses
    ``theta = E[sigma]``, ``"rms"`` uses ``sqrt(E[sigma^2])``.
    """

    params: ModelParams
    pstar: float = 0.01
    capital: float = 1.0
    lags: tuple = tuple(range(1, 31))
    quad_order: int = 64
    baseline_vol: str = "mean"
    lag_scaled_vol: bool = False

    def __post_init__(self):
        if not 0.0 < self.pstar < 1.0:
            raise ValueError(f"pstar must lie in (0, 1), got {self.pstar}")
        if not self.capital > 0:
            raise ValueError("capital must be positive")
        object.__setattr__(self, "lags", tuple(float(x) for x in self.lags))
        if not self.lags or any(x <= 0 for x in self.lags):
            raise ValueError("lags must be positive")
        if self.baseline_vol not in ("mean", "rms"):
            raise ValueError(f"unknown baseline_vol {self.baseline_vol!r}")

    def spec(self, lag: float) -> ReturnDensitySpec:
        return ReturnDensitySpec(self.params, lag, self.quad_order, self.lag_scaled_vol)


@dataclass(frozen=True)
class RiskRow:
    lag: float
    var_model: float
    es_model: float
    var_lognormal: float
    es_lognormal: float


@dataclass
class RiskReport:
    query: RiskQuery
    rows: list = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        return np.array(
            [[r.lag, r.var_model, r.es_model, r.var_lognormal, r.es_lognormal] for r in self.rows]
        )


def return_quantile(spec: ReturnDensitySpec, p: float) -> float:
    """Bisection for ``q`` with ``F(q) = p`` on the monotone mixture CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    cdf = lambda q: float(mixture_cdf(q, spec))  # noqa: E731
    step = math.sqrt(spec.params.theta**2 * spec.lag) + 1e-12
    lo, hi = -step, step
    while cdf(lo) > p:
        lo -= (hi - lo)
    while cdf(hi) < p:
        hi += (hi - lo)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    # whichever end is closer in probability
    return lo if abs(cdf(lo) - p) <= abs(cdf(hi) - p) else hi


def var_level(query: RiskQuery, lag: float) -> float:
    """VaR ``Lambda*`` in currency units of ``query.capital``."""
    q = return_quantile(query.spec(lag), query.pstar)
    return -query.capital * math.expm1(q)


def _tail_loss_integral(q, mean, var):
    # int_{-inf}^q (1 - e^r) N(r; mean, var) dr, elementwise
    sd = np.sqrt(var)
    return ndtr((q - mean) / sd) - np.exp(mean + 0.5 * var) * ndtr((q - mean - var) / sd)


def expected_shortfall(query: RiskQuery, lag: float, var: float) -> float:
    """Expected shortfall given the VaR ``var`` returned by :func:`var_level`."""
    if not var < query.capital:
        raise ValueError("VaR must be below the capital")
    spec = query.spec(lag)
    q = math.log1p(-var / query.capital)
    if abs(float(mixture_cdf(q, spec)) - query.pstar) > _CONSISTENCY_TOL:
        raise ValueError("VaR is inconsistent with pstar")
    _, w, mean, v = spec.nodes()
    tail = float(np.dot(w, _tail_loss_integral(q, mean, v)))
    return query.capital * tail / query.pstar


def baseline_sigma(query: RiskQuery) -> float:
    p = query.params
    return p.theta if query.baseline_vol == "mean" else math.sqrt(p.sigma_moment(2))


def lognormal_baseline(query: RiskQuery, lag: float):
    """Closed-form ``(VaR, ES)`` for constant volatility ``baseline_sigma(query)``."""
    sigma = baseline_sigma(query)
    mean = (query.params.drift - 0.5 * sigma**2) * lag
    sd = sigma * math.sqrt(lag)
    z = float(ndtri(query.pstar))
    q = mean + sd * z
    var = -query.capital * math.expm1(q)
    tail = query.pstar - math.exp(mean + 0.5 * sd * sd) * float(ndtr(z - sd))
    return var, query.capital * tail / query.pstar


def risk_report(query: RiskQuery) -> RiskReport:
    report = RiskReport(query)
    for lag in query.lags:
        v = var_level(query, lag)
        es = expected_shortfall(query, lag, v)
        bv, bes = lognormal_baseline(query, lag)
        report.rows.append(RiskRow(lag, v, es, bv, bes))
    return report
