"""Fractional volatility model: fBm generation, path simulation, return law and risk."""

from fracvol.density import (
    ReturnDensitySpec,
    conditional_density,
    mixture_cdf,
    mixture_density,
    mixture_moments,
    vol_density,
)
from fracvol.fbm import (
    FbmGrid,
    FbmPath,
    KernelSpec,
    fbm_covariance,
    fbm_via_kernel,
    fractional_noise,
    generate_fbm,
    kernel_K,
)
from fracvol.model import (
    CouplingMode,
    MarketPath,
    ModelParams,
    girsanov_weight,
    second_weight,
    simulate_market,
    volatility_path,
)
from fracvol.risk import (
    RiskQuery,
    RiskReport,
    expected_shortfall,
    lognormal_baseline,
    risk_report,
    var_level,
)
from fracvol.stats import excess_kurtosis, leverage, martingale_check

__version__ = "0.1.0"
