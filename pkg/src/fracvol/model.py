"""
Coupled price / volatility simulation for the fractional volatility model.

Log-volatility is driven by fractional noise at observation scale ``delta``::

    sigma_t = theta * exp((k/delta) (B_H(t) - B_H(t - delta)) - (k/delta)^2 delta^(2H) / 2)
    d log S_t = (mu - sigma_t^2 / 2) dt + sigma_t dB_t

In ``independent`` mode ``B`` and the Brownian motion ``W`` behind ``B_H``
are independent. In ``identified`` mode ``B = W`` and ``B_H`` is synthesized
from ``W`` through the Volterra kernel, so the price feeds the volatility.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from fracvol.fbm import (
    FbmGrid,
    FbmPath,
    KernelSpec,
    fbm_via_kernel,
    fractional_noise,
    generate_fbm,
)


class CouplingMode(str, enum.Enum):
    INDEPENDENT = "independent"
    IDENTIFIED = "identified"


@dataclass(frozen=True)
class ModelParams:
    """Model constants. Supply exactly one of ``beta`` and ``theta``.

    ``theta = exp(beta + k^2 delta^(2H-2) / 2)`` is the mean volatility and
    ``beta`` the mean (and median exponent) of ``log sigma``. Rates are per
    day, ``delta`` in days.
    """

    hurst: float = 0.83
    vol_scale: float = 0.59
    beta: float | None = None
    theta: float | None = field(default=None)
    obs_scale: float = 1.0
    drift: float = 0.0
    riskfree: float = 0.0
    spot: float = 1.0

    def __post_init__(self):
        if (self.beta is None) == (self.theta is None):
            raise ValueError("exactly one of beta and theta must be given")
        if not 0.5 < self.hurst < 1.0:
            raise ValueError(f"hurst must lie in (1/2, 1), got {self.hurst}")
        if self.vol_scale < 0:
            raise ValueError("vol_scale must be nonnegative")
        if not self.obs_scale > 0:
            raise ValueError("obs_scale must be positive")
        if not self.spot > 0:
            raise ValueError("spot must be positive")
        if self.riskfree < 0:
            raise ValueError("riskfree must be nonnegative")
        if not math.isfinite(self.drift):
            raise ValueError("drift must be finite")
        half_var = 0.5 * self.log_vol_var
        if self.theta is None:
            object.__setattr__(self, "theta", math.exp(self.beta + half_var))
        else:
            if not self.theta > 0:
                raise ValueError("theta must be positive")
            object.__setattr__(self, "beta", math.log(self.theta) - half_var)

    @classmethod
    def reference_defaults(cls, **overrides) -> "ModelParams":
        """H=0.83, k=0.59, beta=-5, delta=1 day, mu=0."""
        base = dict(hurst=0.83, vol_scale=0.59, beta=-5.0, obs_scale=1.0)
        if overrides.get("theta") is not None:
            del base["beta"]
        base.update(overrides)
        return cls(**base)

    @property
    def log_vol_sd(self) -> float:
        """Standard deviation of ``log sigma``: ``k delta^(H-1)``."""
        return self.vol_scale * self.obs_scale ** (self.hurst - 1.0)

    @property
    def log_vol_var(self) -> float:
        return self.log_vol_sd**2

    def with_(self, **changes) -> "ModelParams":
        """Copy with changes; ``beta`` is held fixed unless ``theta`` is given."""
        if changes.get("theta") is not None:
            changes.setdefault("beta", None)
        else:
            changes["theta"] = None
        return replace(self, **changes)

    def sigma_moment(self, n: float) -> float:
        """``E[sigma^n]`` of the lognormal volatility law."""
        return math.exp(n * self.beta + 0.5 * n * n * self.log_vol_var)


@dataclass(frozen=True)
class MarketPath:
    """Joint trajectory on the market grid (time 0 is the end of the burn-in).

    Arrays have shape ``(n_steps + 1,)`` or ``(n_paths, n_steps + 1)``.
    ``w_path`` is the Brownian motion behind ``B_H``; it is ``None`` when the
    fBm came from the exact generator, and is ``b_path`` itself in identified mode.
    """

    grid: FbmGrid
    mode: CouplingMode
    sigma: np.ndarray
    price: np.ndarray
    b_path: np.ndarray
    w_path: np.ndarray | None
    discounted: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def log_returns(self) -> np.ndarray:
        """Per-step log returns."""
        return np.diff(np.log(self.price), axis=-1)


def volatility_path(fbm: FbmPath, params: ModelParams) -> np.ndarray:
    """Volatility at every grid point ``t_i >= delta`` of ``fbm``."""
    if fbm.grid.horizon < params.obs_scale - 1e-12:
        raise ValueError(
            f"fBm horizon {fbm.grid.horizon} shorter than delta={params.obs_scale}"
        )
    x = fractional_noise(fbm, params.obs_scale)
    a = params.vol_scale / params.obs_scale
    # theta * exp(a x - a^2 delta^2H / 2) = exp(beta + a x)
    return np.exp(params.beta + a * x)


def _as_mode(mode) -> CouplingMode:
    return mode if isinstance(mode, CouplingMode) else CouplingMode(mode)


def simulate_market(
    params: ModelParams,
    mode="independent",
    grid: FbmGrid | None = None,
    seed=None,
    n_paths: int | None = None,
    fbm_route: str | None = None,
) -> MarketPath:
    """Simulate ``(sigma, S, B, W, Z)`` with the log-Euler scheme.

    Parameters
    ----------
    params : ModelParams
    mode : {"independent", "identified"}
    grid : FbmGrid
        Market grid; ``dt`` must divide ``delta``. An extra ``delta`` of fBm
        is simulated before time 0 so the first volatility is defined.
    seed : int or SeedSequence
    n_paths : int, optional
        Batch size; arrays gain a leading axis when given.
    fbm_route : {"exact", "kernel"}, optional
        How ``B_H`` is produced in independent mode. ``"exact"`` (default)
        uses the circulant generator; ``"kernel"`` synthesizes it from an
        explicit ``W``, which ``second_weight`` needs. Identified mode always
        uses the kernel.
    """
    mode = _as_mode(mode)
    if grid is None:
        raise ValueError("grid is required")
    m = grid.steps_for(params.obs_scale)
    if fbm_route is None:
        fbm_route = "exact" if mode is CouplingMode.INDEPENDENT else "kernel"
    if fbm_route not in ("exact", "kernel"):
        raise ValueError(f"unknown fbm_route {fbm_route!r}")
    if mode is CouplingMode.IDENTIFIED and fbm_route != "kernel":
        raise ValueError("identified mode requires the kernel route")

    batch = 1 if n_paths is None else int(n_paths)
    n = grid.n_steps
    fgrid = FbmGrid(n + m, grid.dt)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    fbm_seed, price_seed = ss.spawn(2)
    sqdt = math.sqrt(grid.dt)

    w_path = None
    if fbm_route == "exact":
        fbm = generate_fbm(fgrid, params.hurst, seed=fbm_seed, n_paths=batch)
    else:
        rng_w = np.random.default_rng(fbm_seed)
        dw_full = rng_w.standard_normal((batch, n + m)) * sqdt
        fbm = fbm_via_kernel(fgrid, KernelSpec.for_hurst(params.hurst), dw_full)
        dw = dw_full[:, m:]
        w_path = np.zeros((batch, n + 1))
        np.cumsum(dw, axis=1, out=w_path[:, 1:])

    sigma = volatility_path(fbm, params)
    if mode is CouplingMode.IDENTIFIED:
        db = dw
    else:
        db = np.random.default_rng(price_seed).standard_normal((batch, n)) * sqdt
    b_path = np.zeros((batch, n + 1))
    np.cumsum(db, axis=1, out=b_path[:, 1:])
    if mode is CouplingMode.IDENTIFIED:
        w_path = b_path

    s_left = sigma[:, :-1]
    log_s = np.empty((batch, n + 1))
    log_s[:, 0] = math.log(params.spot)
    np.cumsum((params.drift - 0.5 * s_left**2) * grid.dt + s_left * db, axis=1, out=log_s[:, 1:])
    log_s[:, 1:] += log_s[:, :1]
    price = np.exp(log_s)
    discounted = np.exp(log_s - params.riskfree * grid.times)

    if n_paths is None:
        sigma, price, b_path, discounted = sigma[0], price[0], b_path[0], discounted[0]
        w_path = None if w_path is None else w_path[0]
    return MarketPath(grid, mode, sigma, price, b_path, w_path, discounted)


def girsanov_weight(path: MarketPath, params: ModelParams) -> np.ndarray:
    """Density process ``eta_t`` turning the discounted price into a martingale.

    Left-endpoint sums: ``log eta_n = sum_i lam_i dB_i - sum_i lam_i^2 dt / 2``
    with ``lam_i = (r - mu) / sigma_i``.
    """
    sigma = path.sigma[..., :-1]
    if np.any(sigma <= 0):
        raise ValueError("volatility must be positive along the path")
    lam = (params.riskfree - params.drift) / sigma
    db = np.diff(path.b_path, axis=-1)
    incr = lam * db - 0.5 * lam**2 * path.grid.dt
    log_eta = np.zeros(path.sigma.shape)
    np.cumsum(incr, axis=-1, out=log_eta[..., 1:])
    return np.exp(log_eta)


def second_weight(path: MarketPath) -> np.ndarray:
    """``eta'_t = exp(W_t - t/2)`` built on the Brownian motion driving the volatility."""
    if path.mode is CouplingMode.IDENTIFIED:
        raise ValueError("second weight needs a Brownian source independent of the price driver")
    if path.w_path is None:
        raise ValueError("path carries no W; simulate with fbm_route='kernel'")
    return np.exp(path.w_path - 0.5 * path.grid.times)


def sample_lag_returns(
    params: ModelParams,
    lag: float,
    n_samples: int,
    seed=None,
    mode="independent",
    dt: float | None = None,
    chunk: int = 1_000_000,
) -> np.ndarray:
    """Independent draws of the ``lag``-day log return, one short path each.

    Chunks get their own spawned seed so the output does not depend on how
    the work is split beyond ``chunk`` itself.
    """
    dt = params.obs_scale if dt is None else dt
    grid = FbmGrid(FbmGrid(1, dt).steps_for(lag), dt)
    ss = np.random.SeedSequence(seed)
    n_chunks = -(-n_samples // chunk)
    out = np.empty(n_samples)
    for c, child in enumerate(ss.spawn(n_chunks)):
        lo = c * chunk
        size = min(chunk, n_samples - lo)
        path = simulate_market(params, mode, grid, child, n_paths=size)
        out[lo : lo + size] = np.log(path.price[:, -1] / path.price[:, 0])
    return out
