"""Return-series statistics and Monte Carlo martingale diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fracvol.fbm import FbmGrid
from fracvol.model import (
    CouplingMode,
    ModelParams,
    girsanov_weight,
    second_weight,
    simulate_market,
)

Z_THRESHOLD = 3.0
WEIGHT_KINDS = ("eta", "eta_times_eta_prime", "none")


@dataclass(frozen=True)
class LeverageCurve:
    """``L(tau)`` estimates with batch-means standard errors.

    ``normalized`` is ``L(tau) / <r^2>^2``; ``values`` is the raw correlator.
    """

    taus: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    normalized: np.ndarray
    normalized_stderr: np.ndarray

    @property
    def z_scores(self) -> np.ndarray:
        return self.values / self.stderr


@dataclass(frozen=True)
class KurtosisEstimate:
    value: float
    stderr: float

    @property
    def z_score(self) -> float:
        return self.value / self.stderr


@dataclass(frozen=True)
class MartingaleCheckResult:
    estimate: float
    target: float
    stderr: float
    z_score: float
    passed: bool
    weight_kind: str
    mode: str
    n_paths: int
    dt: float
    horizon: float
    refined: bool
    ess: float  # effective sample size of the weights


def _lagged(returns, tau):
    # pairs (r(t), r(t + tau)) within each row
    n = returns.shape[-1]
    if tau >= 0:
        return returns[..., : n - tau], returns[..., tau:]
    return returns[..., -tau:], returns[..., : n + tau]


def _correlator(now, later):
    sq = later**2
    return np.mean(sq * now) - np.mean(sq) * np.mean(now)


def _batches(returns, n_batches):
    """Independent-ish blocks: groups of rows, or contiguous time blocks of a single series."""
    if returns.shape[0] >= n_batches:
        return np.array_split(returns, n_batches, axis=0)
    flat = returns.reshape(-1) if returns.shape[0] == 1 else returns
    blocks = np.array_split(np.arange(flat.shape[-1]), n_batches)
    return [np.atleast_2d(flat[..., b[0] : b[-1] + 1]) for b in blocks]


def leverage(returns, taus, n_batches: int = 20) -> LeverageCurve:
    """Leverage correlator ``<r(t+tau)^2 r(t)> - <r(t+tau)^2><r(t)>``.

    Parameters
    ----------
    returns : array_like
        A single series, or ``(n_series, n_obs)`` of independent series;
        lag pairs never cross series boundaries.
    taus : sequence of int
        Lags in observation steps, positive or negative.
    n_batches : int
        Batches for the batch-means standard error (at least 20).
    """
    r = np.atleast_2d(np.asarray(returns, dtype=float))
    taus = np.asarray(list(taus), dtype=int)
    if n_batches < 20:
        raise ValueError("need at least 20 batches")
    max_tau = int(np.max(np.abs(taus))) if taus.size else 0
    span = r.shape[-1] if r.shape[0] >= n_batches else r.shape[-1] // n_batches
    if r.shape[-1] < 10 * max_tau or span <= max_tau:
        raise ValueError(f"series too short for |tau| up to {max_tau}")
    scale = np.mean(r**2) ** 2
    batches = _batches(r, n_batches)
    vals, errs, nvals, nerrs = [], [], [], []
    for tau in taus:
        now, later = _lagged(r, tau)
        est = _correlator(now, later)
        per = []
        per_norm = []
        for b in batches:
            bn, bl = _lagged(b, tau)
            c = _correlator(bn, bl)
            per.append(c)
            per_norm.append(c / np.mean(b**2) ** 2)
        se = np.std(per, ddof=1) / math.sqrt(len(per))
        vals.append(est)
        errs.append(se)
        nvals.append(est / scale)
        nerrs.append(np.std(per_norm, ddof=1) / math.sqrt(len(per_norm)))
    return LeverageCurve(taus, np.array(vals), np.array(errs), np.array(nvals), np.array(nerrs))


def excess_kurtosis(returns, n_groups: int = 100) -> KurtosisEstimate:
    """Moment estimator ``m4 / m2^2 - 3`` with a delete-a-group jackknife SE."""
    x = np.asarray(returns, dtype=float).ravel()
    if x.size < 10_000:
        raise ValueError("need at least 10^4 returns")
    x = x - x.mean()
    if not np.any(x):
        raise ValueError("zero-variance input")
    groups = np.array_split(x, n_groups)
    sums = np.array([[g.size, g.sum(), (g**2).sum(), (g**3).sum(), (g**4).sum()] for g in groups])

    def kurt(s):
        n, s1, s2, s3, s4 = s
        mu = s1 / n
        m2 = s2 / n - mu**2
        m4 = s4 / n - 4 * mu * s3 / n + 6 * mu**2 * s2 / n - 3 * mu**4
        return m4 / m2**2 - 3.0

    total = sums.sum(axis=0)
    if total[2] == 0:
        raise ValueError("zero-variance input")
    full = kurt(total)
    leave = np.array([kurt(total - s) for s in sums])
    g = len(groups)
    se = math.sqrt((g - 1) / g * np.sum((leave - leave.mean()) ** 2))
    return KurtosisEstimate(float(full), float(se))


def _check_once(params, mode, weight_kind, n_paths, grid, seed, chunk):
    ss = np.random.SeedSequence(seed)
    n_chunks = -(-n_paths // chunk)
    values = np.empty(n_paths)
    weights = np.empty(n_paths)
    for c, child in enumerate(ss.spawn(n_chunks)):
        lo = c * chunk
        size = min(chunk, n_paths - lo)
        path = simulate_market(params, mode, grid, child, n_paths=size, fbm_route="kernel")
        if weight_kind == "none":
            w = np.ones(size)
        else:
            w = girsanov_weight(path, params)[:, -1]
            if weight_kind == "eta_times_eta_prime":
                w = w * second_weight(path)[:, -1]
        weights[lo : lo + size] = w
        values[lo : lo + size] = w * path.discounted[:, -1]
    est = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n_paths))
    ess = float(weights.sum() ** 2 / np.sum(weights**2))
    return est, se, ess


def martingale_check(
    params: ModelParams,
    mode="independent",
    weight_kind: str = "eta",
    n_paths: int = 100_000,
    grid: FbmGrid | None = None,
    seed=None,
    threshold: float = Z_THRESHOLD,
    refine: bool = True,
    chunk: int = 50_000,
) -> MartingaleCheckResult:
    """Weighted Monte Carlo test of ``E[weight_T Z_T] = Z_0``.

    ``weight_kind`` is ``"eta"`` (first martingale measure),
    ``"eta_times_eta_prime"`` (second measure, independent mode only) or
    ``"none"`` (the physical measure, a control that should fail when
    ``mu != r``). On failure the grid step is halved once and the check rerun.
    """
    mode = CouplingMode(mode)
    if weight_kind not in WEIGHT_KINDS:
        raise ValueError(f"unknown weight_kind {weight_kind!r}")
    if weight_kind == "eta_times_eta_prime" and mode is not CouplingMode.INDEPENDENT:
        raise ValueError("eta_times_eta_prime requires independent mode")
    if grid is None:
        grid = FbmGrid(2, params.obs_scale / 8)
    grid.steps_for(params.obs_scale)
    target = params.spot
    refined = False
    while True:
        est, se, ess = _check_once(params, mode, weight_kind, n_paths, grid, seed, chunk)
        z = (est - target) / se if se > 0 else (0.0 if est == target else math.inf)
        passed = abs(z) < threshold
        if passed or not refine or refined:
            break
        grid = FbmGrid(2 * grid.n_steps, grid.dt / 2)
        refined = True
    return MartingaleCheckResult(
        est, target, se, z, passed, weight_kind, mode.value, n_paths, grid.dt, grid.horizon, refined, ess
    )
