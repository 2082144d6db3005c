"""
Exact fractional Brownian motion generation.

Two routes are provided:

* ``generate_fbm`` draws from the exact Gaussian law of fBm on a uniform grid
  by circulant embedding of the fractional Gaussian noise covariance, with an
  exact Durbin-Levinson (Hosking) recursion as fallback.
* ``fbm_via_kernel`` synthesizes fBm from a *given* Brownian path through the
  Volterra representation ``B_H(t) = int_0^t K(t, s) dW_s``. This is what lets
  one Brownian path drive both the price and the volatility.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

# Panels used for the kernel quadrature: one leading panel plus geometrically
# graded panels toward the upper limit.
_KERNEL_PANELS = 14
_KERNEL_NODES = 20
_CHUNK = 1 << 15


@dataclass(frozen=True)
class FbmGrid:
    """Uniform time grid ``t_i = i * dt``, ``i = 0..n_steps``."""

    n_steps: int
    dt: float = 1.0

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def steps_for(self, duration: float) -> int:
        """Number of grid steps spanning ``duration``; raises if not an integer multiple of dt."""
        m = duration / self.dt
        m_int = int(round(m))
        if m_int < 1 or abs(m - m_int) > 1e-9 * max(1.0, m):
            raise ValueError(
                f"duration {duration} is not a positive integer multiple of dt={self.dt}"
            )
        return m_int


@dataclass(frozen=True)
class FbmPath:
    """Sampled fBm on a grid.

    ``values`` has shape ``(n_steps + 1,)`` for a single path or
    ``(n_paths, n_steps + 1)`` for a batch; column 0 is identically zero.
    """

    grid: FbmGrid
    hurst: float
    values: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise ValueError(f"hurst must lie in (0, 1), got {self.hurst}")
        if self.values.shape[-1] != self.grid.n_steps + 1:
            raise ValueError("values length does not match grid")

    @property
    def n_paths(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[0]


@dataclass(frozen=True)
class KernelSpec:
    """Volterra kernel for ``H > 1/2`` with its normalizing constant.

    Use :meth:`for_hurst` to obtain the constant fixed by ``Var(B_H(1)) = 1``.
    """

    hurst: float
    normalization: float

    def __post_init__(self):
        if not 0.5 < self.hurst < 1.0:
            raise ValueError(f"kernel representation requires H in (1/2, 1), got {self.hurst}")
        if not self.normalization > 0:
            raise ValueError("normalization must be positive")

    @classmethod
    def for_hurst(cls, hurst: float) -> "KernelSpec":
        return cls(hurst, kernel_normalization(hurst))


def _check_hurst(H):
    if not 0.0 < H < 1.0:
        raise ValueError(f"H must lie in (0, 1), got {H}")


def fbm_covariance(s, t, H):
    """Covariance ``E[B_H(s) B_H(t)] = (t^2H + s^2H - |t-s|^2H) / 2`` of standard fBm."""
    _check_hurst(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("times must be nonnegative")
    h2 = 2.0 * H
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return out[()] if out.ndim == 0 else out


def fgn_autocovariance(n, H, dt=1.0):
    """Autocovariance of fBm increments over steps of ``dt`` at lags ``0..n-1``."""
    k = np.arange(n, dtype=float)
    h2 = 2.0 * H
    gamma = 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)
    return gamma * dt**h2


def circulant_eigenvalues(n, H, dt=1.0):
    """Eigenvalues of the size-``2n`` circulant embedding of the increment covariance."""
    gamma = fgn_autocovariance(n + 1, H, dt)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    return np.fft.fft(row).real


class EmbeddingError(RuntimeError):
    """The circulant embedding has materially negative eigenvalues."""


def _circulant_increments(n, H, dt, n_paths, rng):
    lam = circulant_eigenvalues(n, H, dt)
    if lam.min() < -1e-10 * lam.max():
        raise EmbeddingError(f"negative circulant eigenvalue {lam.min():.3e}")
    m = lam.size
    scale = np.sqrt(np.clip(lam, 0.0, None) / m)
    xi = rng.standard_normal((n_paths, m)) + 1j * rng.standard_normal((n_paths, m))
    y = np.fft.fft(scale * xi, axis=-1)
    return y.real[:, :n]


def _hosking_increments(n, H, dt, n_paths, rng):
    # Durbin-Levinson: sequential exact conditional-Gaussian draws.
    gamma = fgn_autocovariance(n, H, dt)
    z = rng.standard_normal((n_paths, n))
    x = np.empty((n_paths, n))
    phi = np.zeros(n)
    v = gamma[0]
    x[:, 0] = np.sqrt(v) * z[:, 0]
    for i in range(1, n):
        kappa = (gamma[i] - phi[: i - 1] @ gamma[1:i][::-1]) / v
        phi[: i - 1] = phi[: i - 1] - kappa * phi[: i - 1][::-1]
        phi[i - 1] = kappa
        v *= 1.0 - kappa**2
        if not v > 0:
            raise RuntimeError("Hosking recursion lost positive definiteness")
        x[:, i] = x[:, :i][:, ::-1] @ phi[:i] + np.sqrt(v) * z[:, i]
    return x


def fgn_increments(n, H, dt=1.0, n_paths=1, seed=None, method="auto"):
    """Exact draws of ``n`` consecutive fBm increments, shape ``(n_paths, n)``.

    ``method`` is ``"auto"`` (circulant, Hosking fallback), ``"circulant"`` or
    ``"hosking"``. Failure of both routes raises; no approximate draws are
    ever returned.
    """
    _check_hurst(H)
    rng = np.random.default_rng(seed)
    if method == "hosking":
        return _hosking_increments(n, H, dt, n_paths, rng)
    try:
        return _circulant_increments(n, H, dt, n_paths, rng)
    except EmbeddingError:
        if method == "circulant":
            raise
    try:
        return _hosking_increments(n, H, dt, n_paths, rng)
    except Exception as exc:  # pragma: no cover - both exact routes failed
        raise RuntimeError("fBm generation failed: embedding and fallback both invalid") from exc


def generate_fbm(grid: FbmGrid, H: float, seed=None, n_paths=None, method="auto") -> FbmPath:
    """Draw fBm on ``grid`` from its exact joint Gaussian law.

    Parameters
    ----------
    grid : FbmGrid
    H : float
        Hurst exponent in (0, 1).
    seed : int, SeedSequence or Generator, optional
        Same seed, grid and H give bit-identical output.
    n_paths : int, optional
        If given, return a batch of shape ``(n_paths, n_steps + 1)``.
    """
    batch = 1 if n_paths is None else int(n_paths)
    inc = fgn_increments(grid.n_steps, H, grid.dt, batch, seed, method)
    values = np.zeros((batch, grid.n_steps + 1))
    np.cumsum(inc, axis=1, out=values[:, 1:])
    if n_paths is None:
        values = values[0]
    return FbmPath(grid, H, values)


def fractional_noise(path: FbmPath, delta: float) -> np.ndarray:
    """Increments ``B_H(t_i) - B_H(t_i - delta)`` at all grid points with ``t_i >= delta``.

    ``delta`` must be an integer multiple of the grid step.
    """
    m = path.grid.steps_for(delta)
    if m > path.grid.n_steps:
        raise ValueError(f"delta={delta} exceeds path horizon {path.grid.horizon}")
    v = path.values
    return v[..., m:] - v[..., :-m]


@lru_cache(maxsize=None)
def _legendre(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _kernel_integral(t, s, H):
    """``int_s^t (u-s)^(H-3/2) u^(H-1/2) du`` for arrays of 0 < s < t.

    With ``a = H - 1/2`` and ``u = s + v^(1/a)`` the integrand becomes the
    bounded function ``(s + v^(1/a))^a / a`` on ``[0, (t-s)^a]``. Gauss-Legendre
    panels are graded geometrically toward ``v = s^a`` where it bends.
    """
    a = H - 0.5
    t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
    shape = t.shape
    t = t.ravel()
    s = s.ravel()
    out = np.empty(t.size)
    x, w = _legendre(_KERNEL_NODES)
    p = _KERNEL_PANELS
    frac = np.arange(p + 1) / p
    for lo in range(0, t.size, _CHUNK):
        tt = t[lo : lo + _CHUNK]
        ss = s[lo : lo + _CHUNK]
        vmax = (tt - ss) ** a
        bend = ss**a
        with np.errstate(divide="ignore"):
            r0 = np.clip(0.25 * bend / vmax, 1e-14, 1.0)
        # edges[:, 0] = 0, edges[:, 1:] geometric from vmax*r0 up to vmax
        edges = np.empty((tt.size, p + 2))
        edges[:, 0] = 0.0
        edges[:, 1:] = vmax[:, None] * r0[:, None] ** (1.0 - frac[None, :])
        left = edges[:, :-1, None]
        width = (edges[:, 1:] - edges[:, :-1])[:, :, None]
        v = left + width * x
        f = (ss[:, None, None] + v ** (1.0 / a)) ** a
        out[lo : lo + _CHUNK] = np.sum(width * w * f, axis=(1, 2)) / a
    return out.reshape(shape)


def _kernel_unnormalized(t, s, H):
    t = np.asarray(t, float)
    s = np.asarray(s, float)
    return s ** (0.5 - H) * _kernel_integral(t, s, H)


def _graded_unit_rule(n_nodes=20, depth=60):
    """Gauss-Legendre panels on [0, 1] graded geometrically toward both ends."""
    tail = 0.5 ** np.arange(depth + 1, 1, -1)
    edges = np.concatenate([[0.0], tail, [0.5], 1.0 - tail[::-1], [1.0]])
    x, w = _legendre(n_nodes)
    width = np.diff(edges)[:, None]
    return (edges[:-1, None] + width * x).ravel(), (width * w).ravel()


def _unit_pieces(s, lo, H):
    """``int_l^(l+1) (u-s)^(H-3/2) u^(H-1/2) du`` for ``l - s >= 1/2`` (smooth integrand)."""
    x, w = _legendre(12)
    u = lo[..., None] + x
    return np.sum(w * (u - s[..., None]) ** (H - 1.5) * u ** (H - 0.5), axis=-1)


def _origin_mean_square(n, H, n_nodes=20, depth=60):
    """``int_0^1 K0(t, s)^2 ds`` of the unnormalized kernel for ``t = 1..n``.

    ``K0^2`` behaves like ``s^(1-2H)`` at 0; ``s = y^(1/(2-2H))`` flattens it.
    Beyond ``t = 2`` the inner integral grows by smooth unit intervals.
    """
    b = 2.0 - 2.0 * H
    y, wy = _graded_unit_rule(n_nodes, depth)
    s = y ** (1.0 / b)
    g = np.empty((n, s.size))
    g[0] = _kernel_integral(1.0, s, H)
    if n > 1:
        g[1] = _kernel_integral(2.0, s, H)
    if n > 2:
        lo = np.arange(2.0, n)
        pieces = _unit_pieces(s[:, None], lo[None, :], H)
        g[2:] = g[1] + np.cumsum(pieces, axis=1).T
    # ds = y^(1/b - 1)/b dy and s^(1-2H) = y^((1-2H)/b) cancel to 1/b
    return (g**2 @ wy) / b


@lru_cache(maxsize=64)
def kernel_normalization(H: float) -> float:
    """Constant ``C_H`` with ``int_0^1 K(1, s)^2 ds = Var(B_H(1)) = 1``."""
    if not 0.5 < H < 1.0:
        raise ValueError(f"kernel representation requires H in (1/2, 1), got {H}")
    return float(1.0 / np.sqrt(_origin_mean_square(1, H)[0]))


def kernel_K(t, s, spec: KernelSpec):
    """Normalized Volterra kernel ``C_H s^(1/2-H) int_s^t (u-s)^(H-3/2) u^(H-1/2) du``."""
    t = np.asarray(t, float)
    s = np.asarray(s, float)
    if np.any(s <= 0) or np.any(s >= t):
        raise ValueError("kernel requires 0 < s < t")
    out = spec.normalization * _kernel_unnormalized(t, s, spec.hurst)
    return out[()] if out.ndim == 0 else out


@lru_cache(maxsize=16)
def _volterra_matrix(n_steps, dt, H):
    # Row i (0-based) gives B_H(t_{i+1}) weights on dW_j at midpoints s_j = (j + 1/2) dt.
    # K(lam t, lam s) = lam^(H-1/2) K(t, s) lets us build it on the unit grid,
    # where K0(i+1, s_j) = s_j^(1/2-H) [int_{s_j}^{j+1} + sum_{l=j+1}^{i} int_l^{l+1}].
    n = n_steps
    s = np.arange(n) + 0.5
    g = np.zeros((n, n))  # g[j, i], upper triangle i >= j
    g[np.arange(n), np.arange(n)] = _kernel_integral(s + 0.5, s, H)
    rows = max(1, (1 << 22) // max(n, 1))
    for j0 in range(0, n, rows):
        jj = np.arange(j0, min(n, j0 + rows))
        lo = np.arange(n, dtype=float)
        valid = lo[None, :] > jj[:, None]
        pieces = np.where(
            valid, _unit_pieces(s[jj, None], np.maximum(lo[None, :], jj[:, None] + 1.0), H), 0.0
        )
        g[jj] = g[jj, jj][:, None] + np.cumsum(pieces, axis=1)
    mat = np.tril((s[:, None] ** (0.5 - H) * g).T)
    # First cell holds the s^(1/2-H) singularity: use its root-mean-square
    # kernel value so each cell carries its exact share of Var(B_H(t_i)).
    mat[:, 0] = np.sqrt(_origin_mean_square(n, H, n_nodes=12, depth=40))
    mat *= kernel_normalization(H) * dt ** (H - 0.5)
    mat.setflags(write=False)
    return mat


def volterra_matrix(grid: FbmGrid, spec: KernelSpec) -> np.ndarray:
    """Lower-triangular weights mapping Brownian increments to ``B_H(t_1..t_n)``."""
    mat = _volterra_matrix(grid.n_steps, grid.dt, spec.hurst)
    if spec.normalization != kernel_normalization(spec.hurst):
        mat = mat * (spec.normalization / kernel_normalization(spec.hurst))
    return mat


def fbm_via_kernel(grid: FbmGrid, spec: KernelSpec, w_increments) -> FbmPath:
    """Discretized Volterra sum ``B_H(t_i) = sum_{j<i} K(t_i, s_j*) dW_j``.

    ``w_increments`` has shape ``(n_steps,)`` or ``(n_paths, n_steps)``.
    """
    dw = np.asarray(w_increments, dtype=float)
    if dw.shape[-1] != grid.n_steps:
        raise ValueError(
            f"expected {grid.n_steps} Brownian increments, got {dw.shape[-1]}"
        )
    mat = volterra_matrix(grid, spec)
    values = np.zeros(dw.shape[:-1] + (grid.n_steps + 1,))
    values[..., 1:] = dw @ mat.T
    return FbmPath(grid, spec.hurst, values)
