"""Driving noise and path simulation on a two-sided time grid.

fBm is built from the moving-average representation
B^H_t = int K^H(t, s) dW_s, discretised with exact cell averages of the
kernel (signed RMS on the singular cells) against Brownian increments
on [-S_cut, T].  The kernel mass beyond -S_cut is folded into the
outermost cell.  Everything here is vectorised over a leading
path axis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, linalg, optimize

from .fbm_kernel import HurstLike, c_norm, cell_average_kernel, dc_norm, hurst_value
from .mc import MCEstimate, run_batches

AXIS_W = 1
AXIS_B = 2
_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class Grid:
    """Uniform mesh on [0, T] plus a geometrically graded mesh on [-S_cut, 0].

    ``s_cut`` is in time units; ``None`` means 50 T.  ``n_neg`` defaults to
    ``n_pos``.  The negative cells grow geometrically from ``neg_ratio * dt``
    next to 0 (uniform if they cannot reach S_cut otherwise).
    """

    T: float = 1.0
    n_pos: int = 100
    n_neg: int | None = None
    s_cut: float | None = None
    neg_ratio: float = 0.01

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.n_pos < 1:
            raise ValueError("n_pos must be >= 1")
        if self.n_neg is None:
            object.__setattr__(self, "n_neg", self.n_pos)
        if self.s_cut is None:
            object.__setattr__(self, "s_cut", 50.0 * self.T)
        if self.n_neg < 1:
            raise ValueError("n_neg must be >= 1")
        if self.s_cut <= 0:
            raise ValueError("s_cut must be positive")
        if self.neg_ratio <= 0:
            raise ValueError("neg_ratio must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.n_pos

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_pos + 1)

    @property
    def neg_edges(self) -> np.ndarray:
        return _neg_edges(self.n_neg, self.s_cut, self.neg_ratio * self.dt)

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([self.neg_edges[:-1], self.t])

    @property
    def n_cells(self) -> int:
        return self.n_neg + self.n_pos


@lru_cache(maxsize=64)
def _neg_edges(n: int, s_cut: float, h0: float) -> np.ndarray:
    if n == 1 or n * h0 >= s_cut:
        widths = np.full(n, s_cut / n)
    else:
        # geometric widths h0 r^k summing to s_cut
        f = lambda r: h0 * (r ** n - 1) / (r - 1) - s_cut
        hi = (s_cut / h0) ** (1.0 / max(n - 1, 1)) + 1.0  # last width alone exceeds s_cut
        r = optimize.brentq(f, 1 + 1e-12, hi, xtol=1e-15)
        widths = h0 * r ** np.arange(n)
        widths *= s_cut / widths.sum()
    inner = np.concatenate([[0.0], np.cumsum(widths)])
    edges = -inner[::-1]
    edges[0] = -s_cut
    edges[-1] = 0.0
    return edges


@dataclass(frozen=True)
class NoiseBundle:
    """Brownian increments for a batch of paths.

    ``dW`` has shape (n_paths, n_neg + n_pos) over all cells of
    [-S_cut, T]; ``dB`` has shape (n_paths, n_pos) over [0, T].
    """

    dW: np.ndarray
    dB: np.ndarray
    seed: int
    path_index: np.ndarray
    grid: Grid

    @property
    def dW_pos(self) -> np.ndarray:
        return self.dW[:, self.grid.n_neg:]

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]


@dataclass(frozen=True)
class ProcessPath:
    """Process values on the positive nodes; shape (..., n_pos + 1)."""

    values: np.ndarray
    grid: Grid = field(repr=False)

    def __post_init__(self):
        if self.values.shape[-1] != self.grid.n_pos + 1:
            raise ValueError("path length does not match the grid")

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    def to_csv(self, path, row: int = 0):
        vals = self.values if self.values.ndim == 1 else self.values[row]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "value"])
            for t, v in zip(self.t, vals):
                w.writerow([repr(float(t)), repr(float(v))])


def _stream(seed: int, axis: int, path: int) -> np.random.Generator:
    # Philox is counter based: the key carries (seed, axis), the top counter
    # word the path index, so streams are disjoint and independent of batching
    bitgen = np.random.Philox(key=[seed & _U64, axis], counter=[0, 0, 0, int(path)])
    return np.random.Generator(bitgen)


def sample_noise(grid: Grid, seed: int, path_index) -> NoiseBundle:
    """Deterministic increments for the given path index (int or array)."""
    idx = np.atleast_1d(np.asarray(path_index, dtype=np.int64))
    if np.any(idx < 0):
        raise ValueError("path indices must be non-negative")
    sd_w = np.sqrt(np.diff(grid.edges))
    sd_b = np.sqrt(grid.dt)
    dW = np.empty((idx.size, grid.n_cells))
    dB = np.empty((idx.size, grid.n_pos))
    for row, i in enumerate(idx):
        dW[row] = _stream(seed, AXIS_W, i).standard_normal(grid.n_cells) * sd_w
        dB[row] = _stream(seed, AXIS_B, i).standard_normal(grid.n_pos) * sd_b
    return NoiseBundle(dW, dB, int(seed), idx, grid)


@lru_cache(maxsize=128)
def _weights(grid: Grid, h: float, derivative: bool) -> np.ndarray:
    w = cell_average_kernel(h, grid.t, grid.edges, derivative)
    # The cell just left of each node holds the s -> t singularity.  Its
    # weight is the RMS of the kernel over the cell, which reproduces the
    # cell's exact variance C^2 dt^{2a+1} / (2a + 1); the plain average
    # loses up to 6% of it for rough H.
    a = h - 0.5
    dt = grid.dt
    root = np.sqrt(2 * a + 1)
    if derivative:
        rms = (dc_norm(h) + c_norm(h) * (np.log(dt) - 1.0 / (2 * a + 1))) * dt ** a / root
    else:
        rms = c_norm(h) * dt ** a / root
    k = np.arange(1, grid.n_pos + 1)
    w[k, grid.n_neg + k - 1] = rms
    _exact_negative_edges(w, grid, h, derivative)
    return np.ascontiguousarray(w.T)


def _neg_moments(h: float, t: float, u_lo: float, u_hi: float, derivative: bool = True):
    """Integrals of K^2, 2 K dK/dH and (dK/dH)^2 over s in [-u_hi, -u_lo].

    With -s = t e^y the kernel is c t^a e^{ay} ((1 + e^{-y})^a - 1); each
    moment becomes t^{2a+1} times a smooth integral in y that decays
    exponentially at both ends.
    """
    a = h - 0.5
    c, dc = c_norm(h), dc_norm(h)
    lt = np.log(t)

    def parts(y):
        if y < -700:  # u -> 0, where both integrands vanish
            return 0.0, 0.0
        x = np.exp(-y)
        if x == 0.0:
            fx, lx = a, 1.0
        else:
            fx, lx = np.expm1(a * np.log1p(x)) / x, np.log1p(x) / x
        g = fx * (lt + y) + (1 + x) ** a * lx
        decay = np.exp((a - 0.5) * y)  # x^{-a-1/2}, the root of x^{-2a-1} with dx = x dy
        return c * fx * decay, (dc * fx + c * g) * decay

    lo = np.log(u_lo / t) if u_lo > 0 else -np.inf
    hi = np.log(u_hi / t) if np.isfinite(u_hi) else np.inf

    def q(fn):
        return integrate.quad(fn, lo, hi, limit=200)[0] * t ** (2 * a + 1)

    kk = q(lambda y: parts(y)[0] ** 2)
    if not derivative:
        return kk, 0.0, 0.0
    return kk, q(lambda y: 2 * parts(y)[0] * parts(y)[1]), q(lambda y: parts(y)[1] ** 2)


def _signed_rms(a: float, width: float, kk: float, kd: float, dd: float, derivative: bool):
    # sign(a) sqrt(kk / width) and its H-derivative; the kernel on s < 0 has
    # the sign of a and vanishes at a = 0, where the derivative is the limit
    if not derivative:
        return np.sign(a) * np.sqrt(kk / width)
    if a == 0:
        return np.sqrt(dd / width)
    return np.sign(a) * kd / (2 * np.sqrt(kk * width))


def _exact_negative_edges(w: np.ndarray, grid: Grid, h: float, derivative: bool):
    """Replace the averages on the two singular negative cells by signed RMS weights.

    The cell next to 0 carries the (-s)^a singularity for H < 1/2.  The
    outermost cell also absorbs the kernel mass beyond -S_cut: for |s| >> t
    the kernel is close to c a t (-s)^{a-1}, nearly the same shape in t as
    on that cell, so one Gaussian carries both.  Both make the per-node
    variance of the cell exact.
    """
    a = h - 0.5
    edges = grid.edges
    zero, outer = grid.n_neg - 1, 0
    h0 = -edges[zero]
    d0 = edges[1] - edges[0]
    for i in range(1, grid.n_pos + 1):
        t = float(grid.t[i])
        if grid.n_neg == 1:
            m = _neg_moments(h, t, 0.0, np.inf, derivative)
            w[i, zero] = _signed_rms(a, h0, *m, derivative)
            continue
        kk, kd, dd = _neg_moments(h, t, grid.s_cut, np.inf, derivative)
        w0 = cell_average_kernel(h, grid.t[i:i + 1], edges[:2])[0, 0]
        dw0 = w[i, outer] if derivative else 0.0
        w[i, outer] = _signed_rms(a, d0, w0 * w0 * d0 + kk, 2 * w0 * dw0 * d0 + kd,
                                  dw0 * dw0 * d0 + dd, derivative)
        w[i, zero] = _signed_rms(a, h0, *_neg_moments(h, t, 0.0, h0, derivative), derivative)


def kernel_weights(grid: Grid, H: HurstLike, derivative: bool = False) -> np.ndarray:
    """Discretised (derivative) kernel matrix, shape (n_cells, n_pos + 1).

    Cell averages everywhere except the singular cells (the one left of each
    node and the one left of 0), which carry the kernel's signed RMS; the
    outermost cell also carries the mass beyond -S_cut.  The derivative matrix is the exact
    H-derivative of the kernel matrix.
    """
    return _weights(grid, hurst_value(H), derivative)


def fbm_path(noise: NoiseBundle, H: HurstLike) -> ProcessPath:
    h = hurst_value(H)
    g = noise.grid
    if h == 0.5:
        vals = np.zeros((noise.n_paths, g.n_pos + 1))
        np.cumsum(noise.dW_pos, axis=1, out=vals[:, 1:])
    else:
        vals = noise.dW @ kernel_weights(g, h)
    return ProcessPath(vals, g)


def ou_convolution(x: np.ndarray, alpha: float, dt: float) -> np.ndarray:
    """J_t = int_0^t e^{-alpha (t-u)} x_u du by the trapezoid rule, along the last axis."""
    decay = np.exp(-alpha * dt)
    out = np.zeros_like(x)
    for k in range(x.shape[-1] - 1):
        out[..., k + 1] = decay * out[..., k] + 0.5 * dt * (decay * x[..., k] + x[..., k + 1])
    return out


def ou_filter(driver: np.ndarray, alpha: float, dt: float) -> np.ndarray:
    """x_t - alpha int_0^t e^{-alpha(t-u)} x_u du (integration by parts of the OU solution)."""
    if alpha == 0:
        return driver.copy()
    return driver - alpha * ou_convolution(driver, alpha, dt)


def fou_path(noise: NoiseBundle, H: HurstLike, alpha: float, x0: float,
             fbm: ProcessPath | None = None) -> ProcessPath:
    """Fractional OU process started at ``x0``.

    lam_t = e^{-alpha t} x0 + B^H_t - alpha e^{-alpha t} int_0^t B^H_u e^{alpha u} du
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    g = noise.grid
    b = fbm_path(noise, H) if fbm is None else fbm
    vals = np.exp(-alpha * g.t) * x0 + ou_filter(b.values, alpha, g.dt)
    return ProcessPath(vals, g)


def dlambda_path(noise: NoiseBundle, H: HurstLike, alpha: float,
                 convolution: bool = True) -> ProcessPath:
    """H-derivative of the fOU path driven by the same noise.

    ``convolution=False`` drops the -alpha e^{-alpha t} int (...) e^{alpha u} du
    term, which reproduces the shorter display sometimes quoted for H = 1/2.
    """
    g = noise.grid
    drv = noise.dW @ kernel_weights(g, H, derivative=True)
    vals = ou_filter(drv, alpha, g.dt) if convolution else drv
    return ProcessPath(vals, g)


class FactorizationError(linalg.LinAlgError):
    pass


def fbm_covariance(t: np.ndarray, H: HurstLike) -> np.ndarray:
    h = hurst_value(H)
    t = np.asarray(t, dtype=float)
    tt, ss = np.meshgrid(t, t, indexing="ij")
    return 0.5 * (np.abs(tt) ** (2 * h) + np.abs(ss) ** (2 * h) - np.abs(tt - ss) ** (2 * h))


def exact_fbm_oracle(grid: Grid, H: HurstLike, seed: int, n_paths: int = 1,
                     jitter: float = 0.0) -> ProcessPath:
    """Exact Gaussian samples of fBm on the grid via a dense Cholesky factor."""
    if grid.n_pos > 512:
        raise ValueError("dense oracle limited to n_pos <= 512")
    cov = fbm_covariance(grid.t[1:], H)
    if jitter:
        cov = cov + jitter * np.eye(len(cov))
    try:
        L = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError(
            f"covariance not positive definite ({exc}); retry with jitter=1e-12 or larger") from exc
    rng = np.random.Generator(np.random.Philox(key=[seed & _U64, 7]))
    z = rng.standard_normal((n_paths, grid.n_pos))
    vals = np.zeros((n_paths, grid.n_pos + 1))
    vals[:, 1:] = z @ L.T
    return ProcessPath(vals, grid)


def integrated_square(x: ProcessPath) -> np.ndarray:
    """int_0^T x_t^2 dt per path (trapezoid)."""
    v = x.values ** 2
    return x.grid.dt * (v[..., 1:-1].sum(axis=-1) + 0.5 * (v[..., 0] + v[..., -1]))


def norm_beta(sampler: Callable[[np.ndarray], ProcessPath], beta: float, n_paths: int,
              p: float | None = None, seed: int = 0, workers: int | None = None) -> MCEstimate:
    """E[(int_0^T lam_t^2 dt)^beta]^{1/(2 beta)} with a delta-method standard error.

    ``sampler(path_indices)`` returns the process for those paths.  When the
    risk aversion ``p`` is given, beta must exceed 1 - p.
    """
    if beta <= 1:
        raise ValueError(f"beta must exceed 1, got {beta}")
    if p is not None and beta <= 1 - p:
        raise ValueError(f"beta must exceed 1 - p = {1 - p} (-q beta / (beta - 1) < 1), got {beta}")
    res = run_batches(lambda idx: {"m": integrated_square(sampler(idx)) ** beta}, n_paths, workers)
    m = MCEstimate.from_samples(res["m"], seed)
    if m.mean <= 0:
        return MCEstimate(0.0, 0.0, n_paths, seed)
    e = 1.0 / (2 * beta)
    val = m.mean ** e
    return MCEstimate(val, e * m.mean ** (e - 1) * m.stderr, n_paths, seed)


def frechet_remainder(grid: Grid, H: HurstLike, alpha: float, x0: float, beta: float,
                      eps_list, n_paths: int, seed: int, convolution: bool = True,
                      workers: int | None = None) -> list[MCEstimate]:
    """||lam^{H+eps} - lam^H - eps D lam^H||_beta / |eps| for each eps, on common noise."""
    h = hurst_value(H)
    out = []
    for e in eps_list:
        if e == 0 or not 0 < h + e < 1:
            raise ValueError(f"eps must be non-zero with H + eps in (0, 1), got {e}")

        def sampler(idx, e=e):
            noise = sample_noise(grid, seed, idx)
            lam = fou_path(noise, h, alpha, x0).values
            lam_e = fou_path(noise, h + e, alpha, x0).values
            d = dlambda_path(noise, h, alpha, convolution).values
            return ProcessPath(lam_e - lam - e * d, grid)

        est = norm_beta(sampler, beta, n_paths, seed=seed, workers=workers)
        out.append(MCEstimate(est.mean / abs(e), est.stderr / abs(e), n_paths, seed))
    return out
