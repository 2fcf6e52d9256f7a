"""Returns, wealth, deflators and power utility on simulated market paths.

The return of the risky asset is dR = lam dt + dM with
M = rho W + sqrt(1 - rho^2) B, so <M>_t = t.  Wealth is the stochastic
exponential of int pi dR, discretised in log form so it stays positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .fbm_kernel import hurst_value
from .mc import MCEstimate, run_batches
from .paths import Grid, NoiseBundle, ProcessPath, fou_path, sample_noise

MODELS = ("model1", "model2", "constant")


@dataclass(frozen=True)
class ModelParams:
    """Market and investor parameters.

    ``x0`` is the initial drift lam_0 (Model 1) or initial log-volatility
    sigma_0 (Model 2).  ``mu`` is the drift for ``model="constant"`` and the
    numerator mu in Model 2's auxiliary drift mu e^{-sigma}.
    """

    H: float = 0.5
    alpha: float = 1.0
    x0: float = 0.5
    rho: float = 0.5
    p: float = -1.0
    T: float = 1.0
    model: str = "model1"
    mu: float = 1.0

    def __post_init__(self):
        hurst_value(self.H)
        if self.p >= 0:
            raise ValueError(f"risk aversion p must be negative, got {self.p}")
        if not (0 < self.rho <= 1):
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.T <= 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")

    @property
    def q(self) -> float:
        """Conjugate exponent p / (1 - p), in (-1, 0)."""
        return self.p / (1 - self.p)

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class StrategySpec:
    """Feedback rule pi(t, state) giving the proportion of wealth in the stock.

    ``state`` maps names ("lam", "sigma", "R") to arrays shaped
    (n_paths, n_nodes); ``t`` is the node vector.  Rules must be pointwise in
    time so that the proportion at a node only uses information up to it.
    """

    rule: Callable[[np.ndarray, dict], np.ndarray]
    name: str = "strategy"

    def evaluate(self, t: np.ndarray, state: dict) -> np.ndarray:
        ref = state["lam"]
        pi = np.broadcast_to(np.asarray(self.rule(t, state), dtype=float), ref.shape)
        return pi


def constant_strategy(c: float) -> StrategySpec:
    return StrategySpec(lambda t, s: np.full_like(s["lam"], c), name=f"constant({c:g})")


def merton_strategy(mu: float, p: float) -> StrategySpec:
    """Optimal constant proportion mu / (1 - p) for a constant drift."""
    return constant_strategy(mu / (1 - p))


def myopic_strategy(p: float, scale: float = 1.0) -> StrategySpec:
    return StrategySpec(lambda t, s: scale * s["lam"] / (1 - p), name=f"myopic({scale:g})")


@dataclass
class MarketPaths:
    """One batch of simulated market paths sharing a noise bundle."""

    noise: NoiseBundle
    lam: ProcessPath
    dM: np.ndarray
    R: ProcessPath
    sigma: Optional[ProcessPath] = None
    extra: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.noise.grid

    def state(self) -> dict:
        s = {"lam": self.lam.values, "R": self.R.values}
        if self.sigma is not None:
            s["sigma"] = self.sigma.values
        s.update(self.extra)
        return s


def martingale_increments(noise: NoiseBundle, rho: float) -> np.ndarray:
    return rho * noise.dW_pos + np.sqrt(1 - rho * rho) * noise.dB


def _check_grid(path: ProcessPath, noise: NoiseBundle):
    if path.grid != noise.grid:
        raise ValueError("process and noise live on different grids")
    if path.values.shape[0] != noise.n_paths and path.values.ndim > 1:
        raise ValueError("process and noise have different path counts")


def return_path(lam: ProcessPath, noise: NoiseBundle, rho: float) -> ProcessPath:
    """R_{k+1} = R_k + lam_k dt + rho dW_k + sqrt(1 - rho^2) dB_k, R_0 = 0."""
    _check_grid(lam, noise)
    g = noise.grid
    lam_v = np.broadcast_to(lam.values, (noise.n_paths, g.n_pos + 1))
    dR = lam_v[:, :-1] * g.dt + martingale_increments(noise, rho)
    R = np.zeros((noise.n_paths, g.n_pos + 1))
    np.cumsum(dR, axis=1, out=R[:, 1:])
    return ProcessPath(R, g)


def _proportions(strategy, t, state) -> np.ndarray:
    if isinstance(strategy, StrategySpec):
        return strategy.evaluate(t, state)
    return np.broadcast_to(np.asarray(strategy, dtype=float), state["lam"].shape)


def wealth_from_increments(pi: np.ndarray, dR: np.ndarray, dqv, x0: float = 1.0) -> np.ndarray:
    """x0 * exp(sum pi dR - 1/2 sum pi^2 d<R>) at every node."""
    if x0 <= 0:
        raise ValueError("initial capital must be positive")
    p = pi[..., :-1]
    with np.errstate(over="ignore", invalid="ignore"):
        qv = np.sum(p * p * dqv, axis=-1)
    if not np.all(np.isfinite(qv)):
        raise ValueError("inadmissible strategy: int pi^2 d<R> is not finite on some path")
    logx = np.zeros(pi.shape)
    np.cumsum(p * dR - 0.5 * p * p * dqv, axis=-1, out=logx[..., 1:])
    return x0 * np.exp(logx)


def wealth_path(strategy, R: ProcessPath, lam: ProcessPath, x0: float = 1.0,
                state: dict | None = None) -> ProcessPath:
    """Wealth of a proportion strategy in the unit-volatility market with returns R."""
    g = R.grid
    if state is None:
        state = {"lam": np.broadcast_to(lam.values, R.values.shape), "R": R.values}
    pi = _proportions(strategy, g.t, state)
    X = wealth_from_increments(pi, np.diff(R.values, axis=-1), g.dt, x0)
    return ProcessPath(X, g)


def deflator_path(lam: ProcessPath, noise: NoiseBundle, rho: float) -> ProcessPath:
    """Z = E(-lam . M) in log-Euler form; Z_0 = 1."""
    _check_grid(lam, noise)
    g = noise.grid
    lam_v = np.broadcast_to(lam.values, (noise.n_paths, g.n_pos + 1))[:, :-1]
    dM = martingale_increments(noise, rho)
    logz = np.zeros((noise.n_paths, g.n_pos + 1))
    np.cumsum(-lam_v * dM - 0.5 * lam_v ** 2 * g.dt, axis=1, out=logz[:, 1:])
    return ProcessPath(np.exp(logz), g)


def utility(x, p: float):
    with np.errstate(divide="ignore", over="ignore"):
        return np.asarray(x, dtype=float) ** p / p


def drift_path(params: ModelParams, noise: NoiseBundle, H: float | None = None):
    """Market price of risk (and log-volatility for Model 2) for a batch."""
    g = noise.grid
    h = params.H if H is None else H
    if params.model == "model1":
        return fou_path(noise, h, params.alpha, params.x0), None
    if params.model == "model2":
        sigma = fou_path(noise, h, params.alpha, params.x0)
        return ProcessPath(params.mu * np.exp(-sigma.values), g), sigma
    return ProcessPath(np.full((noise.n_paths, g.n_pos + 1), float(params.mu)), g), None


def simulate_market(params: ModelParams, noise: NoiseBundle, H: float | None = None) -> MarketPaths:
    """Drift, martingale increments and returns for one batch.

    For Model 2 the returned ``lam`` is the auxiliary drift mu e^{-sigma}:
    strategies act in the unit-volatility auxiliary market.
    """
    lam, sigma = drift_path(params, noise, H)
    dM = martingale_increments(noise, params.rho)
    R = return_path(lam, noise, params.rho)
    return MarketPaths(noise, lam, dM, R, sigma)


def terminal_utility(strategy, market: MarketPaths, p: float, x0: float = 1.0) -> np.ndarray:
    X = wealth_path(strategy, market.R, market.lam, x0, state=market.state())
    return utility(X.values[:, -1], p)


def estimate_value(strategy, params: ModelParams, n_paths: int, seed: int,
                   grid: Grid | None = None, x0: float = 1.0,
                   workers: int | None = None) -> MCEstimate:
    """Monte Carlo estimate of E[U(X_T)] for a fixed strategy.

    A lower bound for the optimal value whenever the strategy is admissible.
    """
    grid = Grid(params.T) if grid is None else grid
    if abs(grid.T - params.T) > 1e-12:
        raise ValueError("grid horizon differs from params.T")

    def run(idx):
        m = simulate_market(params, sample_noise(grid, seed, idx))
        u = terminal_utility(strategy, m, params.p, x0)
        bad = ~np.isfinite(u)
        if bad.any():
            raise ValueError(f"non-finite utility on path {int(idx[bad][0])} (seed {seed})")
        return {"u": u}

    return MCEstimate.from_samples(run_batches(run, n_paths, workers)["u"], seed)


# --------------------------------------------------------------------------
# Model 2: log-volatility with memory
# --------------------------------------------------------------------------

def model2_transform(strategy, sigma: ProcessPath | None = None) -> StrategySpec:
    """Map an S-market strategy pi to the auxiliary-market strategy pi e^{sigma}.

    Without ``sigma`` the log-volatility is read from the state at run time.
    """
    def rule(t, state):
        s = state["sigma"] if sigma is None else sigma.values
        return _proportions(strategy, t, state) * np.exp(s)

    return StrategySpec(rule, name="model2_transform")


def model2_s_market_wealth(strategy, market: MarketPaths, mu: float = 1.0,
                           x0: float = 1.0) -> ProcessPath:
    """Wealth in the original market dR = mu dt + e^{sigma} dM."""
    if market.sigma is None:
        raise ValueError("Model 2 wealth needs a log-volatility path")
    g = market.grid
    vol = np.exp(market.sigma.values[:, :-1])
    dR = mu * g.dt + vol * market.dM
    pi = _proportions(strategy, g.t, market.state())
    return ProcessPath(wealth_from_increments(pi, dR, vol * vol * g.dt, x0), g)


def dvol_process(sigma: ProcessPath, dlam: ProcessPath, mu: float = 1.0) -> ProcessPath:
    """H-derivative of the auxiliary drift mu e^{-sigma^H}: -mu e^{-sigma} D lam."""
    if sigma.grid != dlam.grid:
        raise ValueError("sigma and D lam live on different grids")
    return ProcessPath(-mu * np.exp(-sigma.values) * dlam.values, sigma.grid)
