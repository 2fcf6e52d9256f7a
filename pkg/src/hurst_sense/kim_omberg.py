"""Markovian base case: power utility with an Ornstein-Uhlenbeck market price of risk.

State dynamics
    d lam = kappa (mean - lam) dt + eta dW,    dR = lam dt + dM,
    d<W, M> = rho dt,

with the value-function ansatz u(t, x, lam) = x^p / p * exp(A + B lam + C lam^2 / 2).
Substituting into the HJB equation and matching powers of lam gives, with
q = p / (1 - p),

    C' = -q (1 + rho eta C)^2 + 2 kappa C - eta^2 C^2
    B' = -q rho eta (1 + rho eta C) B + kappa B - kappa mean C - eta^2 B C
    A' = -(q/2) rho^2 eta^2 B^2 - kappa mean B - (eta^2 / 2) (C + B^2)

with A(T) = B(T) = C(T) = 0, and the optimal proportion

    pi(t, lam) = (lam + rho eta (B(t) + C(t) lam)) / (1 - p).

The model of the fOU drift at H = 1/2 is mean = 0, eta = 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .market import ModelParams, StrategySpec

OVERFLOW_GUARD = 1e8
MAX_SUBSTEPS = 10000


class RiccatiBlowUpError(ArithmeticError):
    pass


@dataclass(frozen=True)
class RiccatiSolution:
    t: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    p: float
    rho: float
    kappa: float
    mean: float = 0.0
    eta: float = 1.0

    def at(self, t):
        """(A, B, C) linearly interpolated at times ``t``."""
        return (np.interp(t, self.t, self.A), np.interp(t, self.t, self.B),
                np.interp(t, self.t, self.C))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "A", "B", "C"])
            for row in zip(self.t, self.A, self.B, self.C):
                w.writerow([repr(float(v)) for v in row])


def _rhs(y, q, rho, kappa, mean, eta):
    A, B, C = y
    re = rho * eta
    dC = -q * (1 + re * C) ** 2 + 2 * kappa * C - eta * eta * C * C
    dB = -q * re * (1 + re * C) * B + kappa * B - kappa * mean * C - eta * eta * B * C
    dA = -0.5 * q * re * re * B * B - kappa * mean * B - 0.5 * eta * eta * (C + B * B)
    return np.array([dA, dB, dC])


def solve_riccati(params: ModelParams, n_steps: int = 100, mean: float = 0.0,
                  eta: float = 1.0, kappa: float | None = None) -> RiccatiSolution:
    """Integrate the Riccati system backward from T with classical RK4.

    The solution is reported on ``n_steps + 1`` equally spaced nodes.  When the
    mean reversion is fast, each reporting step is split into substeps so that
    2 kappa h stays below 1/4, well inside the RK4 stability region.
    """
    if params.p >= 0:
        raise ValueError("p must be negative")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    kappa = params.alpha if kappa is None else kappa
    q, rho = params.q, params.rho
    t = np.linspace(0.0, params.T, n_steps + 1)
    h = params.T / n_steps
    # the linearised C equation has rate ~2 kappa; keep 2 kappa hs <= 1/4
    sub = int(min(MAX_SUBSTEPS, max(1, np.ceil(8 * max(kappa, 0.0) * h))))
    hs = h / sub
    out = np.zeros((n_steps + 1, 3))
    y = np.zeros(3)
    f = lambda z: -_rhs(z, q, rho, kappa, mean, eta)  # d/d(T - t)
    for k in range(n_steps, 0, -1):
        for _ in range(sub):
            k1 = f(y)
            k2 = f(y + 0.5 * hs * k1)
            k3 = f(y + 0.5 * hs * k2)
            k4 = f(y + hs * k3)
            y = y + hs / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(y)) or abs(y[2]) > OVERFLOW_GUARD:
                raise RiccatiBlowUpError(
                    f"Riccati solution blew up at step {k} (t={t[k - 1]:.4g}); "
                    "try a shorter horizon T or more steps")
        out[k - 1] = y
    if params.T == 0:
        out[:] = 0.0
    return RiccatiSolution(t, out[:, 0], out[:, 1], out[:, 2], params.p, rho, kappa, mean, eta)


def value_ko(sol: RiccatiSolution, lam0: float) -> float:
    """Optimal expected utility from unit capital at t = 0."""
    return float(np.exp(sol.A[0] + sol.B[0] * lam0 + 0.5 * sol.C[0] * lam0 ** 2) / sol.p)


def strategy_ko(sol: RiccatiSolution, hedge: bool = True) -> StrategySpec:
    """Optimal feedback proportion; ``hedge=False`` keeps only the myopic part."""
    re = sol.rho * sol.eta if hedge else 0.0
    p = sol.p

    def rule(t, state):
        _, B, C = sol.at(t)
        lam = state["lam"]
        return (lam + re * (B + C * lam)) / (1 - p)

    return StrategySpec(rule, name="kim_omberg" if hedge else "kim_omberg_myopic")


def tilted_weights(xT, u: float, p: float) -> np.ndarray:
    """Density of the tilted measure, U(X_T) / u, per path."""
    if u >= 0:
        raise ValueError(f"value u must be negative for p < 0, got {u}")
    xT = np.asarray(xT, dtype=float)
    return xT ** p / (p * u)


def complete_market_value(mu: float, params: ModelParams) -> float:
    """(1/p) E[Z_T^{-q}]^{1-p} = (1/p) exp(q mu^2 T / 2) for a constant drift."""
    return float(np.exp(0.5 * params.q * mu * mu * params.T) / params.p)


def discrete_deterministic_value(pi: np.ndarray, lam: np.ndarray, p: float, dt: float) -> float:
    """Exact E[U(X_T)] on the grid for deterministic pi and drift.

    log X_T is Gaussian with mean sum (pi lam - pi^2/2) dt and variance
    sum pi^2 dt, so E[X_T^p] / p is closed form.
    """
    pi = np.asarray(pi, dtype=float)[:-1]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), pi.shape if np.ndim(lam) else pi.shape)
    lam = lam[: pi.size]
    m = np.sum(pi * lam - 0.5 * pi * pi) * dt
    v = np.sum(pi * pi) * dt
    return float(np.exp(p * m + 0.5 * p * p * v) / p)
