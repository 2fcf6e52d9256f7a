"""Derivatives and expansions of the power-utility value function.

The directional derivative of lam -> u^lam along lam' is

    p u E[(dP~/dP) int lam' dR] = E[X_T^p int lam' dR],

with dP~/dP = U(X_T) / u for the optimal wealth X.  All estimators here use
common random numbers: base and perturbed quantities are evaluated on the
same noise bundle and reduced per path before averaging.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .kim_omberg import (complete_market_value, solve_riccati, strategy_ko,
                         tilted_weights, value_ko)
from .market import (MarketPaths, ModelParams, StrategySpec, _proportions,
                     dvol_process, merton_strategy, myopic_strategy,
                     simulate_market, wealth_from_increments)
from .mc import MCEstimate, run_batches
from .paths import (Grid, NoiseBundle, ProcessPath, dlambda_path, fou_path,
                    norm_beta, sample_noise)

Direction = Callable[[NoiseBundle, MarketPaths], ProcessPath]
DriftGenerator = Callable[[NoiseBundle], ProcessPath]

SUBSTITUTION_NOTE = ("direct values use the H=1/2 optimal proportion process in the "
                     "perturbed market (a lower bound, O(eps^2) below the optimum)")


def _grid(params: ModelParams, grid: Grid | None) -> Grid:
    grid = Grid(params.T) if grid is None else grid
    if abs(grid.T - params.T) > 1e-12:
        raise ValueError("grid horizon differs from params.T")
    return grid


def _base(params: ModelParams, grid: Grid, strategy=None, value=None):
    """Optimal strategy and value of the Markovian base model."""
    if strategy is not None:
        return strategy, value
    if params.model == "constant":
        return merton_strategy(params.mu, params.p), complete_market_value(params.mu, params)
    if params.model == "model1" and params.H == 0.5:
        sol = solve_riccati(params, grid.n_pos)
        return strategy_ko(sol), value_ko(sol, params.x0)
    raise ValueError("no closed-form optimiser for this model; pass strategy= explicitly")


def _wealth(pi: np.ndarray, market: MarketPaths) -> np.ndarray:
    g = market.grid
    dR = np.diff(market.R.values, axis=-1)
    return wealth_from_increments(pi, dR, g.dt)


def _stochastic_integral(x: np.ndarray, dR: np.ndarray) -> np.ndarray:
    return np.sum(x[..., :-1] * dR, axis=-1)


def _check_direction(d: ProcessPath, market: MarketPaths):
    if d.grid != market.grid:
        raise ValueError("direction and base market live on different grids")
    if d.values.ndim > 1 and d.values.shape[0] != market.noise.n_paths:
        raise ValueError("direction was generated for a different number of paths")


def _gateaux_samples(direction: Direction, params: ModelParams, grid: Grid, seed: int,
                     strategy, u, idx) -> dict:
    noise = sample_noise(grid, seed, idx)
    m = simulate_market(params, noise)
    d = direction(noise, m)
    _check_direction(d, m)
    pi = _proportions(strategy, grid.t, m.state())
    X = _wealth(pi, m)
    xT = X[:, -1]
    dR = np.diff(m.R.values, axis=-1)
    dv = np.broadcast_to(d.values, m.R.values.shape)
    integral = _stochastic_integral(dv, dR)
    if u is None:
        g = xT ** params.p * integral
    else:
        g = params.p * u * tilted_weights(xT, u, params.p) * integral
    return {"g": g, "u": xT ** params.p / params.p}


def gateaux_derivative(params: ModelParams, direction: Direction, n_paths: int, seed: int,
                       grid: Grid | None = None, strategy=None, value: float | None = None,
                       workers: int | None = None) -> MCEstimate:
    """Directional derivative of the value function along ``direction``.

    ``direction(noise, market)`` must build lam' from the same noise bundle as
    the base market.  The base optimiser comes from the Riccati solution
    (Model 1 at H=1/2) or the Merton rule (constant drift) unless given.
    """
    grid = _grid(params, grid)
    strategy, u = _base(params, grid, strategy, value)
    res = run_batches(lambda idx: _gateaux_samples(direction, params, grid, seed, strategy, u, idx),
                      n_paths, workers)
    return MCEstimate.from_samples(res["g"], seed)


def constant_direction(c: float = 1.0) -> Direction:
    return lambda noise, m: ProcessPath(np.full(noise.grid.n_pos + 1, float(c)), noise.grid)


def hurst_direction(params: ModelParams, convolution: bool = True) -> Direction:
    """D lam^H for Model 1 (and the constant-drift symmetry case); Model 2 maps it
    through the auxiliary drift."""
    def direction(noise, m):
        dl = dlambda_path(noise, params.H, params.alpha, convolution)
        if params.model == "model2":
            return dvol_process(m.sigma, dl, params.mu)
        return dl
    return direction


def constant_shift_fd(params: ModelParams, c: float = 1.0, n_steps: int = 100,
                      h: float = 0.05) -> float:
    """Central difference of the exact value along a constant drift shift c.

    Model 1 at H=1/2 shifts both the starting drift and the long-run mean, so
    the perturbed drift is lam + c h on every path.  NaN for other models.
    """
    if params.model == "constant":
        up = complete_market_value(params.mu + c * h, params)
        dn = complete_market_value(params.mu - c * h, params)
    elif params.model == "model1" and params.H == 0.5:
        up = value_ko(solve_riccati(params, n_steps, mean=c * h), params.x0 + c * h)
        dn = value_ko(solve_riccati(params, n_steps, mean=-c * h), params.x0 - c * h)
    else:
        return float("nan")
    return (up - dn) / (2 * h)


def hurst_derivative(params: ModelParams, n_paths: int, seed: int, grid: Grid | None = None,
                     strategy=None, value: float | None = None, convolution: bool = True,
                     workers: int | None = None) -> MCEstimate:
    """d u^H / dH at the base H, estimated on common noise."""
    if params.model == "model2" and strategy is None:
        raise ValueError("Model 2 has no closed-form base optimiser; pass strategy=")
    return gateaux_derivative(params, hurst_direction(params, convolution), n_paths, seed,
                              grid, strategy, value, workers)


# --------------------------------------------------------------------------
# First-order expansion in H
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionRow:
    eps: float
    direct: MCEstimate
    expansion: float
    residual: float
    residual_se: float
    step_se: float = float("nan")  # paired SE of the ratio drop from the next larger |eps|

    @property
    def ratio(self) -> float:
        return self.residual / abs(self.eps) if self.eps else 0.0

    @property
    def ratio_se(self) -> float:
        return self.residual_se / abs(self.eps) if self.eps else 0.0


@dataclass(frozen=True)
class ExpansionReport:
    """Direct values against the first-order prediction base + eps * derivative.

    ``base`` is the Monte Carlo value of the base strategy on the same noise
    (the anchor of every residual); ``base_exact`` the Riccati value.
    """

    params: ModelParams
    seed: int
    base: MCEstimate
    base_exact: float
    derivative: MCEstimate
    rows: tuple
    verdict: str = ""
    note: str = SUBSTITUTION_NOTE

    @property
    def eps(self) -> list:
        return [r.eps for r in self.rows]

    def to_csv(self, path):
        p = self.params
        with open(path, "w", newline="") as fh:
            fh.write(f"# H={p.H!r} alpha={p.alpha!r} x0={p.x0!r} rho={p.rho!r} p={p.p!r} "
                     f"T={p.T!r} model={p.model} seed={self.seed} n_paths={self.base.n_paths}\n")
            fh.write(f"# base_mc={self.base.mean!r} base_mc_stderr={self.base.stderr!r} "
                     f"base_riccati={self.base_exact!r}\n")
            fh.write(f"# verdict={self.verdict} note={self.note}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "direct_mean", "direct_stderr", "derivative_mean",
                        "derivative_stderr", "expansion", "residual", "residual_stderr",
                        "ratio", "ratio_stderr", "ratio_step_stderr", "n_paths"])
            for r in self.rows:
                w.writerow([repr(float(r.eps)), repr(r.direct.mean), repr(r.direct.stderr),
                            repr(self.derivative.mean), repr(self.derivative.stderr),
                            repr(float(r.expansion)), repr(float(r.residual)),
                            repr(float(r.residual_se)), repr(float(r.ratio)),
                            repr(float(r.ratio_se)), repr(float(r.step_se)), r.direct.n_paths])


def ratio_test(eps: Sequence[float], ratio: Sequence[float], se: Sequence[float],
               step_se: Sequence[float] | None = None) -> str:
    """Classify a ladder of ratios as 'decreasing', 'inconclusive' or 'fail'.

    Entries are ordered by decreasing |eps|.  Without ``step_se`` two
    neighbours count as decreasing when their 1-SE bands are separated and
    inconclusive when the bands overlap.  With common random numbers the
    ratios share most of their noise, so ``step_se[k]`` (the paired SE of the
    drop into entry k) replaces the two bands.
    """
    order = np.argsort(-np.abs(np.asarray(eps, dtype=float)), kind="stable")
    r = np.asarray(ratio, dtype=float)[order]
    s = np.asarray(se, dtype=float)[order]
    ss = None if step_se is None else np.asarray(step_se, dtype=float)[order]
    verdict = "decreasing"
    for k in range(len(r) - 1):
        drop = r[k] - r[k + 1]
        band = s[k] + s[k + 1] if ss is None or not np.isfinite(ss[k + 1]) else ss[k + 1]
        if drop > band:
            continue
        if drop < -band:
            return "fail"
        verdict = "inconclusive"
    return verdict


def expansion_verdict(report: ExpansionReport) -> str:
    """Ratio test run separately on each sign of eps; the worse verdict wins."""
    rank = {"decreasing": 0, "inconclusive": 1, "fail": 2}
    out = "decreasing"
    for sign in (1, -1):
        rows = [r for r in report.rows if np.sign(r.eps) == sign]
        if len(rows) < 2:
            continue
        v = ratio_test([r.eps for r in rows], [r.ratio for r in rows], [r.ratio_se for r in rows],
                       [r.step_se for r in rows])
        out = max(out, v, key=rank.get)
    return out


def _expansion_samples(params, grid, seed, strategy, eps_list, convolution, idx):
    noise = sample_noise(grid, seed, idx)
    base = simulate_market(params, noise)
    pi = _proportions(strategy, grid.t, base.state())
    p = params.p
    X0 = _wealth(pi, base)[:, -1]
    d = dlambda_path(noise, params.H, params.alpha, convolution)
    dR = np.diff(base.R.values, axis=-1)
    out = {"base": X0 ** p / p, "g": X0 ** p * _stochastic_integral(d.values, dR)}
    for j, e in enumerate(eps_list):
        if e == 0:
            out[f"u{j}"] = out["base"]
            continue
        m = simulate_market(params, noise, H=params.H + e)
        out[f"u{j}"] = _wealth(pi, m)[:, -1] ** p / p
    return out


def _run_expansion(params, eps_list, n_paths, seed, grid, strategy, u_exact, convolution, workers):
    res = run_batches(lambda idx: _expansion_samples(params, grid, seed, strategy, eps_list,
                                                     convolution, idx), n_paths, workers)
    base = MCEstimate.from_samples(res["base"], seed)
    deriv = MCEstimate.from_samples(res["g"], seed)
    # per-path residual / |eps|, signed so its mean is the reported ratio
    z = {}
    for j, e in enumerate(eps_list):
        if e:
            zj = (res[f"u{j}"] - res["base"] - e * res["g"]) / abs(e)
            z[e] = zj if zj.mean() >= 0 else -zj
    step = {}
    for sign in (1, -1):
        ladder = sorted((e for e in z if np.sign(e) == sign), key=abs, reverse=True)
        for big, small in zip(ladder, ladder[1:]):
            step[small] = MCEstimate.from_samples(z[big] - z[small], seed).stderr
    rows = []
    for j, e in enumerate(eps_list):
        direct = MCEstimate.from_samples(res[f"u{j}"], seed)
        r = MCEstimate.from_samples(res[f"u{j}"] - res["base"] - e * res["g"], seed)
        rows.append(ExpansionRow(float(e), direct, base.mean + e * deriv.mean,
                                 abs(r.mean), r.stderr, step.get(e, float("nan"))))
    rep = ExpansionReport(params, seed, base, u_exact, deriv, tuple(rows))
    return ExpansionReport(params, seed, base, u_exact, deriv, tuple(rows), expansion_verdict(rep))


def hurst_slope_fit(params: ModelParams, eps_list: Sequence[float], n_paths: int, seed: int,
                    grid: Grid | None = None, convolution: bool = True,
                    workers: int | None = None):
    """Least-squares slope of the direct values over H + eps, against the derivative.

    Returns (slope, derivative, slope - derivative) as MCEstimates; the slope
    is fitted path by path on common noise so the difference is paired.
    """
    if params.model != "model1" or params.H != 0.5:
        raise ValueError("the slope fit needs the Markovian base: Model 1 at H = 1/2")
    e = np.asarray(sorted(float(x) for x in eps_list))
    if e.size < 2 or np.ptp(e) == 0:
        raise ValueError("need at least two distinct eps values")
    grid = _grid(params, grid)
    strategy, _ = _base(params, grid)
    res = run_batches(lambda idx: _expansion_samples(params, grid, seed, strategy, list(e),
                                                     convolution, idx), n_paths, workers)
    w = (e - e.mean()) / np.sum((e - e.mean()) ** 2)
    slope = sum(w[j] * res[f"u{j}"] for j in range(e.size))
    return (MCEstimate.from_samples(slope, seed), MCEstimate.from_samples(res["g"], seed),
            MCEstimate.from_samples(slope - res["g"], seed))


def hurst_expansion(params: ModelParams, eps_list: Sequence[float], n_paths: int, seed: int,
                    grid: Grid | None = None, convolution: bool = True, escalate: bool = True,
                    workers: int | None = None) -> ExpansionReport:
    """Compare u^{H+eps} with u^H + eps * du/dH for each eps.

    Model 1 at H = 1/2 only.  An inconclusive ratio test is rerun once with
    four times the paths.
    """
    if params.model != "model1" or params.H != 0.5:
        raise ValueError("the expansion needs the Markovian base: Model 1 at H = 1/2")
    eps_list = sorted(float(e) for e in eps_list)
    for e in eps_list:
        if not 0 < params.H + e < 1:
            raise ValueError(f"H + eps = {params.H + e} leaves (0, 1)")
    grid = _grid(params, grid)
    strategy, u = _base(params, grid)
    rep = _run_expansion(params, eps_list, n_paths, seed, grid, strategy, u, convolution, workers)
    if escalate and rep.verdict == "inconclusive":
        rep = _run_expansion(params, eps_list, 4 * n_paths, seed, grid, strategy, u,
                             convolution, workers)
    return rep


# --------------------------------------------------------------------------
# Strong mean reversion
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MeanRevRow:
    eps: float
    gap: MCEstimate
    gap_riccati: float
    best: str
    step_se: float = float("nan")

    def scaled(self, delta: float) -> float:
        return self.gap.mean / self.eps ** delta

    def scaled_se(self, delta: float) -> float:
        return self.gap.stderr / self.eps ** delta


@dataclass(frozen=True)
class MeanRevTable:
    """u^eps - u^0 per eps; gaps are lower bounds (best of the candidate rules)."""

    mu: float
    delta: float
    params: ModelParams
    seed: int
    u0: float
    rows: tuple

    def verdict(self) -> str:
        return ratio_test([r.eps for r in self.rows], [r.scaled(self.delta) for r in self.rows],
                          [r.scaled_se(self.delta) for r in self.rows],
                          [r.step_se for r in self.rows])

    def to_csv(self, path):
        p = self.params
        with open(path, "w", newline="") as fh:
            fh.write(f"# mu={self.mu!r} delta={self.delta!r} rho={p.rho!r} p={p.p!r} T={p.T!r} "
                     f"seed={self.seed} u0={self.u0!r} gap=lower_bound\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "gap_mean", "gap_stderr", "n_paths", "gap_scaled",
                        "gap_scaled_stderr", "gap_scaled_step_stderr", "gap_riccati",
                        "best_candidate"])
            for r in self.rows:
                w.writerow([repr(r.eps), repr(r.gap.mean), repr(r.gap.stderr), r.gap.n_paths,
                            repr(r.scaled(self.delta)), repr(r.scaled_se(self.delta)),
                            repr(r.step_se), repr(r.gap_riccati), r.best])


def fast_ou_drift(noise: NoiseBundle, mu: float, eps: float) -> ProcessPath:
    """mu + nu with d nu = -nu/eps dt + dW, nu_0 = 0, sampled exactly on the grid."""
    g = noise.grid
    a = np.exp(-g.dt / eps)
    scale = np.sqrt(-np.expm1(-2 * g.dt / eps) * eps / (2 * g.dt))
    dW = noise.dW_pos
    nu = np.zeros((noise.n_paths, g.n_pos + 1))
    for k in range(g.n_pos):
        nu[:, k + 1] = a * nu[:, k] + scale * dW[:, k]
    return ProcessPath(mu + nu, g)


MYOPIC_SCALES = (0.5, 0.75, 1.0)


def _meanrev_candidates(mu, eps, params, grid):
    cands = {"merton": merton_strategy(mu, params.p)}
    for c in MYOPIC_SCALES:
        cands[f"myopic{c:g}"] = myopic_strategy(params.p, c)
    sol = solve_riccati(params.with_(x0=mu), grid.n_pos, mean=mu, kappa=1.0 / eps)
    cands["riccati"] = strategy_ko(sol)
    return cands, value_ko(sol, mu)


def meanrev_gap(mu: float, eps_list: Sequence[float], delta: float, params: ModelParams,
                n_paths: int, seed: int, grid: Grid | None = None,
                workers: int | None = None) -> MeanRevTable:
    """u^eps - u^0 for the drift mu + nu^eps with reversion speed 1/eps.

    u^0 is the constant-drift value.  Each candidate rule runs on the same
    noise as the Merton rule in the mu-market, whose expected utility is
    exactly u^0 on the grid, so the gap is the mean of a per-path difference.
    """
    if not 0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    for e in eps_list:
        if e <= 0:
            raise ValueError(f"eps must be positive, got {e}")
    grid = _grid(params, grid)
    u0 = complete_market_value(mu, params)
    merton = merton_strategy(mu, params.p)
    rows = []
    prev = None
    for e in sorted((float(x) for x in eps_list), reverse=True):
        cands, exact = _meanrev_candidates(mu, e, params, grid)

        def run(idx, cands=cands, e=e):
            noise = sample_noise(grid, seed, idx)
            lam = fast_ou_drift(noise, mu, e)
            dM = params.rho * noise.dW_pos + np.sqrt(1 - params.rho ** 2) * noise.dB
            p = params.p
            pi_m = merton.evaluate(grid.t, {"lam": np.full_like(lam.values, mu)})
            ref = wealth_from_increments(pi_m, mu * grid.dt + dM, grid.dt)[:, -1] ** p / p
            dR = lam.values[:, :-1] * grid.dt + dM
            R = np.zeros_like(lam.values)
            np.cumsum(dR, axis=1, out=R[:, 1:])
            state = {"lam": lam.values, "R": R}
            out = {}
            for name, s in cands.items():
                pi = s.evaluate(grid.t, state)
                out[name] = wealth_from_increments(pi, dR, grid.dt)[:, -1] ** p / p - ref
            return out

        res = run_batches(run, n_paths, workers)
        ests = {k: MCEstimate.from_samples(v, seed) for k, v in res.items()}
        best = max(ests, key=lambda k: ests[k].mean)
        scaled = res[best] / e ** delta
        step = float("nan") if prev is None else MCEstimate.from_samples(prev - scaled, seed).stderr
        prev = scaled
        rows.append(MeanRevRow(e, ests[best], exact - u0, best, step))
    return MeanRevTable(mu, delta, params, seed, u0, tuple(rows))


# --------------------------------------------------------------------------
# Near-optimality bound for a strategy used in a perturbed market
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    """Estimated bound on u^{lam'} - E U(X^pi under lam') and the gap itself.

    bound = sqrt(C2) sqrt(K) E^{1/2}[(int |pi||lam' - lam| dt)^2] + C1 ||lam' - lam||_beta,
    where the first term bounds |E U(X^pi, lam') - E U(X^pi, lam)| by
    Cauchy-Schwarz and the second is the two-point value difference.
    """

    bound: MCEstimate
    gap: MCEstimate
    quadratic: MCEstimate
    frechet: float
    c1: float
    c2: MCEstimate
    k: float
    norm: MCEstimate
    applicable: bool
    flags: tuple = field(default=())

    def __iter__(self):
        yield self.bound
        yield self.gap

    def holds(self, k_se: float = 3.0) -> bool:
        return self.bound.mean >= self.gap.mean - k_se * np.hypot(self.bound.stderr, self.gap.stderr)


def constant_drift(value: float) -> DriftGenerator:
    return lambda noise: ProcessPath(np.full((noise.n_paths, noise.grid.n_pos + 1), float(value)),
                                     noise.grid)


def _drift_market(lam: ProcessPath, noise: NoiseBundle, rho: float):
    g = noise.grid
    dM = rho * noise.dW_pos + np.sqrt(1 - rho * rho) * noise.dB
    lv = np.broadcast_to(lam.values, (noise.n_paths, g.n_pos + 1))
    dR = lv[:, :-1] * g.dt + dM
    R = np.zeros_like(lv)
    np.cumsum(dR, axis=1, out=R[:, 1:])
    return lv, dM, dR, R


def suboptimality_bound(strategy, lam: DriftGenerator, lam_alt: DriftGenerator,
                        params: ModelParams, n_paths: int, seed: int, grid: Grid | None = None,
                        u_base: float | None = None, u_alt: float | None = None,
                        alt_strategy=None, beta: float | None = None,
                        k_ceiling: float = 1e6, workers: int | None = None) -> BoundReport:
    """Bound the loss from using ``strategy`` (tuned to ``lam``) in the ``lam_alt`` market.

    ``u_base`` and ``u_alt`` are the best available values of the two markets;
    missing ones are estimated by Monte Carlo under ``strategy`` and
    ``alt_strategy`` respectively.  A given ``u_base`` is taken to be the
    value of ``strategy`` itself (it is meant to be optimal for ``lam``) and
    serves as a control variate for the gap.
    """
    grid = _grid(params, grid)
    p = params.p
    beta = 2 * (1 - p) if beta is None else beta
    if beta <= 1 - p:
        raise ValueError(f"beta must exceed 1 - p = {1 - p}, got {beta}")
    if u_alt is None and alt_strategy is None:
        raise ValueError("give u_alt or alt_strategy for the perturbed market's value")

    def run(idx):
        noise = sample_noise(grid, seed, idx)
        lv, dM, dR, R = _drift_market(lam(noise), noise, params.rho)
        la, _, dRa, Ra = _drift_market(lam_alt(noise), noise, params.rho)
        pi = _proportions(strategy, grid.t, {"lam": lv, "R": R})
        pl = pi[:, :-1]
        dt = grid.dt
        x_base = wealth_from_increments(pi, dR, dt)[:, -1]
        x_alt = wealth_from_increments(pi, dRa, dt)[:, -1]
        gap_int = np.sum(np.abs(pl) * np.abs(la[:, :-1] - lv[:, :-1]), axis=1) * dt
        with np.errstate(over="ignore"):
            c2 = np.exp(2 * p * np.sum(pl * dM, axis=1) + 2 * p * np.sum(pl * lv[:, :-1], axis=1) * dt
                        - p * np.sum(pl * pl, axis=1) * dt)
            k = np.exp(2 * abs(p) * gap_int)
        out = {"ub": x_base ** p / p, "ua": x_alt ** p / p, "c2": c2, "k": k, "q2": gap_int ** 2}
        if alt_strategy is not None and u_alt is None:
            pa = _proportions(alt_strategy, grid.t, {"lam": la, "R": Ra})
            out["best_alt"] = wealth_from_increments(pa, dRa, dt)[:, -1] ** p / p
        return out

    res = run_batches(run, n_paths, workers)
    flags = []
    ub = MCEstimate.from_samples(res["ub"], seed) if u_base is None else None
    u_b = ub.mean if ub is not None else float(u_base)
    ua_pi = res["ua"]
    if u_alt is None:
        gap = MCEstimate.from_samples(res["best_alt"] - ua_pi, seed)
        u_a = float(np.mean(res["best_alt"]))
        flags.append("u_alt estimated under alt_strategy (lower bound)")
    elif u_base is not None:
        # common-noise control: E U(X^pi, lam) = u_base when pi is optimal for lam
        u_a = float(u_alt)
        gap = MCEstimate.from_samples(u_a - u_b - (ua_pi - res["ub"]), seed)
    else:
        u_a = float(u_alt)
        g = MCEstimate.from_samples(ua_pi, seed)
        gap = MCEstimate(u_a - g.mean, g.stderr, g.n_paths, seed)

    c2 = MCEstimate.from_samples(res["c2"], seed)
    k = float(np.max(res["k"]))
    q2 = MCEstimate.from_samples(res["q2"], seed)
    applicable = bool(np.isfinite(c2.mean) and np.isfinite(k) and k <= k_ceiling)
    if not np.isfinite(c2.mean):
        flags.append("C2 sample not finite")
    if not (np.isfinite(k) and k <= k_ceiling):
        flags.append(f"K={k:.3g} exceeds ceiling {k_ceiling:g}")

    if applicable and q2.mean > 0:
        sq = np.sqrt(c2.mean * k * q2.mean)
        # delta method on sqrt(C2 * Q2)
        se = 0.5 * sq * np.hypot(c2.stderr / c2.mean, q2.stderr / q2.mean)
        quad = MCEstimate(float(sq), float(se), n_paths, seed)
    else:
        quad = MCEstimate(0.0 if applicable else float("inf"), 0.0, n_paths, seed)

    def diff_sampler(idx):
        noise = sample_noise(grid, seed, idx)
        a = np.broadcast_to(lam_alt(noise).values, (noise.n_paths, grid.n_pos + 1))
        b = np.broadcast_to(lam(noise).values, (noise.n_paths, grid.n_pos + 1))
        return ProcessPath(a - b, grid)

    norm = norm_beta(diff_sampler, beta, n_paths, p=p, seed=seed, workers=workers)
    frechet = abs(u_a - u_b)
    c1 = frechet / norm.mean if norm.mean > 0 else 0.0
    bound = MCEstimate(quad.mean + frechet, float(np.hypot(quad.stderr, ub.stderr if ub else 0.0)),
                       n_paths, seed)
    return BoundReport(bound, gap, quad, frechet, c1, c2, k, norm, applicable, tuple(flags))
