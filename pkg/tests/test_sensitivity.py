import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hurst_sense.kim_omberg import complete_market_value
from hurst_sense.market import ModelParams, constant_strategy, merton_strategy
from hurst_sense.mc import MCEstimate, joint_se
from hurst_sense.paths import Grid, ProcessPath
from hurst_sense.sensitivity import (ExpansionReport, constant_direction, constant_drift,
                                     constant_shift_fd, gateaux_derivative, hurst_derivative,
                                     hurst_direction, hurst_expansion, hurst_slope_fit,
                                     meanrev_gap, ratio_test, suboptimality_bound)

BASE = ModelParams()  # alpha=1, rho=0.5, p=-1, T=1, lambda0=0.5
G50 = Grid(1.0, 50)
CONST = ModelParams(model="constant", mu=0.5)


class TestGateaux:
    def test_zero_direction_is_exactly_zero(self):
        e = gateaux_derivative(BASE, constant_direction(0.0), 500, 1, grid=G50)
        assert e.mean == 0.0 and e.stderr == 0.0

    @given(st.floats(-3.0, 3.0).filter(lambda c: abs(c) > 1e-3))
    @settings(max_examples=8, deadline=None)
    def test_linear_under_common_noise(self, c):
        d = hurst_direction(BASE)
        scaled = lambda noise, m: ProcessPath(c * d(noise, m).values, noise.grid)
        a = gateaux_derivative(BASE, d, 300, 2, grid=G50)
        b = gateaux_derivative(BASE, scaled, 300, 2, grid=G50)
        assert abs(b.mean - c * a.mean) <= 1e-12 * max(1.0, abs(b.mean))

    def test_merton_oracle(self):
        e = gateaux_derivative(CONST, constant_direction(1.0), 40000, 3, grid=G50)
        assert e.within(constant_shift_fd(CONST), 3)

    def test_constant_direction_matches_riccati_fd(self):
        e = gateaux_derivative(BASE, constant_direction(1.0), 40000, 4)
        assert e.within(constant_shift_fd(BASE), 3)

    def test_tilted_and_plain_forms_agree(self):
        # with u given the weights are X^p / (p u); otherwise raw X^p
        from hurst_sense.sensitivity import _base
        s, u = _base(CONST, G50)
        a = gateaux_derivative(CONST, constant_direction(1.0), 2000, 5, grid=G50)
        b = gateaux_derivative(CONST, constant_direction(1.0), 2000, 5, grid=G50,
                               strategy=s, value=None)
        assert abs(a.mean - b.mean) < 1e-12

    def test_grid_mismatch(self):
        wrong = lambda noise, m: ProcessPath(np.zeros(21), Grid(1.0, 20))
        with pytest.raises(ValueError, match="grids"):
            gateaux_derivative(BASE, wrong, 10, 0, grid=G50)

    def test_path_count_mismatch(self):
        wrong = lambda noise, m: ProcessPath(np.zeros((noise.n_paths + 1, 51)), G50)
        with pytest.raises(ValueError, match="number of paths"):
            gateaux_derivative(BASE, wrong, 10, 0, grid=G50)

    def test_no_closed_form_base(self):
        with pytest.raises(ValueError, match="strategy="):
            gateaux_derivative(BASE.with_(H=0.6), constant_direction(), 10, 0, grid=G50)


class TestHurstDerivative:
    def test_symmetry_oracle(self):
        # R's noise is (almost) independent of W, which drives a centred D lambda
        P = ModelParams(model="constant", mu=0.5, rho=1e-6, alpha=0.0)
        e = hurst_derivative(P, 20000, 6, grid=G50)
        assert e.within(0.0, 3)

    def test_regression_slope_agrees(self):
        slope, deriv, diff = hurst_slope_fit(BASE, [-0.04, -0.02, 0.02, 0.04], 40000, 7)
        assert abs(diff.mean) <= 3 * diff.stderr
        assert np.sign(slope.mean) == np.sign(deriv.mean)

    def test_stderr_halves_with_four_times_paths(self):
        a = hurst_derivative(BASE, 8192, 8, grid=G50)
        b = hurst_derivative(BASE, 32768, 8, grid=G50)
        assert 0.8 * 0.5 <= b.stderr / a.stderr <= 1.2 * 0.5

    def test_doubling_paths_shrinks_by_root_two(self):
        a = hurst_derivative(BASE, 8192, 9, grid=G50)
        b = hurst_derivative(BASE, 16384, 9, grid=G50)
        assert abs(b.stderr / a.stderr - 2 ** -0.5) <= 0.2 * 2 ** -0.5

    def test_model2_needs_strategy(self):
        P = ModelParams(model="model2", x0=0.2)
        with pytest.raises(ValueError, match="strategy"):
            hurst_derivative(P, 10, 0, grid=G50)

    def test_model2_external_strategy(self):
        P = ModelParams(model="model2", x0=0.2)
        e = hurst_derivative(P, 2000, 10, grid=G50, strategy=constant_strategy(0.3))
        assert np.isfinite(e.mean) and e.stderr > 0
        zero = hurst_derivative(P, 200, 10, grid=G50, strategy=constant_strategy(0.0))
        # zero wealth exposure: X = 1, estimator is E[int D(vol) dR] which is still random
        assert np.isfinite(zero.mean)


class TestRatioTest:
    def test_separated_decreasing(self):
        assert ratio_test([0.08, 0.04, 0.02], [0.3, 0.2, 0.1], [0.01] * 3) == "decreasing"

    def test_overlap_is_inconclusive(self):
        assert ratio_test([0.08, 0.04, 0.02], [0.3, 0.29, 0.1], [0.01] * 3) == "inconclusive"

    def test_clear_increase_fails(self):
        assert ratio_test([0.08, 0.04, 0.02], [0.1, 0.2, 0.3], [0.01] * 3) == "fail"

    def test_order_by_magnitude(self):
        assert ratio_test([0.02, 0.08, 0.04], [0.1, 0.3, 0.2], [0.01] * 3) == "decreasing"

    def test_paired_se_replaces_bands(self):
        r, s = [0.3, 0.29, 0.28], [0.05] * 3
        assert ratio_test([0.08, 0.04, 0.02], r, s) == "inconclusive"
        assert ratio_test([0.08, 0.04, 0.02], r, s, [np.nan, 1e-3, 1e-3]) == "decreasing"


@pytest.fixture(scope="module")
def rep():
    return hurst_expansion(BASE, [-0.08, -0.04, 0.0, 0.04, 0.08], 8000, 11, grid=G50,
                           escalate=False)


class TestExpansion:
    def test_zero_row_has_zero_residual(self, rep):
        row = rep.rows[rep.eps.index(0.0)]
        assert row.residual == 0.0 and row.residual_se == 0.0
        assert row.direct.mean == rep.base.mean

    def test_sorted_and_consistent(self, rep):
        assert rep.eps == sorted(rep.eps)
        for r in rep.rows:
            assert r.expansion == pytest.approx(rep.base.mean + r.eps * rep.derivative.mean)
        assert rep.verdict in ("decreasing", "inconclusive", "fail")
        assert "lower bound" in rep.note

    def test_base_matches_riccati(self, rep):
        assert rep.base.within(rep.base_exact, 3, extra=2e-3)

    def test_csv(self, rep, tmp_path):
        f = tmp_path / "e.csv"
        rep.to_csv(f)
        lines = f.read_text().splitlines()
        assert lines[0].startswith("# H=0.5") and "seed=11" in lines[0]
        header = lines[3].split(",")
        assert header[:3] == ["eps", "direct_mean", "direct_stderr"] and header[-1] == "n_paths"
        assert len(lines) == 4 + len(rep.rows)

    def test_ratio_decreases_one_sided(self):
        rep = hurst_expansion(BASE, [0.08, 0.04, 0.02], 40000, 7)
        assert rep.verdict == "decreasing"

    @pytest.mark.parametrize("kw", [dict(H=0.6), dict(model="constant")])
    def test_requires_markov_base(self, kw):
        with pytest.raises(ValueError):
            hurst_expansion(BASE.with_(**kw), [0.02], 10, 0)

    def test_eps_range(self):
        with pytest.raises(ValueError, match="leaves"):
            hurst_expansion(BASE, [0.6], 10, 0)

    def test_escalation_on_inconclusive(self, monkeypatch):
        import hurst_sense.sensitivity as S
        seen = []
        real = S._run_expansion

        def spy(params, eps, n, *a):
            seen.append(n)
            rep = real(params, eps, n, *a)
            return ExpansionReport(rep.params, rep.seed, rep.base, rep.base_exact,
                                   rep.derivative, rep.rows, "inconclusive")

        monkeypatch.setattr(S, "_run_expansion", spy)
        rep = S.hurst_expansion(BASE, [0.04, 0.02], 500, 0, grid=G50)
        assert seen == [500, 2000] and rep.verdict == "inconclusive"


class TestMeanRev:
    def test_zero_drift_benchmark(self):
        tab = meanrev_gap(0.0, [0.2, 0.05], 0.4, BASE, 5000, 12, grid=G50)
        assert tab.u0 == 1.0 / BASE.p
        for r in tab.rows:
            assert r.gap.mean >= -3 * r.gap.stderr

    def test_vanishing_eps(self):
        tab = meanrev_gap(0.5, [1e-4], 0.4, BASE, 20000, 13, grid=G50)
        assert tab.rows[0].gap.within(0.0, 3)

    def test_riccati_gap_column_tends_to_zero(self):
        tab = meanrev_gap(0.5, [0.4, 0.1, 0.02], 0.4, BASE, 200, 14, grid=G50)
        g = [r.gap_riccati for r in tab.rows]
        assert g[0] > g[1] > g[2] > 0

    def test_table_csv_and_order(self, tmp_path):
        tab = meanrev_gap(0.5, [0.05, 0.4, 0.1], 0.3, BASE, 500, 15, grid=G50)
        assert [r.eps for r in tab.rows] == [0.4, 0.1, 0.05]
        f = tmp_path / "m.csv"
        tab.to_csv(f)
        lines = f.read_text().splitlines()
        assert "gap=lower_bound" in lines[0]
        assert lines[1].startswith("eps,gap_mean,gap_stderr,n_paths,gap_scaled")

    @pytest.mark.parametrize("args", [dict(delta=0.5), dict(delta=0.0), dict(eps=[-0.1])])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            meanrev_gap(0.5, args.get("eps", [0.1]), args.get("delta", 0.4), BASE, 10, 0)


class TestBound:
    P = CONST.with_(mu=0.5)

    def _run(self, lam, alt, strategy=None, n=4000, **kw):
        s = merton_strategy(lam, -1.0) if strategy is None else strategy
        return suboptimality_bound(s, constant_drift(lam), constant_drift(alt), self.P, n, 16,
                                   grid=G50, u_base=complete_market_value(lam, self.P),
                                   u_alt=complete_market_value(alt, self.P), **kw)

    def test_identical_drifts(self):
        r = self._run(0.5, 0.5)
        assert r.quadratic.mean == 0.0 and r.frechet == 0.0
        assert r.gap.within(0.0, 3)
        assert r.norm.mean == 0.0

    def test_zero_strategy_quadratic_term(self):
        r = self._run(0.5, 0.6, strategy=constant_strategy(0.0))
        assert r.quadratic.mean == 0.0

    def test_constant_pair(self):
        r = self._run(0.5, 0.6, n=20000)
        bound, gap = r
        assert r.applicable and r.holds()
        assert bound.mean > 0 and gap.mean > 0
        # exact gap of a constant proportion in a constant market
        pi, lam, p = 0.25, 0.6, -1.0
        x = np.exp(p * (pi * lam - 0.5 * pi * pi) + 0.5 * p * p * pi * pi)
        exact = complete_market_value(0.6, self.P) - x / p
        assert gap.within(exact, 3, extra=1e-4)
        assert r.c2.mean > 0 and r.k >= 1.0

    def test_k_ceiling_flags(self):
        r = self._run(0.5, 0.6, k_ceiling=1.0)
        assert not r.applicable and any("ceiling" in f for f in r.flags)
        assert r.quadratic.mean == float("inf")

    def test_beta_constraint(self):
        with pytest.raises(ValueError, match="1 - p"):
            self._run(0.5, 0.6, beta=2.0)

    def test_needs_alt_value(self):
        with pytest.raises(ValueError):
            suboptimality_bound(merton_strategy(0.5, -1), constant_drift(0.5), constant_drift(0.6),
                                self.P, 10, 0, grid=G50)

    def test_alt_strategy_estimate(self):
        r = suboptimality_bound(merton_strategy(0.5, -1), constant_drift(0.5), constant_drift(0.6),
                                self.P, 4000, 17, grid=G50, alt_strategy=merton_strategy(0.6, -1))
        assert any("lower bound" in f for f in r.flags)
        assert r.holds()


def test_joint_se_helper():
    a = MCEstimate(0.0, 3.0, 10, 0)
    b = MCEstimate(0.0, 4.0, 10, 1)
    assert joint_se(a, b) == 5.0
