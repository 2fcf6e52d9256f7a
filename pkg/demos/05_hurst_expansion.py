"""First-order expansion of the value in H around 1/2.

Run: python demos/05_hurst_expansion.py   (about 10 s)

Direct values at H = 1/2 + eps use the base-optimal strategy in the
perturbed market, all on one noise bundle.  If the derivative is right the
residual |u(eps) - u(0) - eps u'| is o(eps): residual/eps must fall as eps does.
"""
from hurst_sense import ModelParams, hurst_expansion, hurst_slope_fit

P = ModelParams()
rep = hurst_expansion(P, [-0.08, -0.04, -0.02, 0.0, 0.02, 0.04, 0.08], 100000, seed=7)
print(f"base (MC) {rep.base}   base (Riccati) {rep.base_exact:.6f}")
print(f"derivative {rep.derivative}\n")
print("  eps     direct        residual/eps   paired step SE")
for r in rep.rows:
    print(f"{r.eps:+.2f}  {r.direct.mean:.6f}   {r.ratio:.5f}        {r.step_se:.1e}")
print("\nverdict:", rep.verdict)
print("note:", rep.note)

slope, deriv, diff = hurst_slope_fit(P, [-0.04, -0.02, 0.02, 0.04], 40000, seed=8)
print(f"\nregression slope {slope} vs derivative {deriv}: difference {diff}")
