"""How much does a strategy lose when the drift is misspecified?

Run: python demos/07_bound.py

The Merton rule for lam = 0.5 is used in a market whose drift is 0.6.  The
estimated bound (Cauchy-Schwarz term plus the value difference) must sit
above the actual loss, which here is known in closed form.
"""
import numpy as np

from hurst_sense import (ModelParams, complete_market_value, constant_drift, merton_strategy,
                         suboptimality_bound)

P = ModelParams(model="constant", mu=0.5)
rep = suboptimality_bound(merton_strategy(0.5, P.p), constant_drift(0.5), constant_drift(0.6),
                          P, 40000, seed=9, u_base=complete_market_value(0.5, P),
                          u_alt=complete_market_value(0.6, P))
pi, lam, p = 0.25, 0.6, P.p
exact = complete_market_value(0.6, P) - np.exp(p * (pi * lam - pi * pi / 2) + p * p * pi * pi / 2) / p
print(f"gap   {rep.gap}   (exact {exact:.6f})")
print(f"bound {rep.bound}")
print(f"  quadratic term {rep.quadratic}, C2 {rep.c2}, K {rep.k:.4f}")
print(f"  value-difference term {rep.frechet:.5f} = C1 {rep.c1:.4f} x norm {rep.norm}")
print("holds:", rep.holds(), " applicable:", rep.applicable, rep.flags)
