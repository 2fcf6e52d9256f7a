"""The Markovian base case: Riccati value versus Monte Carlo.

Run: python demos/03_kim_omberg.py

At H = 1/2 the drift is an OU process and the power-utility problem is
solved by a Riccati system.  The ODE coefficients are not taken on trust:
the value is checked against a Monte Carlo run of the feedback strategy.
"""
from hurst_sense import (ModelParams, complete_market_value, estimate_value, merton_strategy,
                         solve_riccati, strategy_ko, value_ko)

for rho, alpha in ((0.25, 0.5), (0.5, 1.0), (0.75, 2.0)):
    P = ModelParams(rho=rho, alpha=alpha)
    sol = solve_riccati(P, n_steps=100)
    mc = estimate_value(strategy_ko(sol), P, 40000, seed=3)
    print(f"rho={rho} alpha={alpha}: Riccati {value_ko(sol, P.x0):.5f}  MC {mc}")

# Switching off the drift noise collapses the problem to Merton's.
P = ModelParams(model="constant", mu=0.5)
frozen = solve_riccati(ModelParams(), 100, mean=0.0, eta=0.0, kappa=0.0)
print("\nMerton closed form:", complete_market_value(0.5, P))
print("frozen Riccati:    ", value_ko(frozen, 0.5))
print("MC, Merton rule:   ", estimate_value(merton_strategy(0.5, P.p), P, 40000, seed=4))
