"""Directional derivative of the value function in the drift.

Run: python demos/04_gateaux.py

Under the utility-tilted measure the derivative along lam' is a plain
expectation of int lam' dR.  For a constant direction we can compare with
a central difference of exact (Riccati) values.
"""
from hurst_sense import (ModelParams, constant_direction, constant_shift_fd,
                         gateaux_derivative, hurst_derivative)

P = ModelParams()
for c in (1.0, -0.5):
    est = gateaux_derivative(P, constant_direction(c), 40000, seed=5)
    print(f"direction {c:+}: estimator {est}   finite difference {constant_shift_fd(P, c):.5f}")

# The H-direction: lam' = D lambda^{1/2}.  The literal variant drops the
# convolution term of the fOU derivative, for comparison.
print("\nd u / dH at H=1/2:", hurst_derivative(P, 40000, seed=6))
print("without the convolution term:", hurst_derivative(P, 40000, seed=6, convolution=False))
