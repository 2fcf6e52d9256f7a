"""Sampling fBm, the fractional OU drift and its H-derivative on common noise.

Run: python demos/02_paths.py

One NoiseBundle (Brownian increments on a graded negative axis plus [0, T])
drives every H.  That is what makes finite differences in H cheap and
low-variance: the paths for H and H + eps differ only through the kernel.
"""
import numpy as np
from scipy import stats

from hurst_sense.mc import MCEstimate
from hurst_sense.paths import (Grid, dlambda_path, exact_fbm_oracle, fbm_covariance, fbm_path,
                               fou_path, frechet_remainder, sample_noise)

grid = Grid(T=1.0, n_pos=50)
noise = sample_noise(grid, seed=1, path_index=np.arange(20000))

for h in (0.3, 0.7):
    b = fbm_path(noise, h).values
    var = MCEstimate.from_samples(b[:, -1] ** 2, 1)
    cov = MCEstimate.from_samples(b[:, 25] * b[:, -1], 1)
    exact = fbm_covariance([0.5, 1.0], h)[0, 1]
    print(f"H={h}: Var B_1 = {var} (exact 1), Cov(B_.5, B_1) = {cov} (exact {exact:.4f})")
    oracle = exact_fbm_oracle(grid, h, 2, 20000).values[:, -1]
    print(f"       KS p-value against dense Cholesky sampler: "
          f"{stats.ks_2samp(oracle, b[:, -1]).pvalue:.3f}")

# Drift lam^H (fOU, reversion 1, start 0.5) and its derivative at H = 1/2.
lam = fou_path(noise, 0.5, 1.0, 0.5)
d = dlambda_path(noise, 0.5, 1.0)
up = fou_path(noise, 0.52, 1.0, 0.5).values
dn = fou_path(noise, 0.48, 1.0, 0.5).values
fd = (up - dn) / 0.04
print("\nRMS gap between central difference and D lambda:",
      float(np.sqrt(np.mean((fd - d.values) ** 2))))
print("mean lam_T:", lam.values[:, -1].mean())

# beta-norm of the first-order remainder, divided by eps: shrinks with eps.
r = frechet_remainder(Grid(1.0, 100), 0.5, 1.0, 0.5, 4.0, [0.08, 0.04, 0.02], 5000, 3)
for e, x in zip((0.08, 0.04, 0.02), r):
    print(f"eps={e}: ||remainder||/eps = {x}")
