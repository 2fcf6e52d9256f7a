"""The moving-average kernel behind fractional Brownian motion.

Run: python demos/01_kernel.py

B^H_t = c(H) int K(t, s) dW_s with K(t, s) = (t - s)_+^{H-1/2} - (-s)_+^{H-1/2}.
The normalising constant makes Var B^H_t = t^{2H}; we check that by
quadrature and then look at how the H-derivative of the kernel behaves.
"""
from hurst_sense import fbm_kernel as kn

print("H     t     int K^2 ds      t^{2H}        residual")
for h in (0.1, 0.3, 0.5, 0.7, 0.9):
    for t in (0.5, 2.0):
        v = kn.kernel_l2(h, t)
        print(f"{h:.1f}  {t:4.1f}  {v:.10f}  {t ** (2 * h):.10f}  {v - t ** (2 * h):+.1e}")

# At H = 1/2 the kernel is an indicator and c(1/2) = 1.
print("\nc(0.5) =", kn.c_norm(0.5), " K(0.5; 1, 0.3) =", kn.kernel(0.5, 1.0, 0.3))

# The difference quotient (K^{H+eps} - K^H)/eps converges to dK/dH in L2;
# the error roughly halves (or better) with eps.
print("\nL2 error of the difference quotient at H=0.5, t=1:")
for e in (0.08, 0.04, 0.02, 0.01):
    print(f"  eps={e:<5} error={kn.dq_l2_error(0.5, 1.0, e):.5f}")
