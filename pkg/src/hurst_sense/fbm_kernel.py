"""Mandelbrot-van Ness kernel of fractional Brownian motion.

Special functions and quadratures for

    K^H(t, s) = C(H) ((t - s)_+^{H-1/2} - (-s)_+^{H-1/2}),

its derivative in the Hurst index, the normalisation integrals C1/C2 and
the exact cell averages used by the path simulator.

Conventions: x_+ = max(x, 0), 0^0 = 0 and 0 * ln 0 = 0, so a term whose
plus-part vanishes contributes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate
from scipy.special import digamma, gammaln


class SingularPointError(ValueError):
    """Raised when the log-singular derivative kernel is evaluated at s=0 or s=t."""


@dataclass(frozen=True)
class HurstParam:
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 < v < 1.0):
            raise ValueError(f"Hurst parameter must lie in (0, 1), got {v}")
        object.__setattr__(self, "value", v)

    @property
    def is_markov(self) -> bool:
        """True exactly at H = 1/2, where the kernel is an indicator."""
        return self.value == 0.5

    def __float__(self):
        return self.value


HurstLike = Union[float, HurstParam]


def hurst_value(H: HurstLike) -> float:
    return H.value if isinstance(H, HurstParam) else HurstParam(H).value


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for the real-line quadratures.

    ``s_cut`` is measured in units of the time argument ``t``: the finite
    part of the negative axis is ``[-s_cut * t, 0]``.  The remaining tail
    is integrated on the mapped infinite interval, and its analytic bound
    is reported next to the QUADPACK error estimate.
    """

    rel_tol: float = 1e-11
    abs_tol: float = 1e-13
    s_cut: float = 50.0
    max_subdivisions: int = 400

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.s_cut <= 0:
            raise ValueError("s_cut must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUAD = QuadratureSpec()


# --------------------------------------------------------------------------
# normalising constant
# --------------------------------------------------------------------------

def c_norm(H: HurstLike) -> float:
    """C(H) = sqrt(2H sin(pi H) Gamma(2H)) / Gamma(H + 1/2)."""
    h = hurst_value(H)
    log_c = 0.5 * (np.log(2 * h) + np.log(np.sin(np.pi * h)) + gammaln(2 * h)) - gammaln(h + 0.5)
    return float(np.exp(log_c))


def dc_norm(H: HurstLike) -> float:
    """dC/dH from the logarithmic derivative (digamma form)."""
    h = hurst_value(H)
    dlog = 0.5 * (1.0 / h + np.pi / np.tan(np.pi * h) + 2.0 * digamma(2 * h)) - digamma(h + 0.5)
    return c_norm(h) * float(dlog)


def c_norm_integral(H: HurstLike, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """C(H) from its defining integral; an independent check on :func:`c_norm`."""
    h = hurst_value(H)
    a = h - 0.5
    val, _ = _half_line(lambda s: ((1 + s) ** a - s ** a) ** 2, quad)
    return float((val + 1.0 / (2 * h)) ** -0.5)


# --------------------------------------------------------------------------
# pointwise kernels
# --------------------------------------------------------------------------

def _plus_pow(x, a):
    x = np.asarray(x, dtype=float)
    pos = x > 0
    out = np.zeros_like(x)
    out[pos] = x[pos] ** a
    return out


def _plus_pow_log(x, a):
    x = np.asarray(x, dtype=float)
    pos = x > 0
    out = np.zeros_like(x)
    out[pos] = x[pos] ** a * np.log(x[pos])
    return out


def kernel(H: HurstLike, t: float, s):
    """K^H(t, s); vectorised over ``s``."""
    h = hurst_value(H)
    if t < 0:
        raise ValueError("t must be non-negative")
    s = np.asarray(s, dtype=float)
    a = h - 0.5
    out = c_norm(h) * (_plus_pow(t - s, a) - _plus_pow(-s, a))
    return out if out.ndim else float(out)


def dkernel(H: HurstLike, t: float, s):
    """Derivative of K^H(t, s) with respect to H; vectorised over ``s``."""
    h = hurst_value(H)
    if t < 0:
        raise ValueError("t must be non-negative")
    s = np.asarray(s, dtype=float)
    if t > 0 and np.any((s == t) | (s == 0.0)):
        raise SingularPointError("dkernel is log-singular at s = 0 and s = t")
    a = h - 0.5
    base = _plus_pow(t - s, a) - _plus_pow(-s, a)
    logs = _plus_pow_log(t - s, a) - _plus_pow_log(-s, a)
    out = dc_norm(h) * base + c_norm(h) * logs
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# quadrature on the real line
# --------------------------------------------------------------------------

def _quad(f, lo, hi, quad):
    # full_output keeps QUADPACK roundoff notices out of the warning stream;
    # the error estimate is returned either way
    val, err, *_ = integrate.quad(f, lo, hi, epsabs=quad.abs_tol, epsrel=quad.rel_tol,
                                  limit=quad.max_subdivisions, full_output=1)
    return val, err


def _half_line(g: Callable[[float], float], quad: QuadratureSpec, scale: float = 1.0):
    """Integrate g over (0, inf), splitting at ``scale`` and ``s_cut * scale``."""
    cut = quad.s_cut * scale
    pieces = [(0.0, scale), (scale, cut), (cut, np.inf)]
    total, err = 0.0, 0.0
    for lo, hi in pieces:
        v, e = _quad(g, lo, hi, quad)
        total += v
        err += e
    return total, err


def integrate_line(f: Callable[[float], float], t: float,
                   quad: QuadratureSpec = DEFAULT_QUAD) -> tuple[float, float]:
    """Integrate ``f(s)`` over the real line for kernels supported on s < t.

    Panel boundaries sit on the singular points s = 0 and s = t so QUADPACK's
    endpoint extrapolation absorbs the power/log singularities.
    Returns ``(value, abs_error_estimate)``.
    """
    if t <= 0:
        return 0.0, 0.0
    v_pos, e_pos = _quad(f, 0.0, t, quad)
    v_neg, e_neg = _half_line(lambda u: f(-u), quad, scale=t)
    return v_pos + v_neg, e_pos + e_neg


def tail_bound(H: HurstLike, t: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Analytic bound on the squared-kernel mass beyond s = -s_cut * t.

    For u >= S the mean value theorem gives |(t+u)^a - u^a| <= |a| t u^{a-1}
    for either sign of a, hence the tail is below C^2 a^2 t^2 S^{2a-1} / (1 - 2a).
    """
    h = hurst_value(H)
    a = h - 0.5
    S = quad.s_cut * t
    return c_norm(h) ** 2 * a * a * t * t * S ** (2 * a - 1) / (1 - 2 * a)


def _check_alpha(alpha: float):
    if not (-0.5 < alpha < 0.5):
        raise ValueError(f"alpha must lie in (-1/2, 1/2), got {alpha}")


def c1(alpha: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    _check_alpha(alpha)
    v, _ = _half_line(lambda s: ((1 + s) ** alpha - s ** alpha) ** 2, quad)
    return v + 1.0 / (2 * alpha + 1)


def c2(alpha: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    _check_alpha(alpha)

    def g(s):
        return ((1 + s) ** alpha * np.log1p(s) - (s ** alpha * np.log(s) if s > 0 else 0.0)) ** 2

    v, _ = _half_line(g, quad)
    w, _ = _quad(lambda s: ((1 - s) ** alpha * np.log1p(-s)) ** 2 if s < 1 else 0.0, 0.0, 1.0, quad)
    return v + w


def kernel_l2(H: HurstLike, t: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Squared L2 norm of K^H(t, .) over the real line (should equal t^{2H})."""
    h = hurst_value(H)
    return integrate_line(lambda s: kernel(h, t, s) ** 2, t, quad)[0]


def dkernel_l2(H: HurstLike, t: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Squared L2 norm of dK^H/dH (t, .)."""
    h = hurst_value(H)
    return integrate_line(lambda s: dkernel(h, t, s) ** 2, t, quad)[0]


def dkernel_l2_bound(H: HurstLike, t: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Upper bound on :func:`dkernel_l2` from the C1/C2 estimates.

    (x + y)^2 <= 2x^2 + 2y^2 splits off the dC/dH part, and the log part is
    bounded by 2 t^{2a+1} (ln t)^2 C1(a) + 2 t^{2a+1} C2(a).
    """
    h = hurst_value(H)
    a = h - 0.5
    w = t ** (2 * a + 1)
    k1 = c1(a, quad)
    log_part = 2 * w * np.log(t) ** 2 * k1 + 2 * w * c2(a, quad)
    return 2 * dc_norm(h) ** 2 * w * k1 + 2 * c_norm(h) ** 2 * log_part


def dq_l2_error(H: HurstLike, t: float, eps: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """L2 distance between the H-difference quotient of K and dK/dH at fixed t."""
    h = hurst_value(H)
    hurst_value(h + eps)
    if t <= 0:
        raise ValueError("t must be positive")

    def f(s):
        q = (kernel(h + eps, t, s) - kernel(h, t, s)) / eps
        return (q - dkernel(h, t, s)) ** 2

    return integrate_line(f, t, quad)[0]


# --------------------------------------------------------------------------
# exact cell averages
# --------------------------------------------------------------------------

def _pow_diff(x, y, a):
    """x^a - y^a for x, y > 0 without cancellation when x ~ y."""
    return y ** a * np.expm1(a * np.log1p((x - y) / y))


def _prim(x, a):
    """Antiderivative piece x^a / a with 0 at x = 0."""
    x = np.maximum(x, 0.0)
    return x ** a / a


def _dprim(x, a):
    """d/da of x^a / a."""
    x = np.maximum(x, 0.0)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = xp ** a * (np.log(xp) - 1.0 / a) / a
    return out


def _bracket(t, e, a, deriv):
    """P(t - e) - P(-e) for left/right cell edges e; P the (derivative) primitive."""
    e = np.asarray(e, dtype=float)
    x = t - e
    y = -e
    out = np.empty(np.broadcast(x, y).shape)
    both = (y > 0) & (x > 0)
    if not deriv:
        out[...] = _prim(x, a) - _prim(y, a)
        xb, yb = np.broadcast_arrays(x, y)
        out[both] = _pow_diff(xb[both], yb[both], a) / a
    else:
        out[...] = _dprim(x, a) - _dprim(y, a)
        xb, yb = np.broadcast_arrays(x, y)
        xs, ys = xb[both], yb[both]
        d = _pow_diff(xs, ys, a)
        # x^a ln x - y^a ln y = (x^a - y^a) ln y + x^a ln(x / y)
        xlog = d * np.log(ys) + xs ** a * np.log1p((xs - ys) / ys)
        out[both] = (xlog - d / a) / a
    return out


def cell_average_kernel(H: HurstLike, t_nodes, edges, derivative: bool = False) -> np.ndarray:
    """Matrix of cell-averaged kernels, shape ``(len(t_nodes), len(edges) - 1)``.

    Entry (i, j) is (1/|cell_j|) * int_{cell_j} K^H(t_i, s) ds, integrated in
    closed form.  With ``derivative=True`` the same average of dK^H/dH is
    returned; it is the exact H-derivative of the averaged kernel.
    """
    h = hurst_value(H)
    a = h + 0.5  # exponent of the primitive
    t_nodes = np.asarray(t_nodes, dtype=float)[:, None]
    edges = np.asarray(edges, dtype=float)
    width = np.diff(edges)
    lo = edges[:-1][None, :]
    hi = edges[1:][None, :]
    base = _bracket(t_nodes, lo, a, False) - _bracket(t_nodes, hi, a, False)
    if not derivative:
        out = c_norm(h) * base
    else:
        dlog = _bracket(t_nodes, lo, a, True) - _bracket(t_nodes, hi, a, True)
        out = dc_norm(h) * base + c_norm(h) * dlog
    out = out / width[None, :]
    out[t_nodes[:, 0] <= 0.0, :] = 0.0
    return out
