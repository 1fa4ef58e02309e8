"""
Special functions and semi-infinite integrals used by the rate formulas.

Everything here is pure and deterministic. The two rational/exponential
integrals ``I1`` and ``I2`` are evaluated by adaptive quadrature in the
log-abscissa ``x = e^u``; the features of the integrands at ``x ~ b``,
``x ~ 1`` and ``x ~ 1/a`` then all have unit width, and the tails are
bounded analytically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

__all__ = [
    "PdfCoefficients",
    "DegenerateDeltaWarning",
    "QuadratureError",
    "bessel_j0",
    "exp1",
    "upper_incomplete_gamma_negint",
    "log_beta",
    "beta_fn",
    "integral_I1",
    "integral_I2",
    "chi2_sum_pdf_coeffs",
    "DEGENERACY_GAP",
    "DEGENERACY_NUDGE",
]

EULER_GAMMA = 0.57721566490153286061

#: relative gap between the two scales below which they are nudged apart
DEGENERACY_GAP = 1e-6
DEGENERACY_NUDGE = 1e-5

_QUAD_RTOL = 1e-12
_TAIL_RTOL = 1e-14


class QuadratureError(ArithmeticError):
    """Raised when an integral fails to reach its requested accuracy."""


class DegenerateDeltaWarning(RuntimeWarning):
    """The two chi-square scales were too close and have been separated."""


def bessel_j0(x):
    """Zero-th order Bessel function of the first kind."""
    return special.j0(x)


def exp1(x: float) -> float:
    """Exponential integral E1(x) for x > 0.

    Power series below 1, Lentz continued fraction above.
    """
    if x <= 0:
        raise ValueError("exp1 requires x > 0")
    if x < 1.0:
        # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
        total = 0.0
        term = 1.0
        k = 1
        while True:
            term *= -x / k
            contrib = term / k
            total += contrib
            if abs(contrib) < 1e-17 * abs(total) or k > 200:
                break
            k += 1
        return -EULER_GAMMA - math.log(x) - total
    return math.exp(-x) * _scaled_gamma_cf(0, x)


def _scaled_gamma_cf(a: float, x: float) -> float:
    """e^x * Gamma(a, x) via the Legendre continued fraction (modified Lentz).

    Converges quickly for x > a + 1, which covers every a <= 0 once x >= 1.
    """
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h * x**a
    raise QuadratureError(f"continued fraction for Gamma({a}, {x}) did not converge")


def upper_incomplete_gamma_negint(k: int, x: float, scaled: bool = False) -> float:
    """Upper incomplete gamma function Gamma(-k, x) for integer k >= 0.

    Parameters
    ----------
    k : int
        Non-negative integer; the first argument is ``-k``.
    x : float
        Lower integration limit, strictly positive.
    scaled : bool
        If True return ``e^x * Gamma(-k, x)``, which stays finite for large x.

    Notes
    -----
    For x < 1 the value is built from E1(x) by the recurrence
    ``Gamma(-k, x) = (x^-k e^-x - Gamma(1-k, x)) / k``, which is stable there
    because the subtracted term is the small one. For x >= 1 that recurrence
    amplifies rounding error, so the continued fraction is used directly.
    """
    k = int(k)
    if k < 0:
        raise ValueError("k must be a non-negative integer")
    if not x > 0:
        raise ValueError("Gamma(-k, x) requires x > 0")
    if x >= 1.0:
        val = _scaled_gamma_cf(-k, x)
        return val if scaled else val * math.exp(-x)
    # scaled recurrence: G_j = e^x Gamma(-j, x)
    g = math.exp(x) * exp1(x)
    for j in range(1, k + 1):
        g = (x ** (-j) - g) / j
    return g if scaled else g * math.exp(-x)


# Stirling remainder coefficients B_{2n} / (2n (2n-1))
_STIRLING = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
)


def _stirling_remainder(z: float) -> float:
    zinv = 1.0 / z
    z2 = zinv * zinv
    acc = 0.0
    for c in reversed(_STIRLING):
        acc = acc * z2 + c
    return acc * zinv


def log_beta(x: float, y: float) -> float:
    """Natural log of the Beta function, accurate when one argument is huge."""
    if not (x > 0 and y > 0):
        raise ValueError("beta function requires positive arguments")
    big, small = (x, y) if x >= y else (y, x)
    if big < 10.0:
        return special.gammaln(x) + special.gammaln(y) - special.gammaln(x + y)
    # lnG(big) - lnG(big+small) without forming either large log-gamma
    s = big + small
    diff = (
        -(big - 0.5) * math.log1p(small / big)
        - small * math.log(s)
        + small
        + _stirling_remainder(big)
        - _stirling_remainder(s)
    )
    return float(special.gammaln(small)) + diff


def beta_fn(x: float, y: float) -> float:
    """Beta function Gamma(x) Gamma(y) / Gamma(x + y), via :func:`log_beta`."""
    return math.exp(log_beta(x, y))


def _log_quad(logf, lo: float, hi: float, breaks) -> float:
    """Integrate exp(logf(u)) over [lo, hi], splitting at interior breaks."""
    pts = sorted({lo, hi, *[b for b in breaks if lo < b < hi]})
    total = 0.0
    err = 0.0
    for u0, u1 in zip(pts[:-1], pts[1:]):
        val, e = integrate.quad(
            lambda u: math.exp(logf(u)), u0, u1,
            epsabs=0.0, epsrel=_QUAD_RTOL, limit=400,
        )
        total += val
        err += e
    if not np.isfinite(total) or err > 1e-9 * abs(total) + 1e-300:
        raise QuadratureError(f"quadrature did not converge (estimate {total}, error {err})")
    return total


@lru_cache(maxsize=65536)
def integral_I1(a: float, b: float, m: int, n: int) -> float:
    """Integral of ``x^m e^{-a x} / ((x + b)^n (x + 1))`` over ``[0, inf)``.

    Both ``a`` and ``b`` must be positive; ``m >= 0``, ``n >= 1``.
    """
    if not a > 0:
        raise ValueError("integral_I1 diverges for a <= 0")
    if not b > 0:
        raise ValueError("integral_I1 requires b > 0")
    if m < 0 or n < 0:
        raise ValueError("m and n must be non-negative")
    a = float(a)
    b = float(b)
    logb = math.log(b)

    def logf(u: float) -> float:
        x = math.exp(u)
        return (
            (m + 1) * u - a * x
            - n * (logb + math.log1p(x / b))
            - math.log1p(x)
        )

    # lower cut: integrand <= x^m / b^n near 0, so the neglected piece is
    # at most x_lo^(m+1) / ((m+1) b^n), e^-40 below the smallest feature
    u_lo = min(logb, 0.0, -math.log(a)) - 40.0 / (m + 1)
    # upper cut: past X the exponential has decayed by e^-60 relative to x ~ 1/a
    X = max(1.0, b) + (60.0 + 2.0 * m) / a
    u_hi = math.log(X)
    breaks = [logb, 0.0, -math.log(a)]
    val = _log_quad(logf, u_lo, u_hi, breaks)
    return val


@lru_cache(maxsize=65536)
def integral_I2(a: float, m: int, n: int) -> float:
    """Integral of ``x^m / ((x + a)^n (x + 1))`` over ``[0, inf)``, ``m <= n - 1``."""
    if not a > 0:
        raise ValueError("integral_I2 requires a > 0")
    if m < 0:
        raise ValueError("m must be non-negative")
    if m > n - 1:
        raise ValueError("integral_I2 diverges for m > n - 1")
    a = float(a)
    loga = math.log(a)

    def logf(u: float) -> float:
        x = math.exp(u)
        return (m + 1) * u - n * (loga + math.log1p(x / a)) - math.log1p(x)

    q = n - m  # integrand ~ x^(-q-1) at infinity, q >= 1
    u_lo = min(loga, 0.0) - 40.0 / (m + 1)
    u_top = max(loga, 0.0)
    # rough magnitude of the answer: the integrand near its peak region
    scale = max(math.exp(logf(loga)), math.exp(logf(0.0)), math.exp(logf(u_top)))
    # tail beyond X is below X^-q / q; asymptotic correction added analytically
    X = math.exp(u_top) * 1e4
    while X ** (-q) / q > _TAIL_RTOL * scale:
        X *= 10.0
    val = _log_quad(logf, u_lo, math.log(X), [loga, 0.0])
    # remaining tail: x^(m-n-1) (1 + a/x)^-n (1 + 1/x)^-1 ~ x^-(q+1) (1 - (n a + 1)/x)
    val += X ** (-q) / q - (n * a + 1.0) * X ** (-q - 1) / (q + 1)
    return val


@dataclass(frozen=True)
class PdfCoefficients:
    """Coefficients of the density of ``delta1*y1 + delta2*y2``.

    ``y1``, ``y2`` are independent Gamma(L, 1) variables (the chi-square
    with 2L degrees of freedom in the half-scaled convention, unit mean per
    complex dimension). The density is
    ``sum_j sum_k a_j[k] * y^k * exp(-y / delta_j)``.
    """

    a1: np.ndarray
    a2: np.ndarray
    delta1: float
    delta2: float
    L: int

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        p1 = np.polynomial.polynomial.polyval(y, self.a1) * np.exp(-y / self.delta1)
        p2 = np.polynomial.polynomial.polyval(y, self.a2) * np.exp(-y / self.delta2)
        return p1 + p2

    def components(self):
        """Pairs ``(delta_j, a_j)`` for use in the rate sums."""
        return ((self.delta1, self.a1), (self.delta2, self.a2))


def _separate(delta1: float, delta2: float) -> tuple[float, float]:
    gap = abs(delta1 - delta2) / max(delta1, delta2)
    if gap > DEGENERACY_GAP:
        return delta1, delta2
    warnings.warn(
        f"delta1={delta1!r} and delta2={delta2!r} nearly equal; "
        f"perturbing delta2 by a relative {DEGENERACY_NUDGE}",
        DegenerateDeltaWarning,
        stacklevel=3,
    )
    return delta1, delta2 * (1.0 + DEGENERACY_NUDGE)


def chi2_sum_pdf_coeffs(L: int, delta1: float, delta2: float, nudge: bool = True) -> PdfCoefficients:
    """Density coefficients for a weighted sum of two Gamma(L, 1) variables.

    Parameters
    ----------
    L : int
        Shape of each summand (``M - 1`` in the rate formulas).
    delta1, delta2 : float
        Positive weights. They must differ; with ``nudge`` (default) a pair
        whose relative gap is at most ``DEGENERACY_GAP`` is separated by a
        relative ``DEGENERACY_NUDGE`` and a :class:`DegenerateDeltaWarning`
        is emitted, otherwise ``ValueError`` is raised.
    """
    L = int(L)
    if L < 1:
        raise ValueError("L must be >= 1")
    if not (delta1 > 0 and delta2 > 0):
        raise ValueError("delta1 and delta2 must be positive")
    gap = abs(delta1 - delta2) / max(delta1, delta2)
    if gap <= DEGENERACY_GAP:
        if not nudge:
            raise ValueError("delta1 and delta2 are degenerate (nearly equal)")
        delta1, delta2 = _separate(delta1, delta2)
    d1, d2 = float(delta1), float(delta2)
    a1 = np.empty(L)
    a2 = np.empty(L)
    # log-domain assembly keeps the factorial ratios finite for larger L
    lf = special.gammaln
    r12 = d1 / (d1 - d2)  # sign carries through
    r21 = d2 / (d2 - d1)
    for i in range(L):
        comb = math.exp(lf(2 * (L - 1) - i + 1) - lf(i + 1) - lf(L - 1 - i + 1) - lf(L))
        a1[i] = comb / d1 ** (i + 1) * r12**L * r21 ** (L - 1 - i)
        a2[i] = comb / d2 ** (i + 1) * r21**L * r12 ** (L - 1 - i)
    return PdfCoefficients(a1=a1, a2=a2, delta1=d1, delta2=d2, L=L)
