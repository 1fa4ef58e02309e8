"""
Closed-form achievable-rate approximations for ZF multi-mode transmission.

All rates are in bits/s/Hz. ``P`` is the total transmit SNR (linear), split
equally over the ``M`` active users. A user's imperfect CSIT is summarized
by :class:`ImperfectionParams`.

The MU-mode approximations model the SINR as ``alpha*z / (1 + y)`` (or
``alpha*z / y`` at high SNR), where ``z ~ Gamma(Nt-M+1)`` and ``y`` is the
residual interference ``delta1*y1 + delta2*y2`` with ``y1, y2 ~ Gamma(M-1)``.
The density of ``y`` is handled as a finite mixture of ``y^k e^{-y/d}``
terms; see :func:`interference_mixture`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, special

from . import channel
from .numerics import (
    chi2_sum_pdf_coeffs,
    integral_I1,
    integral_I2,
    upper_incomplete_gamma_negint,
)

__all__ = [
    "LOG2E",
    "ImperfectionParams",
    "ModeRates",
    "RateReport",
    "interference_mixture",
    "rate_bf",
    "rate_csit_sum",
    "rate_loss_bound",
    "rate_qd_user",
    "rate_single_impairment_user",
    "rate_qd_highsnr_user",
    "rate_highsnr_single_impairment_user",
    "rate_su_proxy",
    "rate_su_imperfect",
    "mode_sum_rate",
    "rate_report",
]

LOG2E = 1.0 / math.log(2.0)

# below this relative gap between the interference scales the closed-form
# coefficients cancel badly; a positive series is used instead
_SERIES_GAP = 0.25
_SERIES_TOL = 1e-17
_SERIES_MAX_TERMS = 400


@dataclass(frozen=True)
class ImperfectionParams:
    """Slow CSIT-quality parameters of one user.

    ``B`` may be ``math.inf`` for unquantized feedback, in which case
    ``delta = 0`` and ``xi = 1``.
    """

    rho_sq: float
    eps_sq: float
    B: float
    delta: float
    xi: float

    def __post_init__(self):
        if not (0.0 <= self.rho_sq <= 1.0 and 0.0 <= self.eps_sq <= 1.0):
            raise ValueError("rho_sq and eps_sq must lie in [0, 1]")
        if abs(self.rho_sq + self.eps_sq - 1.0) > 1e-12:
            raise ValueError("rho_sq + eps_sq must equal 1")

    @classmethod
    def build(cls, Nt: int, B: float, doppler: Optional[channel.DopplerParams] = None) -> "ImperfectionParams":
        """Parameters for ``B`` feedback bits and the given correlation (static if None)."""
        rho_sq = 1.0 if doppler is None else doppler.rho_sq
        eps_sq = 1.0 - rho_sq
        if math.isinf(B):
            delta, xi = 0.0, 1.0
        else:
            delta = channel.quantization_error_mean(Nt, B)
            xi = channel.expected_cos2(Nt, B)
        return cls(rho_sq=rho_sq, eps_sq=eps_sq, B=B, delta=delta, xi=xi)

    @classmethod
    def perfect(cls) -> "ImperfectionParams":
        return cls(rho_sq=1.0, eps_sq=0.0, B=math.inf, delta=0.0, xi=1.0)

    @property
    def is_perfect(self) -> bool:
        return self.eps_sq == 0.0 and self.delta == 0.0


# --------------------------------------------------------------------------
# interference density as a mixture of y^k exp(-y/d) terms
# --------------------------------------------------------------------------

def _single_gamma(shape: int, scale: float, weight: float = 1.0):
    c = np.zeros(shape)
    c[-1] = weight * math.exp(-shape * math.log(scale) - special.gammaln(shape))
    return scale, c


def _gamma_sum_series(L: int, d1: float, d2: float):
    """Positive series for the density of ``d1*Gamma(L) + d2*Gamma(L)``.

    Expands in Gamma(2L + k) densities on the smaller scale; every weight is
    non-negative, so there is no cancellation when ``d1`` and ``d2`` are close.
    """
    lo, hi = min(d1, d2), max(d1, d2)
    r = 1.0 - lo / hi
    log_c = L * math.log(lo / hi)
    # gamma_k = L r^k / k ; weights w_{k+1} = 1/(k+1) sum_i i gamma_i w_{k+1-i}
    w = [1.0]
    comps = [_single_gamma(2 * L, lo, math.exp(log_c))]
    acc = math.exp(log_c)
    gam = [0.0]
    for k in range(1, _SERIES_MAX_TERMS):
        gam.append(L * r**k / k)
        wk = sum(i * gam[i] * w[k - i] for i in range(1, k + 1)) / k
        w.append(wk)
        wt = math.exp(log_c) * wk
        comps.append(_single_gamma(2 * L + k, lo, wt))
        acc += wt
        if wt < _SERIES_TOL * acc and k > 2:
            break
    return comps


def interference_mixture(L: int, d1: float, d2: float):
    """Components ``(scale, coeffs)`` of the density of ``d1*y1 + d2*y2``.

    ``y1, y2 ~ Gamma(L, 1)``. The density is
    ``sum over components of sum_k coeffs[k] * y^k * exp(-y/scale)``.
    A zero scale drops that summand; both zero returns an empty list
    (no interference).
    """
    if d1 < 0 or d2 < 0:
        raise ValueError("interference scales must be non-negative")
    if d1 == 0.0 and d2 == 0.0:
        return []
    if d1 == 0.0 or d2 == 0.0:
        return [_single_gamma(L, max(d1, d2))]
    gap = abs(d1 - d2) / max(d1, d2)
    if gap < _SERIES_GAP:
        return _gamma_sum_series(L, d1, d2)
    pc = chi2_sum_pdf_coeffs(L, d1, d2)
    return list(pc.components())


# --------------------------------------------------------------------------
# perfect CSIT
# --------------------------------------------------------------------------

def rate_bf(gamma: float, n: int) -> float:
    """Ergodic rate ``E[log2(1 + gamma * g)]`` with ``g ~ Gamma(n, 1)``.

    This is the eigen-beamforming / MRC rate at SNR ``gamma`` and diversity
    order ``n``. For ``1/gamma > 30`` the closed form is replaced by direct
    quadrature, which sidesteps the ``e^{1/gamma}`` overflow.
    """
    n = int(n)
    if n < 1:
        raise ValueError("diversity order must be >= 1")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    x = 1.0 / gamma
    if x > 30.0:
        lg = special.gammaln(n)
        val, _ = integrate.quad(
            lambda t: math.log1p(gamma * t) * math.exp((n - 1) * math.log(t) - t - lg) if t > 0 else 0.0,
            0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=200,
        )
        return LOG2E * val
    total = 0.0
    for k in range(n):
        total += upper_incomplete_gamma_negint(k, x, scaled=True) * x**k
    return LOG2E * total


def rate_csit_sum(M: int, P: float, Nt: int) -> float:
    """ZF sum rate with perfect CSIT, ``M * rate_bf(P/M, Nt-M+1)``."""
    if not 1 <= M <= Nt:
        raise ValueError("need 1 <= M <= Nt")
    return M * rate_bf(P / M, Nt - M + 1)


def rate_loss_bound(M: int, P: float, imp: ImperfectionParams) -> tuple[float, float]:
    """Mean noise-plus-residual-interference and the per-user rate-loss bound.

    Returns ``(delta_qd, log2(delta_qd))``.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    dqd = 1.0 + (1.0 - 1.0 / M) * P * (imp.rho_sq * imp.delta + imp.eps_sq)
    return dqd, math.log2(dqd)


# --------------------------------------------------------------------------
# imperfect CSIT, MU modes
# --------------------------------------------------------------------------

def _rate_from_mixture(alpha: float, Nt: int, M: int, comps) -> float:
    """``E[log2(1 + alpha z / (1 + y))]`` for ``z ~ Gamma(Nt-M+1)``, ``y`` a mixture."""
    div = Nt - M + 1
    if not comps:
        return rate_bf(alpha, div)
    inv_a = 1.0 / alpha
    log_alpha = math.log(alpha)
    total = 0.0
    for d, coeffs in comps:
        b = alpha / d
        for k, ck in enumerate(coeffs):
            if ck == 0.0:
                continue
            log_ck = math.log(abs(ck))
            sgn = 1.0 if ck > 0 else -1.0
            for i in range(div):
                for l in range(i + 1):
                    logp = (
                        log_ck
                        + special.gammaln(l + k + 1)
                        - special.gammaln(l + 1)
                        - special.gammaln(i - l + 1)
                        + (l + k - i + 1) * log_alpha
                    )
                    total += sgn * math.exp(logp) * integral_I1(inv_a, b, i, l + k + 1)
    return LOG2E * total


def rate_qd_user(M: int, P: float, Nt: int, imp: ImperfectionParams, include_xi: bool = True) -> float:
    """Per-user rate in MU mode ``M`` with delayed and quantized CSIT.

    Parameters
    ----------
    include_xi : bool
        Scale the signal term by the mean squared quantization cosine ``xi``.
        Set False for the variant without it (sensitivity checks).
    """
    if not 1 < M <= Nt:
        raise ValueError("rate_qd_user needs 1 < M <= Nt")
    L = M - 1
    alpha = (imp.xi if include_xi else 1.0) * imp.rho_sq * P / M
    if alpha <= 0.0:
        return 0.0
    d1 = imp.rho_sq * P * imp.delta / M
    d2 = imp.eps_sq * P / M
    return max(_rate_from_mixture(alpha, Nt, M, interference_mixture(L, d1, d2)), 0.0)


def rate_single_impairment_user(M: int, P: float, Nt: int, kappa: float) -> float:
    """Per-user rate in MU mode ``M`` with one CSIT impairment.

    ``kappa`` is ``rho^2`` for delay only or ``1 - delta`` for quantization
    only.
    """
    if not 1 < M <= Nt:
        raise ValueError("need 1 < M <= Nt")
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    L = M - 1
    alpha = kappa * P / M
    beta = (1.0 - kappa) * P / M
    inv_a = 1.0 / alpha
    total = 0.0
    for i in range(Nt - L):
        for l in range(i + 1):
            logp = (
                special.gammaln(L + l) - special.gammaln(l + 1) - special.gammaln(L)
                + (L + l - i) * math.log(alpha)
                - L * math.log(beta)
                - special.gammaln(i - l + 1)
            )
            total += math.exp(logp) * integral_I1(inv_a, alpha / beta, i, L + l)
    return LOG2E * total


def rate_qd_highsnr_user(M: int, Nt: int, imp: ImperfectionParams) -> float:
    """Interference-limited rate ceiling per user in MU mode ``M``.

    Returns ``inf`` for perfect CSIT (no residual interference).
    """
    if not 1 < M <= Nt:
        raise ValueError("need 1 < M <= Nt")
    L = M - 1
    a_hat = imp.rho_sq
    if a_hat == 0.0:
        return 0.0
    comps = interference_mixture(L, imp.rho_sq * imp.delta, imp.eps_sq)
    if not comps:
        return math.inf
    log_a = math.log(a_hat)
    total = 0.0
    for d, coeffs in comps:
        arg = a_hat / d
        for k, ck in enumerate(coeffs):
            if ck == 0.0:
                continue
            sgn = 1.0 if ck > 0 else -1.0
            for i in range(Nt - L):
                logp = (
                    math.log(abs(ck)) + (k + 1) * log_a
                    + special.gammaln(k + i + 1) - special.gammaln(i + 1)
                )
                total += sgn * math.exp(logp) * integral_I2(arg, i, k + i + 1)
    return max(LOG2E * total, 0.0)


def rate_highsnr_single_impairment_user(M: int, Nt: int, alpha_hat: float) -> float:
    """High-SNR per-user ceiling with a single impairment.

    ``alpha_hat`` is ``rho^2/eps^2`` (delay only) or ``(1-delta)/delta``
    (quantization only).
    """
    if not 1 < M <= Nt:
        raise ValueError("need 1 < M <= Nt")
    if not alpha_hat > 0:
        raise ValueError("alpha_hat must be positive")
    L = M - 1
    total = 0.0
    for i in range(Nt - L):
        logp = (
            special.gammaln(L + i) - special.gammaln(i + 1) - special.gammaln(L)
            + L * math.log(alpha_hat)
        )
        total += math.exp(logp) * integral_I2(alpha_hat, i, L + i)
    return LOG2E * total


# --------------------------------------------------------------------------
# SU mode
# --------------------------------------------------------------------------

def rate_su_proxy(P: float, Nt: int, imp: ImperfectionParams) -> float:
    """Fast SU-mode estimate: beamforming rate at the effective SNR ``xi rho^2 P``.

    Drops the small innovation component aligned with the stale beamformer.
    """
    g = imp.xi * imp.rho_sq * P
    if g <= 0.0:
        return 0.0
    return rate_bf(g, Nt)


def rate_su_imperfect(P: float, Nt: int, imp: ImperfectionParams, trials: int = 100_000, seed: int = 0):
    """Monte Carlo SU rate with a quantized, delayed eigen-beamformer.

    Returns a :class:`mmtsim.montecarlo.Estimate` (mean and standard error).
    """
    from .montecarlo import SimScenario, simulate_sum_rate

    if trials < 10_000:
        raise ValueError("trials must be >= 1e4")
    sc = SimScenario(Nt=Nt, M=1, P=P, imp=imp, trials=trials, seed=seed)
    return simulate_sum_rate(sc)


# --------------------------------------------------------------------------
# per-mode report
# --------------------------------------------------------------------------

def mode_sum_rate(M: int, P: float, Nt: int, imp: Optional[ImperfectionParams] = None,
                  su: str = "proxy", trials: int = 100_000, seed: int = 0,
                  include_xi: bool = True) -> float:
    """Analytic sum rate of mode ``M`` for a homogeneous group of users.

    ``imp=None`` (or perfect parameters) gives the perfect-CSIT rate. For
    imperfect CSIT the SU mode uses ``su='proxy'`` (closed form) or
    ``su='montecarlo'``.
    """
    if imp is None or imp.is_perfect:
        return rate_csit_sum(M, P, Nt)
    if M == 1:
        if su == "montecarlo":
            return rate_su_imperfect(P, Nt, imp, trials=trials, seed=seed).mean
        return rate_su_proxy(P, Nt, imp)
    return M * rate_qd_user(M, P, Nt, imp, include_xi=include_xi)


@dataclass(frozen=True)
class ModeRates:
    analytic_sum_rate: float
    loss_bound: float
    high_snr_ceiling: Optional[float] = None


@dataclass(frozen=True)
class RateReport:
    """Per-mode analytic rates for modes ``1..Nt``."""

    per_mode: dict = field(default_factory=dict)

    def sum_rates(self) -> dict:
        return {m: r.analytic_sum_rate for m, r in self.per_mode.items()}


def rate_report(P: float, Nt: int, imp: Optional[ImperfectionParams] = None, su: str = "proxy",
                trials: int = 100_000, seed: int = 0) -> RateReport:
    """Analytic sum rate, loss bound and (MU modes) high-SNR ceiling for every mode."""
    imp_eff = imp if imp is not None else ImperfectionParams.perfect()
    per_mode = {}
    for M in range(1, Nt + 1):
        rate = mode_sum_rate(M, P, Nt, imp_eff, su=su, trials=trials, seed=seed)
        _, bound = rate_loss_bound(M, P, imp_eff)
        ceil = None
        if M > 1:
            ceil = M * rate_qd_highsnr_user(M, Nt, imp_eff)
        per_mode[M] = ModeRates(analytic_sum_rate=rate, loss_bound=bound, high_snr_ceiling=ceil)
    return RateReport(per_mode=per_mode)
