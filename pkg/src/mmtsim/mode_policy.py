"""
Transmission-mode selection and operating-region maps.

The active mode is the number of simultaneously served users. Selection
only needs the ``Nt`` per-mode average sum rates, which depend on slow
parameters (average SNR, Doppler, codebook size), not on instantaneous CSI.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import channel
from .rates import (
    ImperfectionParams,
    ModeRates,
    RateReport,
    mode_sum_rate,
    rate_qd_highsnr_user,
)

__all__ = [
    "BASES",
    "ModeDecision",
    "RegionGrid",
    "argmax_mode",
    "select_mode",
    "operating_region",
    "dominant_high_snr_mode",
]

BASES = ("perfect_csit", "imperfect_analytic", "monte_carlo")


@dataclass(frozen=True)
class ModeDecision:
    chosen_mode: int
    per_mode_rates: RateReport
    basis: str


def argmax_mode(rates: dict) -> int:
    """Mode with the largest rate; ties go to the smaller mode."""
    best_m, best_r = None, -np.inf
    for m in sorted(rates):
        if rates[m] > best_r:
            best_m, best_r = m, rates[m]
    return best_m


def select_mode(Nt: int, P: float, imp: Optional[ImperfectionParams] = None,
                basis: str = "imperfect_analytic", su: str = "proxy",
                trials: int = 100_000, seed: int = 0) -> ModeDecision:
    """Throughput-maximizing mode at total SNR ``P`` (linear).

    Parameters
    ----------
    imp : ImperfectionParams or None
        CSIT quality; ignored for ``basis='perfect_csit'``.
    basis : str
        ``'perfect_csit'`` (ZF with perfect CSIT), ``'imperfect_analytic'``
        (closed-form MU rates plus the SU estimator chosen by ``su``) or
        ``'monte_carlo'`` (every mode simulated).
    """
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}")
    rates = {}
    if basis == "monte_carlo":
        from .montecarlo import SimScenario, simulate_sum_rate

        imp_mc = imp if imp is not None else ImperfectionParams.perfect()
        for M in range(1, Nt + 1):
            est = simulate_sum_rate(SimScenario(Nt=Nt, M=M, P=P, imp=imp_mc, trials=trials, seed=seed))
            rates[M] = est.mean
    else:
        use = None if basis == "perfect_csit" else imp
        for M in range(1, Nt + 1):
            rates[M] = mode_sum_rate(M, P, Nt, use, su=su, trials=trials, seed=seed)
    report = RateReport(per_mode={m: ModeRates(analytic_sum_rate=r, loss_bound=float("nan"))
                                  for m, r in rates.items()})
    return ModeDecision(chosen_mode=argmax_mode(rates), per_mode_rates=report, basis=basis)


@dataclass(frozen=True)
class RegionGrid:
    """Chosen mode on an (SNR, second-parameter) grid; ``cells[i, j]`` is for
    ``axis1[i]`` and ``axis2[j]``, ``rates[i, j, M-1]`` the sum rate of mode ``M``."""

    axis1_name: str
    axis1: np.ndarray
    axis2_name: str
    axis2: np.ndarray
    cells: np.ndarray
    rates: Optional[np.ndarray] = None

    def rows(self):
        for i, a in enumerate(self.axis1):
            for j, b in enumerate(self.axis2):
                yield float(a), float(b), int(self.cells[i, j])


def operating_region(Nt: int, fc: float, tau: float, snr_db: Sequence[float],
                     v_grid: Optional[Sequence[float]] = None, B: Optional[float] = None,
                     B_grid: Optional[Sequence[float]] = None, v: Optional[float] = None,
                     su: str = "proxy") -> RegionGrid:
    """Mode map over SNR and either speed (fixed ``B``) or bits (fixed ``v``).

    Exactly one of ``v_grid`` (with ``B``) or ``B_grid`` (with ``v``) is given.
    """
    snr_db = np.asarray(snr_db, dtype=float)
    if snr_db.size == 0:
        raise ValueError("SNR grid is empty")
    if (v_grid is None) == (B_grid is None):
        raise ValueError("give exactly one of v_grid or B_grid")
    if v_grid is not None:
        if B is None:
            raise ValueError("v_grid needs a fixed B")
        axis2 = np.asarray(v_grid, dtype=float)
        imps = [ImperfectionParams.build(Nt, B, channel.doppler_correlation(vv, fc, tau)) for vv in axis2]
        name2 = "v_kmh"
    else:
        if v is None:
            raise ValueError("B_grid needs a fixed v")
        axis2 = np.asarray(B_grid, dtype=float)
        dop = channel.doppler_correlation(v, fc, tau)
        imps = [ImperfectionParams.build(Nt, bb, dop) for bb in axis2]
        name2 = "B"
    if axis2.size == 0:
        raise ValueError("second axis grid is empty")
    cells = np.zeros((snr_db.size, axis2.size), dtype=int)
    rates = np.zeros((snr_db.size, axis2.size, Nt))
    for i, s in enumerate(snr_db):
        P = 10.0 ** (s / 10.0)
        for j, imp in enumerate(imps):
            dec = select_mode(Nt, P, imp, basis="imperfect_analytic", su=su)
            cells[i, j] = dec.chosen_mode
            rates[i, j] = [dec.per_mode_rates.per_mode[m].analytic_sum_rate for m in range(1, Nt + 1)]
    return RegionGrid("snr_db", snr_db, name2, axis2, cells, rates)


def dominant_high_snr_mode(Nt: int, fdTs: float, B: float) -> int:
    """MU mode (``M > 1``) with the highest interference-limited sum-rate ceiling."""
    if not 0.0 < fdTs < 0.5:
        raise ValueError("fdTs must lie in (0, 0.5)")
    if B < 1:
        raise ValueError("B must be >= 1")
    imp = ImperfectionParams.build(Nt, B, channel.doppler_from_fdts(fdTs))
    ceilings = {M: M * rate_qd_highsnr_user(M, Nt, imp) for M in range(2, Nt + 1)}
    return argmax_mode(ceilings)
