"""
Multi-mode round-robin scheduling and the feedback-budget comparison.

Round-robin with mode selection serves users in circular queue order; in
each slot the set grows from the queue head one user at a time for as long
as the predicted (average) sum rate improves. Only the scheduled users
need to feed back instantaneous CSI.

The opportunistic baseline (US-ZF) instead collects quantized feedback
from many users and picks a semi-orthogonal subset greedily.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import channel, precoding
from .montecarlo import Estimate, SimScenario, _batch_rng, _batches, simulate_sum_rate
from .mode_policy import argmax_mode
from .rates import ImperfectionParams, mode_sum_rate, rate_bf, rate_qd_user, rate_su_proxy

__all__ = [
    "UserProfile",
    "UserQueue",
    "ScheduleDecision",
    "ScheduleRun",
    "predicted_set_rate",
    "mmt_round_robin_step",
    "run_schedule",
    "feedback_budget_split",
    "select_semi_orthogonal",
    "opportunistic_zf_baseline",
    "simulate_us_zf",
    "budget_mode_rates",
    "mmt_zf_budget_rate",
]


@dataclass(frozen=True)
class UserProfile:
    """Slow per-user parameters: linear average SNR and CSIT quality."""

    P: float
    imp: ImperfectionParams = field(default_factory=ImperfectionParams.perfect)


@dataclass(frozen=True)
class UserQueue:
    """Circular queue of user ids; ``order[head]`` is the next user to serve."""

    order: tuple
    head: int = 0

    @classmethod
    def initial(cls, U: int) -> "UserQueue":
        return cls(order=tuple(range(1, U + 1)), head=0)

    def __post_init__(self):
        if sorted(self.order) != list(range(1, len(self.order) + 1)):
            raise ValueError("queue order must be a permutation of 1..U")

    @property
    def U(self) -> int:
        return len(self.order)

    def peek(self, k: int) -> list:
        """The first ``k`` users from the head, in service order."""
        return [self.order[(self.head + i) % self.U] for i in range(k)]

    def sequence(self) -> list:
        """All users from head to tail."""
        return self.peek(self.U)

    def rotate(self, k: int) -> "UserQueue":
        return UserQueue(order=self.order, head=(self.head + k) % self.U)


@dataclass(frozen=True)
class ScheduleDecision:
    slot: int
    selected: tuple
    predicted_sum_rate: float


def _user_rate(profile: UserProfile, m: int, Nt: int) -> float:
    imp = profile.imp
    if imp.is_perfect:
        return rate_bf(profile.P / m, Nt - m + 1)
    if m == 1:
        return rate_su_proxy(profile.P, Nt, imp)
    return rate_qd_user(m, profile.P, Nt, imp)


def predicted_set_rate(users: Sequence[int], profiles: Mapping[int, UserProfile], Nt: int) -> float:
    """Sum of per-user average rates when ``users`` are served together.

    Each user is evaluated with its own SNR and CSIT quality at mode ``len(users)``.
    """
    m = len(users)
    return sum(_user_rate(profiles[u], m, Nt) for u in users)


def mmt_round_robin_step(q: UserQueue, profiles: Mapping[int, UserProfile], Nt: int,
                         slot: int = 0) -> tuple[ScheduleDecision, UserQueue]:
    """Schedule one slot and rotate the queue past the served users."""
    if q.U < 1:
        raise ValueError("need at least one user")
    cand = q.peek(min(Nt, q.U))
    best = cand[:1]
    r_old = predicted_set_rate(best, profiles, Nt)
    # grow the tentative set one queue-consecutive user at a time
    for n in range(2, len(cand) + 1):
        trial = cand[:n]
        r_new = predicted_set_rate(trial, profiles, Nt)
        if r_new > r_old:
            r_old, best = r_new, trial
    dec = ScheduleDecision(slot=slot, selected=tuple(best), predicted_sum_rate=r_old)
    return dec, q.rotate(len(best))


@dataclass
class ScheduleRun:
    decisions: list
    service_counts: Counter
    feedback_bits: list  # instantaneous CSI bits fed back per slot
    final_queue: UserQueue


def run_schedule(profiles: Mapping[int, UserProfile], Nt: int, slots: int,
                 queue: UserQueue = None) -> ScheduleRun:
    """Run ``slots`` consecutive scheduling steps.

    ``feedback_bits[s]`` counts the instantaneous CSI bits requested in slot
    ``s``: only the selected users report, each with their own codebook size.
    """
    U = len(profiles)
    q = queue or UserQueue.initial(U)
    decisions = []
    counts = Counter({u: 0 for u in profiles})
    fb = []
    for s in range(slots):
        dec, q = mmt_round_robin_step(q, profiles, Nt, slot=s)
        decisions.append(dec)
        counts.update(dec.selected)
        fb.append(sum(_bits(profiles[u]) for u in dec.selected))
    return ScheduleRun(decisions=decisions, service_counts=counts, feedback_bits=fb, final_queue=q)


def _bits(profile: UserProfile) -> int:
    return 0 if math.isinf(profile.imp.B) else int(profile.imp.B)


def feedback_budget_split(B_T: int, M: int) -> int:
    """Per-user bits when ``M`` users share a total of ``B_T`` feedback bits."""
    if B_T < 0 or M < 1:
        raise ValueError("need B_T >= 0 and M >= 1")
    return int(B_T) // int(M)


# --------------------------------------------------------------------------
# opportunistic ZF with semi-orthogonal user selection
# --------------------------------------------------------------------------

def _zf_estimated_rate(dirs: np.ndarray, quality: np.ndarray, P: float) -> float:
    m = dirs.shape[0]
    if m == 1:
        return float(np.log2(1.0 + P * quality[0]))
    F, bad = precoding.zf_batch(dirs[None])
    if bad[0]:
        return -np.inf
    g = np.abs(np.einsum("un,nu->u", np.conj(dirs), F[0])) ** 2
    return float(np.sum(np.log2(1.0 + P / m * quality * g)))


def select_semi_orthogonal(directions: np.ndarray, quality: np.ndarray, P: float, Nt: int,
                           threshold: float = 0.5) -> tuple[list, float]:
    """Greedy semi-orthogonal user selection on quantized feedback.

    Starts from the user with the best reported quality, then repeatedly
    adds, among the candidates whose squared correlation with every selected
    direction is below ``threshold``, the one that maximizes the estimated
    ZF sum rate. Stops when no candidate is left or ``Nt`` users are selected.

    Returns the selected indices and the estimated sum rate of that set.
    """
    directions = np.asarray(directions)
    quality = np.asarray(quality, dtype=float)
    K = directions.shape[0]
    if K < 1:
        raise ValueError("need at least one candidate")
    sel = [int(np.argmax(quality))]
    best = _zf_estimated_rate(directions[sel], quality[sel], P)
    while len(sel) < min(Nt, K):
        corr = np.abs(np.conj(directions) @ directions[sel].T) ** 2
        ok = [k for k in range(K) if k not in sel and np.all(corr[k] < threshold)]
        if not ok:
            break
        rates = [_zf_estimated_rate(directions[sel + [k]], quality[sel + [k]], P) for k in ok]
        j = int(np.argmax(rates))
        best = rates[j]
        sel.append(ok[j])
    return sel, best


def opportunistic_zf_baseline(directions: np.ndarray, quality: np.ndarray, h: np.ndarray,
                              P: float, Nt: int, threshold: float = 0.5) -> tuple[list, float]:
    """Select users from feedback, precode by ZF on their quantized directions
    and return the selection with the sum rate achieved on the true channels ``h``."""
    sel, _ = select_semi_orthogonal(directions, quality, P, Nt, threshold)
    m = len(sel)
    if m == 1:
        f = directions[sel[0]][:, None]
    else:
        F, _ = precoding.zf_batch(directions[sel][None])
        f = F[0]
    G = np.abs(np.conj(h[sel]) @ f) ** 2
    sig = np.diag(G)
    intf = G.sum(axis=1) - sig
    sinr = (P / m) * sig / (1.0 + (P / m) * intf)
    return sel, float(np.sum(np.log2(1.0 + sinr)))


def simulate_us_zf(Nt: int, K: int, bits: int, P: float, trials: int = 2000, seed: int = 0,
                   threshold: float = 0.5, doppler: Optional[channel.DopplerParams] = None) -> Estimate:
    """Monte Carlo rate of US-ZF with ``K`` users each feeding back ``bits`` bits.

    Channel quality reported alongside the direction is the unquantized
    effective gain ``||h||^2 cos^2(theta)``. With ``doppler`` the rate is
    evaluated on the channel one Gauss-Markov step after the feedback.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    vals = []
    for b, n in _batches(trials):
        rng = _batch_rng(seed, b)
        h = channel.complex_normal(rng, (n, K, Nt))
        q, cos = channel.sample_rvq_directions(h, bits, rng)
        quality = np.sum(np.abs(h) ** 2, axis=-1) * cos**2
        h_now = h if doppler is None else channel.evolve_channel(h, doppler, rng)
        for t in range(n):
            _, r = opportunistic_zf_baseline(q[t], quality[t], h_now[t], P, Nt, threshold)
            vals.append(r)
    v = np.asarray(vals)
    return Estimate(mean=float(v.mean()), std_error=float(v.std(ddof=1) / math.sqrt(v.size)), trials=v.size)


def budget_mode_rates(Nt: int, B_T: int, P: float,
                      doppler: Optional[channel.DopplerParams] = None) -> dict:
    """Analytic sum rate of every mode when mode ``M`` gets ``floor(B_T/M)`` bits per user.

    Modes left with zero bits per user are reported as ``nan``.
    """
    out = {}
    for M in range(1, Nt + 1):
        bits = feedback_budget_split(B_T, M)
        if bits < 1:
            out[M] = float("nan")
            continue
        out[M] = mode_sum_rate(M, P, Nt, ImperfectionParams.build(Nt, bits, doppler))
    return out


def mmt_zf_budget_rate(Nt: int, B_T: int, P: float, trials: int = 10_000, seed: int = 0,
                       doppler: Optional[channel.DopplerParams] = None) -> tuple[int, Estimate]:
    """MMT-ZF under a total feedback budget: each mode ``M`` gets
    ``floor(B_T/M)`` bits per user; the analytically best mode is simulated."""
    rates = budget_mode_rates(Nt, B_T, P, doppler)
    finite = {m: r for m, r in rates.items() if not math.isnan(r)}
    if not finite:
        raise ValueError("feedback budget leaves no mode with at least one bit per user")
    best_m = argmax_mode(finite)
    imp = ImperfectionParams.build(Nt, feedback_budget_split(B_T, best_m), doppler)
    est = simulate_sum_rate(SimScenario(Nt=Nt, M=best_m, P=P, imp=imp, trials=trials, seed=seed))
    return best_m, est
