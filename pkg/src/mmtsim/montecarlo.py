"""
Monte Carlo ergodic-rate estimation for the delayed, quantized ZF/MMSE downlink.

Each trial draws the fed-back channels ``h[n-1]``, quantizes their
directions, builds the precoders from the quantized directions, moves the
channels one Gauss-Markov step to ``h[n]`` and evaluates the exact SINR of
every active user. Trials run in fixed-size batches, each batch seeded from
``(seed, batch index)``, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import channel, precoding
from .rates import ImperfectionParams

__all__ = [
    "BATCH_SIZE",
    "MAX_REDRAW_FRACTION",
    "CODEBOOK_SEARCH_MAX_BITS",
    "NumericalFailure",
    "SimScenario",
    "Estimate",
    "simulate_sum_rate",
    "simulate_sinr_samples",
    "draw_trials",
]

BATCH_SIZE = 2000
MAX_REDRAW_FRACTION = 1e-3
CODEBOOK_SEARCH_MAX_BITS = 10


class NumericalFailure(RuntimeError):
    """Too many trials had to be redrawn because of ill-conditioned precoders."""


@dataclass(frozen=True)
class SimScenario:
    """One Monte Carlo operating point.

    ``quantizer`` selects how RVQ feedback is produced: ``"codebook"``
    searches explicit per-user codebooks (redrawn every batch, so the
    estimate averages over the codebook ensemble), ``"statistical"`` samples
    the quantized direction from its exact ensemble distribution, ``"auto"``
    searches codebooks up to ``CODEBOOK_SEARCH_MAX_BITS`` bits.
    """

    Nt: int
    M: int
    P: float
    imp: ImperfectionParams = field(default_factory=ImperfectionParams.perfect)
    precoder: str = "zf"
    trials: int = 10_000
    seed: int = 0
    quantizer: str = "auto"
    workers: int = 1

    def __post_init__(self):
        if not 1 <= self.M <= self.Nt:
            raise ValueError("need 1 <= M <= Nt")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.P > 0:
            raise ValueError("P must be positive")
        if self.precoder not in ("zf", "mmse"):
            raise ValueError(f"unknown precoder {self.precoder!r}")
        if self.quantizer not in ("auto", "codebook", "statistical"):
            raise ValueError(f"unknown quantizer {self.quantizer!r}")

    @property
    def quantizer_mode(self) -> str:
        if math.isinf(self.imp.B):
            return "none"
        if self.quantizer == "auto":
            return "codebook" if self.imp.B <= CODEBOOK_SEARCH_MAX_BITS else "statistical"
        return self.quantizer


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    trials: int
    redraws: int = 0


def _batch_rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(batch)]))


def _quantized_directions(sc: SimScenario, h_prev: np.ndarray, rng, batch: int) -> np.ndarray:
    mode = sc.quantizer_mode
    hn = h_prev / np.linalg.norm(h_prev, axis=-1, keepdims=True)
    if mode == "none":
        return hn
    if mode == "statistical":
        q, _ = channel.sample_rvq_directions(h_prev, int(sc.imp.B), rng)
        return q
    out = np.empty_like(h_prev)
    for u in range(sc.M):
        cb_seed = int(np.random.SeedSequence([int(sc.seed), batch, u]).generate_state(1)[0])
        cb = channel.rvq_codebook(sc.Nt, int(sc.imp.B), cb_seed, owner=u)
        idx, _ = channel.quantize_batch(h_prev[:, u, :], cb)
        out[:, u, :] = cb.vectors[idx]
    return out


def _precoders(sc: SimScenario, rows: np.ndarray):
    """Precoders for a batch of stacked rows; returns ``(F, bad)``."""
    T = rows.shape[0]
    if sc.M == 1:
        f = rows / np.linalg.norm(rows, axis=-1, keepdims=True)
        return np.swapaxes(f, -1, -2), np.zeros(T, dtype=bool)
    if sc.precoder == "mmse":
        return precoding.mmse_batch(rows, sc.P), np.zeros(T, dtype=bool)
    return precoding.zf_batch(rows)


def draw_trials(sc: SimScenario, n: int, rng: np.random.Generator, batch: int = 0) -> dict:
    """Draw ``n`` trials and return the raw per-trial quantities.

    Keys: ``sinr`` ``(n, M)``, ``signal`` ``|h_u[n]^H f_u|^2``,
    ``stale_interference`` ``|h_u[n-1]^H f_v|^2`` and
    ``delay_interference`` ``|e_u^H f_v|^2`` (both ``(n, M, M-1)``), plus the
    count of redrawn trials under ``redraws``.
    """
    M, Nt = sc.M, sc.Nt
    rho = math.sqrt(sc.imp.rho_sq)
    h_prev = channel.complex_normal(rng, (n, M, Nt))
    perfect = sc.imp.is_perfect
    if perfect:
        rows = h_prev if sc.precoder == "mmse" else h_prev / np.linalg.norm(h_prev, axis=-1, keepdims=True)
    else:
        rows = _quantized_directions(sc, h_prev, rng, batch)
    F, bad = _precoders(sc, rows)
    redraws = 0
    while np.any(bad):
        idx = np.flatnonzero(bad)
        redraws += idx.size
        if redraws > MAX_REDRAW_FRACTION * max(sc.trials, n) + 1:
            raise NumericalFailure(f"{redraws} ill-conditioned precoder draws")
        h_new = channel.complex_normal(rng, (idx.size, M, Nt))
        h_prev[idx] = h_new
        if perfect:
            rows_new = h_new / np.linalg.norm(h_new, axis=-1, keepdims=True)
        else:
            rows_new = _quantized_directions(sc, h_new, rng, batch)
        rows[idx] = rows_new
        F_new, bad_new = _precoders(sc, rows_new)
        F[idx] = F_new
        bad = np.zeros(n, dtype=bool)
        bad[idx] = bad_new

    if perfect or sc.imp.eps_sq == 0.0:
        e = np.zeros_like(h_prev)
    else:
        e = channel.complex_normal(rng, h_prev.shape, sc.imp.eps_sq)
    h_now = rho * h_prev + e if not perfect else h_prev

    # G[t, u, v] = |h_u^H f_v|^2
    G = np.abs(np.conj(h_now) @ F) ** 2
    diag = np.einsum("tuu->tu", G)
    interf = G.sum(axis=2) - diag
    pm = sc.P / M
    sinr = pm * diag / (1.0 + pm * interf)
    out = {"sinr": sinr, "signal": diag, "redraws": redraws}
    if M > 1:
        off = ~np.eye(M, dtype=bool)
        stale = np.abs(np.conj(h_prev) @ F) ** 2
        dly = np.abs(np.conj(e) @ F) ** 2
        out["stale_interference"] = stale[:, off].reshape(n, M, M - 1)
        out["delay_interference"] = dly[:, off].reshape(n, M, M - 1)
    return out


def _run_batch(args):
    sc, b, n = args
    rng = _batch_rng(sc.seed, b)
    d = draw_trials(sc, n, rng, batch=b)
    r = np.log2(1.0 + d["sinr"]).sum(axis=1)
    return float(r.sum()), float(np.dot(r, r)), n, d["redraws"]


def _batches(trials: int):
    nb = -(-trials // BATCH_SIZE)
    return [(b, min(BATCH_SIZE, trials - b * BATCH_SIZE)) for b in range(nb)]


def simulate_sum_rate(sc: SimScenario, workers: Optional[int] = None) -> Estimate:
    """Mean sum rate ``E[sum_u log2(1 + SINR_u)]`` with its standard error."""
    workers = sc.workers if workers is None else workers
    jobs = [(sc, b, n) for b, n in _batches(sc.trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_batch, jobs))
    else:
        parts = [_run_batch(j) for j in jobs]
    s = ss = 0.0
    cnt = redraws = 0
    for ps, pss, n, rd in parts:
        s += ps
        ss += pss
        cnt += n
        redraws += rd
    if redraws > MAX_REDRAW_FRACTION * cnt:
        raise NumericalFailure(f"{redraws} of {cnt} trials needed redrawing")
    mean = s / cnt
    var = max(ss / cnt - mean * mean, 0.0) * cnt / max(cnt - 1, 1)
    return Estimate(mean=mean, std_error=math.sqrt(var / cnt), trials=cnt, redraws=redraws)


def simulate_sinr_samples(sc: SimScenario, count: int) -> dict:
    """Raw per-trial samples (see :func:`draw_trials`) for ``count`` trials."""
    sc = replace(sc, trials=count)
    parts = []
    for b, n in _batches(count):
        parts.append(draw_trials(sc, n, _batch_rng(sc.seed, b), batch=b))
    out = {}
    for key in parts[0]:
        if key == "redraws":
            out[key] = sum(p[key] for p in parts)
        else:
            out[key] = np.concatenate([p[key] for p in parts])
    return out
