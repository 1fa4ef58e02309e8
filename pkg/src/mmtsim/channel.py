"""
Gauss-Markov Rayleigh fading and random vector quantization (RVQ) feedback.

Channels are i.i.d. CN(0, 1) per antenna. Temporal correlation between the
fed-back channel and the one seen at transmission time follows a single
AR(1) step whose coefficient is the Clarke-fit correlation over the total
feedback delay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import bessel_j0, log_beta

__all__ = [
    "SPEED_OF_LIGHT",
    "MAX_CODEBOOK_BITS",
    "DopplerParams",
    "Codebook",
    "complex_normal",
    "doppler_correlation",
    "doppler_from_fdts",
    "evolve_channel",
    "rvq_codebook",
    "user_codebook",
    "quantize",
    "quantize_batch",
    "sample_rvq_directions",
    "expected_cos2",
    "expected_sin2",
    "quantization_error_mean",
]

SPEED_OF_LIGHT = 2.998e8
MAX_CODEBOOK_BITS = 24


@dataclass(frozen=True)
class DopplerParams:
    """Temporal correlation ``rho``, innovation variance ``eps_sq`` and ``fdTs``."""

    rho: float
    eps_sq: float
    fdTs: float

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if abs(self.eps_sq - (1.0 - self.rho**2)) > 1e-12:
            raise ValueError("eps_sq must equal 1 - rho^2")
        if self.fdTs < 0:
            raise ValueError("fdTs must be non-negative")

    @property
    def rho_sq(self) -> float:
        return self.rho**2


def doppler_from_fdts(fdTs: float) -> DopplerParams:
    """Correlation parameters for a given normalized Doppler frequency."""
    if fdTs < 0:
        raise ValueError("fdTs must be non-negative")
    rho = float(bessel_j0(2.0 * math.pi * fdTs))
    return DopplerParams(rho=rho, eps_sq=1.0 - rho * rho, fdTs=float(fdTs))


def doppler_correlation(v_kmh: float, fc: float, tau: float) -> DopplerParams:
    """Clarke-fit Gauss-Markov parameters.

    Parameters
    ----------
    v_kmh : float
        Terminal speed in km/h.
    fc : float
        Carrier frequency in Hz.
    tau : float
        Feedback delay (or symbol duration) in seconds.
    """
    if v_kmh < 0 or fc <= 0 or tau < 0:
        raise ValueError("need v >= 0, fc > 0, tau >= 0")
    fd = (v_kmh / 3.6) * fc / SPEED_OF_LIGHT
    return doppler_from_fdts(fd * tau)


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    scale = math.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def evolve_channel(h_prev: np.ndarray, params: DopplerParams, rng: np.random.Generator) -> np.ndarray:
    """One Gauss-Markov step ``h = rho * h_prev + e`` with ``e ~ CN(0, eps_sq I)``.

    Works on any array shape; every entry gets an independent innovation.
    """
    h_prev = np.asarray(h_prev)
    if params.eps_sq == 0.0:
        return params.rho * h_prev
    return params.rho * h_prev + complex_normal(rng, h_prev.shape, params.eps_sq)


@dataclass(frozen=True)
class Codebook:
    """A user's RVQ codebook: ``vectors`` has shape ``(2**B, Nt)``."""

    vectors: np.ndarray = field(repr=False)
    owner: int
    seed: int

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def nt(self) -> int:
        return self.vectors.shape[1]

    @property
    def bits(self) -> int:
        return int(round(math.log2(self.size)))


def rvq_codebook(Nt: int, B: int, seed: int, owner: int = 0) -> Codebook:
    """``2**B`` isotropic unit vectors in C^Nt, reproducible from ``seed``."""
    if Nt < 2:
        raise ValueError("Nt must be >= 2")
    if B < 0:
        raise ValueError("B must be >= 0")
    if B > MAX_CODEBOOK_BITS:
        raise ValueError(f"B={B} exceeds the {MAX_CODEBOOK_BITS}-bit codebook limit")
    rng = np.random.default_rng(seed)
    w = complex_normal(rng, (2**B, Nt))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    w.setflags(write=False)
    return Codebook(vectors=w, owner=owner, seed=seed)


def user_codebook(Nt: int, B: int, base_seed: int, user: int) -> Codebook:
    """Codebook for ``user``; distinct users get distinct seeds."""
    return rvq_codebook(Nt, B, base_seed ^ int(user), owner=user)


def quantize(h: np.ndarray, cb: Codebook) -> tuple[int, float]:
    """Index of the codeword with the largest ``|h~^H c|`` and that value."""
    h = np.asarray(h)
    nrm = np.linalg.norm(h)
    if nrm == 0:
        raise ValueError("cannot quantize a zero channel")
    corr = np.abs(cb.vectors.conj() @ (h / nrm))
    idx = int(np.argmax(corr))
    return idx, float(min(corr[idx], 1.0))


def quantize_batch(h: np.ndarray, cb: Codebook, chunk: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`quantize` over the leading axis of ``h`` (shape ``(T, Nt)``)."""
    h = np.asarray(h)
    hn = h / np.linalg.norm(h, axis=-1, keepdims=True)
    idx = np.empty(h.shape[0], dtype=np.int64)
    cos = np.empty(h.shape[0])
    cbc = cb.vectors.conj()
    for s in range(0, h.shape[0], chunk):
        corr = np.abs(hn[s:s + chunk] @ cbc.T)
        i = np.argmax(corr, axis=1)
        idx[s:s + chunk] = i
        cos[s:s + chunk] = np.minimum(corr[np.arange(len(i)), i], 1.0)
    return idx, cos


def sample_rvq_directions(h: np.ndarray, B: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw the RVQ-quantized direction of each row of ``h`` without a codebook search.

    Over the ensemble of random codebooks, ``|h~^H c|^2`` for one codeword
    is Beta(1, Nt-1), so ``cos^2`` of the best of ``2**B`` codewords has CDF
    ``(1 - (1 - x)^(Nt-1))^(2**B)``, and the winning codeword's component
    orthogonal to ``h~`` is isotropic. Both are sampled exactly here.

    Returns the quantized unit directions (same shape as ``h``) and ``cos``.
    """
    h = np.asarray(h)
    shape = h.shape
    nt = shape[-1]
    flat = h.reshape(-1, nt)
    n = flat.shape[0]
    hn = flat / np.linalg.norm(flat, axis=1, keepdims=True)
    u = rng.random(n)
    # 1 - U^(1/2^B), computed without cancellation
    one_minus = -np.expm1(np.log(u) / 2.0**B)
    sin2 = one_minus ** (1.0 / (nt - 1))
    cos = np.sqrt(np.clip(1.0 - sin2, 0.0, 1.0))
    g = complex_normal(rng, (n, nt))
    g -= hn * np.sum(hn.conj() * g, axis=1, keepdims=True)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    phase = np.exp(2j * np.pi * rng.random(n))[:, None]
    q = phase * (cos[:, None] * hn + np.sqrt(sin2)[:, None] * g)
    return q.reshape(shape), cos.reshape(shape[:-1])


def expected_cos2(Nt: int, B: int) -> float:
    """Mean squared cosine between a channel direction and its RVQ codeword.

    Equals ``1 - 2^B * beta(2^B, Nt/(Nt-1))``.
    """
    return 1.0 - expected_sin2(Nt, B)


def expected_sin2(Nt: int, B: float) -> float:
    """``2^B * beta(2^B, Nt/(Nt-1))``, the mean RVQ quantization error."""
    if Nt < 2:
        raise ValueError("Nt must be >= 2")
    if B < 0:
        raise ValueError("B must be >= 0")
    size = 2.0**B
    return math.exp(math.log(size) + log_beta(size, Nt / (Nt - 1.0)))


def quantization_error_mean(Nt: int, B: float) -> float:
    """Mean of the quantization interference term, ``2^(-B/(Nt-1))``."""
    if Nt < 2:
        raise ValueError("Nt must be >= 2")
    if B < 0:
        raise ValueError("B must be >= 0")
    return 2.0 ** (-B / (Nt - 1.0))

