"""
Linear transmit precoders: eigen-beamforming, zero-forcing and regularized ZF.

All builders accept the stacked user rows ``H`` (shape ``(M, Nt)``, row ``u``
is the channel or direction ``h_u`` of user ``u``) and return unit-norm
precoding vectors as the columns of an ``(Nt, M)`` matrix, designed against
the effective channel matrix whose rows are ``h_u^H``. The ``*_batch`` variants
operate on a leading trial axis and are what the Monte Carlo engine uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CONDITION_LIMIT",
    "PrecoderConditioningError",
    "PrecoderSet",
    "eigen_bf",
    "zf_precoders",
    "mmse_precoders",
    "zf_batch",
    "mmse_batch",
]

CONDITION_LIMIT = 1e8


class PrecoderConditioningError(np.linalg.LinAlgError):
    """The stacked directions are (nearly) rank deficient."""


@dataclass(frozen=True)
class PrecoderSet:
    vectors: np.ndarray  # (Nt, M), unit-norm columns
    kind: str

    @property
    def M(self) -> int:
        return self.vectors.shape[1]


def _normalize_columns(F: np.ndarray) -> np.ndarray:
    return F / np.linalg.norm(F, axis=-2, keepdims=True)


def eigen_bf(h: np.ndarray) -> PrecoderSet:
    """Single-user beamformer along the channel direction."""
    h = np.asarray(h, dtype=complex).reshape(-1)
    nrm = np.linalg.norm(h)
    if nrm == 0:
        raise ValueError("cannot beamform on a zero channel")
    return PrecoderSet(vectors=(h / nrm)[:, None], kind="eigen")


def _pinv_checked(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # rows h_u -> effective matrix with rows h_u^H; SVD doubles as the rank check
    U, s, Vh = np.linalg.svd(np.conj(H), full_matrices=False)
    cond = s[..., 0] / s[..., -1]
    bad = ~(cond < CONDITION_LIMIT)
    F = np.conj(np.swapaxes(Vh, -1, -2)) @ (np.conj(np.swapaxes(U, -1, -2)) / s[..., :, None])
    return F, bad


def zf_batch(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero-forcing precoders for a batch ``H`` of shape ``(T, M, Nt)``.

    Returns ``(F, bad)``: ``F`` has shape ``(T, Nt, M)`` with unit-norm
    columns, ``bad`` flags trials whose condition number exceeds
    :data:`CONDITION_LIMIT` (their precoders must not be used).
    """
    F, bad = _pinv_checked(np.asarray(H))
    return _normalize_columns(F), bad


def zf_precoders(directions: np.ndarray) -> PrecoderSet:
    """Normalized pseudo-inverse columns of the stacked directions.

    Raises
    ------
    PrecoderConditioningError
        If the direction matrix has condition number above ``CONDITION_LIMIT``.
    """
    H = np.atleast_2d(np.asarray(directions, dtype=complex))
    M, nt = H.shape
    if not 1 < M <= nt:
        raise ValueError(f"zero-forcing needs 1 < M <= Nt, got M={M}, Nt={nt}")
    F, bad = _pinv_checked(H)
    if bad:
        raise PrecoderConditioningError("direction matrix is ill-conditioned")
    return PrecoderSet(vectors=_normalize_columns(F), kind="zero_forcing")


def mmse_batch(H: np.ndarray, P: float) -> np.ndarray:
    """Regularized ZF ``H^H (H H^H + (M/P) I)^-1`` with normalized columns."""
    H = np.asarray(H)
    M = H.shape[-2]
    A = np.conj(H)
    Ah = np.swapaxes(H, -1, -2)
    G = A @ Ah + (M / P) * np.eye(M)
    F = Ah @ np.linalg.inv(G)
    return _normalize_columns(F)


def mmse_precoders(directions: np.ndarray, P: float) -> PrecoderSet:
    """MMSE (regularized zero-forcing) precoders at total SNR ``P``.

    The rows may be unit directions or full channel vectors; the regularizer
    keeps the inverse well defined either way.
    """
    H = np.atleast_2d(np.asarray(directions, dtype=complex))
    M, nt = H.shape
    if not 1 < M <= nt:
        raise ValueError(f"MMSE precoding needs 1 < M <= Nt, got M={M}, Nt={nt}")
    if not P > 0:
        raise ValueError("P must be positive")
    return PrecoderSet(vectors=mmse_batch(H, P), kind="mmse")
