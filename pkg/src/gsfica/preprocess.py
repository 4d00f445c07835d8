"""Centering, whitening and the symmetric inverse square root."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import IllConditionedError, InputError, InsufficientSampleError

EIG_FLOOR = 1e-12


class Centering(str, enum.Enum):
    EMPIRICAL = "empirical"
    EXACT = "exact"
    NONE = "none"


def inv_sqrt_sym(M, eps_floor: float = EIG_FLOOR) -> np.ndarray:
    """``M^(-1/2)`` for a symmetric positive definite ``M`` via ``eigh``.

    Raises :class:`IllConditionedError` if the smallest eigenvalue is below
    ``eps_floor`` times the largest.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"expected a square matrix, got shape {M.shape}")
    scale = max(np.abs(M).max(), 1e-300)
    if np.abs(M - M.T).max() > 1e-10 * scale:
        raise InputError("matrix is not symmetric")
    lam, U = np.linalg.eigh(0.5 * (M + M.T))
    if lam[-1] <= 0 or lam[0] <= eps_floor * lam[-1]:
        raise IllConditionedError(
            f"covariance is numerically singular: eigenvalues in [{lam[0]:.3g}, {lam[-1]:.3g}]"
        )
    S = (U / np.sqrt(lam)) @ U.T
    return 0.5 * (S + S.T)


@dataclass
class StandardizedData:
    X: np.ndarray
    C_hat: np.ndarray
    mean_used: np.ndarray
    mode: Centering
    whitener: np.ndarray  # C_hat^(-1/2)


def standardize(Y, mode: Centering | str = Centering.EMPIRICAL, mu=None) -> StandardizedData:
    """Center and whiten a ``d x N`` observation matrix.

    ``mode='empirical'`` uses the sample mean, ``'exact'`` the supplied true
    mean ``mu``, ``'none'`` no centering.  The covariance is always the
    ``1/N`` second moment around the mean actually used.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise InputError(f"expected a d x N matrix, got shape {Y.shape}")
    d, N = Y.shape
    if N <= d:
        raise InsufficientSampleError(f"need more samples than channels (N={N}, d={d})")
    mode = Centering(mode)
    if mode is Centering.EMPIRICAL:
        mean = Y.mean(axis=1)
    elif mode is Centering.EXACT:
        if mu is None:
            raise InputError("exact centering needs the true mean")
        mean = np.asarray(mu, dtype=float).reshape(d)
    else:
        mean = np.zeros(d)
    Yc = Y - mean[:, None]
    C = (Yc @ Yc.T) / N
    C = 0.5 * (C + C.T)
    S = inv_sqrt_sym(C)
    return StandardizedData(X=S @ Yc, C_hat=C, mean_used=mean, mode=mode, whitener=S)


def random_orthogonal(d: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a Gaussian matrix."""
    from .sources import rng

    Q, R = np.linalg.qr(rng(seed).standard_normal((d, d)))
    return Q * np.sign(np.diag(R))
