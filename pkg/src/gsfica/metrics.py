"""Gain matrix, signed-permutation alignment and the off-diagonal index."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass
class GainReport:
    G: np.ndarray
    sigma: tuple  # row i of G is matched to column sigma[i]
    signs: np.ndarray
    off_index: float
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "G": self.G.tolist(),
            "sigma": [int(k) for k in self.sigma],
            "signs": [int(s) for s in self.signs],
            "off_index": self.off_index,
            "warnings": list(self.warnings),
        }


def gain_matrix(B_hat, H) -> np.ndarray:
    """``B_hat @ H``: entry ``(i, j)`` is the weight of source ``j`` in output ``i``."""
    B_hat = np.asarray(B_hat, dtype=float)
    H = np.asarray(H, dtype=float)
    if B_hat.shape != H.shape or B_hat.ndim != 2:
        raise InputError(f"shape mismatch: B {B_hat.shape}, H {H.shape}")
    return B_hat @ H


def align(G) -> tuple[tuple, np.ndarray, list[str]]:
    """Greedy signed-permutation match of ``G``.

    Repeatedly takes the largest remaining ``|G[i, j]|``, assigns row ``i``
    to column ``j`` and removes both.  Ties go to the first entry in
    row-major order.  Returns ``(sigma, signs, warnings)``.
    """
    G = np.asarray(G, dtype=float)
    d = G.shape[0]
    if G.shape != (d, d):
        raise InputError(f"gain matrix must be square, got {G.shape}")
    warnings = [f"alignment is degenerate: row {i} of the gain matrix is zero" for i in range(d) if not np.any(G[i])]
    A = np.abs(G)
    free_r = np.ones(d, bool)
    free_c = np.ones(d, bool)
    sigma = [0] * d
    for _ in range(d):
        masked = np.where(free_r[:, None] & free_c[None, :], A, -1.0)
        i, j = np.unravel_index(int(np.argmax(masked)), A.shape)
        sigma[i] = int(j)
        free_r[i] = free_c[j] = False
    signs = np.array([1.0 if G[i, sigma[i]] >= 0 else -1.0 for i in range(d)])
    return tuple(sigma), signs, warnings


def off_index(G, sigma) -> float:
    """Squared Frobenius norm of ``G`` with entries ``(i, sigma[i])`` zeroed."""
    G = np.array(G, dtype=float)
    d = G.shape[0]
    if sorted(int(k) for k in sigma) != list(range(d)):
        raise InputError(f"sigma must be a permutation of 0..{d - 1}, got {tuple(sigma)}")
    G[np.arange(d), list(sigma)] = 0.0
    return float(np.sum(G * G))


def gain_report(B_hat, H) -> GainReport:
    G = gain_matrix(B_hat, H)
    sigma, signs, warnings = align(G)
    return GainReport(G, sigma, signs, off_index(G, sigma), warnings)
