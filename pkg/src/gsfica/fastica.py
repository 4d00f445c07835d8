"""One-unit, symmetric and generalized symmetric FastICA.

All engines operate on standardized data ``X`` (``d x N``).  Passing a
``weights`` vector turns every sample average into a weighted one; together
with :func:`theoretical_data` this gives the infinite-sample ("theoretical")
engine, where expectations are exact tensor-product quadratures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _ext
from .errors import DegenerateError, InputError, ParameterError, UnsupportedError
from .nonlinearity import Nonlinearity, parse_list
from .preprocess import standardize
from .sources import SourceSpec, quadrature_rule

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 1000
# |(H(W) W^T)_ii| below this at a failed run points at an alpha_i ~ 0 pairing.
DEGENERATE_ALPHA = 1e-6


@dataclass
class IterationConfig:
    nonlinearities: list
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    W0: np.ndarray | None = None

    def __post_init__(self):
        self.nonlinearities = parse_list(self.nonlinearities)
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")
        self.max_iter = int(self.max_iter)
        d = len(self.nonlinearities)
        if self.W0 is None:
            self.W0 = np.eye(d)
        W0 = np.asarray(self.W0, dtype=float)
        if W0.shape != (d, d):
            raise ParameterError(f"W0 must be {d}x{d}, got {W0.shape}")
        if np.abs(W0 @ W0.T - np.eye(d)).max() > 1e-8:
            raise ParameterError("W0 must be orthogonal (within 1e-8)")
        self.W0 = symmetric_orthogonalize(W0)


@dataclass
class SeparationResult:
    W: np.ndarray
    B: np.ndarray
    iterations: int
    converged: bool
    final_delta: float
    sign_vector: np.ndarray
    diagnostics: list[str] = field(default_factory=list)
    cos_gap: float = math.nan

    def to_dict(self) -> dict:
        return {
            "W": self.W.tolist(),
            "B": self.B.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "final_delta": self.final_delta,
            "cos_gap": self.cos_gap,
            "sign_vector": [int(s) for s in self.sign_vector],
            "diagnostics": list(self.diagnostics),
        }


# ---------------------------------------------------------------------------
# sample averages


def _averages(W, X, nls, weights=None):
    """``(E[g_i'(w_i.x)], E[g_i(w_i.x) x^T])`` as a vector and a matrix."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    X = np.asarray(X, dtype=float)
    if W.shape[1] != X.shape[0] or len(nls) != W.shape[0]:
        raise InputError(f"shape mismatch: W {W.shape}, X {X.shape}, {len(nls)} nonlinearities")
    codes = [nl.kernel_code for nl in nls]
    if weights is None and None not in codes:
        return _ext.accumulate(W, X, np.asarray(codes))
    Y = W @ X
    if weights is None:
        weights = np.full(X.shape[1], 1.0 / X.shape[1])
    gp = np.array([weights @ nl.gprime(Y[i]) for i, nl in enumerate(nls)])
    G = np.vstack([nl.g(Y[i]) for i, nl in enumerate(nls)])
    return gp, (G * weights) @ X.T


def empirical_H(W, X, nls, weights=None) -> np.ndarray:
    """Row ``i``: ``E[g_i'(w_i.x)] w_i - E[g_i(w_i.x) x]``."""
    W = np.asarray(W, dtype=float)
    gp, gx = _averages(W, X, nls, weights)
    return gp[:, None] * W - gx


def symmetric_orthogonalize(M) -> np.ndarray:
    """Orthogonal polar factor ``(M M^T)^(-1/2) M``, computed from the SVD."""
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M)
    if not s[-1] > 1e-12 * s[0]:
        raise DegenerateError(
            f"rank-deficient update (singular values {s[0]:.3g} .. {s[-1]:.3g}); "
            "a nonlinearity is probably degenerate for its source (alpha ~ 0)"
        )
    return U @ Vt


def fixed_point_map(W, X, nls, weights=None) -> np.ndarray:
    return symmetric_orthogonalize(empirical_H(W, X, nls, weights))


# ---------------------------------------------------------------------------
# engines


def generalized_symmetric(X, cfg, *, whitener=None, weights=None) -> SeparationResult:
    """Iterate ``W <- F(W)`` until the sign-aligned step is below ``cfg.tol``.

    The step is ``||W_new - L W||_F`` with ``L = diag(sign((W_new W^T)_ii))``,
    so the flip between ``w`` and ``-w`` does not count as movement.  It is
    measured directly rather than through ``1 - |cos|``, which cannot resolve
    steps much below 1e-8.  ``cfg`` is an :class:`IterationConfig` or just a
    list of nonlinearities.  Non-convergence is reported, not raised.
    """
    if not isinstance(cfg, IterationConfig):
        cfg = IterationConfig(cfg)
    X = np.asarray(X, dtype=float)
    nls = cfg.nonlinearities
    d = len(nls)
    if X.ndim != 2 or X.shape[0] != d:
        raise InputError(f"data has shape {X.shape}, expected {d} rows")
    W = cfg.W0.copy()
    delta = math.inf
    c = np.ones(d)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        try:
            W_new = fixed_point_map(W, X, nls, weights)
        except DegenerateError as exc:
            report = _degeneracy_report(W, X, nls, weights)
            raise DegenerateError("; ".join([str(exc)] + report)) from None
        c = np.einsum("ij,ij->i", W_new, W)
        lam = np.where(c < 0, -1.0, 1.0)
        delta = float(np.linalg.norm(W_new - lam[:, None] * W))
        W = W_new
        if delta < cfg.tol:
            converged = True
            break
    diagnostics = []
    if not converged:
        diagnostics.append(f"no convergence after {it} iterations (delta={delta:.3g})")
        diagnostics += _degeneracy_report(W, X, nls, weights)
    S = np.eye(d) if whitener is None else np.asarray(whitener)
    return SeparationResult(
        W=W,
        B=W @ S,
        iterations=it,
        converged=converged,
        final_delta=delta,
        sign_vector=np.where(c < 0, -1.0, 1.0),
        diagnostics=diagnostics,
        cos_gap=float(1.0 - np.abs(c).min()),
    )


def _degeneracy_report(W, X, nls, weights):
    diag = np.einsum("ij,ij->i", empirical_H(W, X, nls, weights), W)
    return [
        f"nonlinearity degenerate for source: row {i} ({nls[i]}) has |E[g'] - E[g(y)y]| = {abs(v):.2e}"
        for i, v in enumerate(diag)
        if abs(v) < DEGENERATE_ALPHA
    ]


def symmetric(X, nl, W0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, **kw) -> SeparationResult:
    """Classical symmetric FastICA: one nonlinearity shared by all rows."""
    d = np.asarray(X).shape[0]
    nl = nl if isinstance(nl, Nonlinearity) else Nonlinearity.from_json(nl)
    return generalized_symmetric(X, IterationConfig([nl] * d, tol, max_iter, W0), **kw)


@dataclass
class OneUnitResult:
    w: np.ndarray
    iterations: int
    converged: bool
    final_delta: float


def one_unit(
    X, nl, w0, deflation_basis=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, weights=None
) -> OneUnitResult:
    """One-unit fixed point ``w <- E[g'(w.x)] w - E[g(w.x) x]``, normalized.

    Rows of ``deflation_basis`` are previously extracted vectors; their
    span is projected out after every update.
    """
    nl = nl if isinstance(nl, Nonlinearity) else Nonlinearity.from_json(nl)
    X = np.asarray(X, dtype=float)
    P = None
    if deflation_basis is not None and len(deflation_basis):
        A = np.atleast_2d(np.asarray(deflation_basis, dtype=float))
        P = np.eye(X.shape[0]) - A.T @ A

    def project(v):
        v = v if P is None else P @ v
        n = np.linalg.norm(v)
        if not n > 1e-12:
            raise DegenerateError("one-unit update vanished after deflation")
        return v / n

    w = project(np.asarray(w0, dtype=float))
    delta = math.inf
    for it in range(1, max_iter + 1):
        gp, gx = _averages(w[None, :], X, [nl], weights)
        w_new = project(gp[0] * w - gx[0])
        delta = float(np.linalg.norm(w_new - np.copysign(1.0, w_new @ w) * w))
        w = w_new
        if delta < tol:
            return OneUnitResult(w, it, True, delta)
    return OneUnitResult(w, max_iter, False, delta)


def one_unit_deflation(
    X, nls, W0=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, *, whitener=None, weights=None
) -> SeparationResult:
    """Deflationary extraction: row ``i`` uses ``nls[i]`` started from ``W0[i]``."""
    X = np.asarray(X, dtype=float)
    d = X.shape[0]
    nls = parse_list(nls, d)
    W0 = np.eye(d) if W0 is None else np.asarray(W0, dtype=float)
    rows, iters, ok, worst = [], 0, True, 0.0
    diagnostics = []
    for i in range(d):
        r = one_unit(X, nls[i], W0[i], rows if rows else None, tol, max_iter, weights)
        rows.append(r.w)
        iters = max(iters, r.iterations)
        worst = max(worst, r.final_delta)
        if not r.converged:
            ok = False
            diagnostics.append(f"row {i} did not converge (delta={r.final_delta:.3g})")
    W = np.vstack(rows)
    S = np.eye(d) if whitener is None else np.asarray(whitener)
    return SeparationResult(W, W @ S, iters, ok, worst, np.ones(d), diagnostics)


def separate(Y, nls, centering="empirical", mu=None, **kw) -> SeparationResult:
    """Standardize raw observations ``Y`` and run the generalized engine."""
    data = standardize(Y, centering, mu)
    d = data.X.shape[0]
    cfg = IterationConfig(parse_list(nls, d), **kw)
    return generalized_symmetric(data.X, cfg, whitener=data.whitener)


# ---------------------------------------------------------------------------
# fixed-point diagnostics


def detect_signs(W, X, nls, weights=None) -> np.ndarray:
    """Sign matrix ``diag(sign((F(W) W^T)_ii))`` closest to the update."""
    F = fixed_point_map(W, X, nls, weights)
    return np.where(np.einsum("ij,ij->i", F, W) < 0, -1.0, 1.0)


def fixed_point_residual(W, X, nls, weights=None) -> float:
    """``min over sign matrices L of ||F(W) - L W||_F``."""
    W = np.asarray(W, dtype=float)
    F = fixed_point_map(W, X, nls, weights)
    lam = np.where(np.einsum("ij,ij->i", F, W) < 0, -1.0, 1.0)
    return float(np.linalg.norm(F - lam[:, None] * W))


def symmetry_defect(W, X, nls, signs, weights=None) -> float:
    """``||M - M^T||_F`` for ``M = E[g~(W x) x^T] W^T`` with ``g~_i = signs_i g_i``."""
    W = np.asarray(W, dtype=float)
    _, gx = _averages(W, X, nls, weights)
    M = (np.asarray(signs, dtype=float)[:, None] * gx) @ W.T
    return float(np.linalg.norm(M - M.T))


def local_contrast(W, X, nls, signs, weights=None) -> float:
    """Sign-corrected contrast ``sum_i signs_i E[G_i(w_i.x)]``."""
    W = np.asarray(W, dtype=float)
    Y = W @ np.asarray(X, dtype=float)
    vals = [nl.G(Y[i]) for i, nl in enumerate(nls)]
    means = [v.mean() if weights is None else weights @ v for v in vals]
    return float(np.dot(signs, means))


def rotation(phi: float, chi: float) -> np.ndarray:
    """Two-angle family of 3x3 orthogonal matrices with ``rotation(0, 0) = I``."""
    cp, sp, cc, sc = math.cos(phi), math.sin(phi), math.cos(chi), math.sin(chi)
    return np.array(
        [
            [cp, -sp * cc, sp * sc],
            [sp, cp * cc, -cp * sc],
            [0.0, sc, cc],
        ]
    )


def contrast_surface(phi_grid, chi_grid, X, nls, signs=None, weights=None) -> np.ndarray:
    """Contrast at ``rotation(phi, chi)`` over a grid; rows index ``phi``.

    ``signs=None`` gives the uncorrected sum (all +1).
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] != 3:
        raise UnsupportedError(f"the two-angle parametrization needs d = 3, got d = {X.shape[0]}")
    s = np.ones(3) if signs is None else np.asarray(signs, dtype=float)
    out = np.empty((len(phi_grid), len(chi_grid)))
    for a, phi in enumerate(phi_grid):
        for b, chi in enumerate(chi_grid):
            out[a, b] = local_contrast(rotation(phi, chi), X, nls, s, weights)
    return out


def contrast_hessian(X, nls, signs=None, h=1e-2, weights=None) -> np.ndarray:
    """Central finite-difference Hessian of the contrast at ``(phi, chi) = (0, 0)``."""
    s = np.ones(3) if signs is None else signs

    def J(p, c):
        return local_contrast(rotation(p, c), X, nls, s, weights)

    j0 = J(0.0, 0.0)
    hpp = (J(h, 0) - 2 * j0 + J(-h, 0)) / h**2
    hcc = (J(0, h) - 2 * j0 + J(0, -h)) / h**2
    hpc = (J(h, h) - J(h, -h) - J(-h, h) + J(-h, -h)) / (4 * h**2)
    return np.array([[hpp, hpc], [hpc, hcc]])


# ---------------------------------------------------------------------------
# infinite-sample engine


def theoretical_data(specs, A=None, n_nodes: int = 48):
    """Weighted point set whose averages equal expectations of ``x = A z``.

    Returns ``(X, weights)``; pass them to any engine above (``weights=``)
    to run the theoretical algorithm.  Cost grows as ``(2 n_nodes)^d``.
    """
    specs = [s if isinstance(s, SourceSpec) else SourceSpec.from_dict(s) for s in specs]
    d = len(specs)
    rules = [quadrature_rule(s, n_nodes) for s in specs]
    Z = np.vstack([g.ravel() for g in np.meshgrid(*[r[0] for r in rules], indexing="ij")])
    w = np.ones(Z.shape[1])
    for g in np.meshgrid(*[r[1] for r in rules], indexing="ij"):
        w *= g.ravel()
    A = np.eye(d) if A is None else np.asarray(A, dtype=float)
    return A @ Z, w / w.sum()
