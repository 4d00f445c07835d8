"""Closed-form asymptotic statistics of the FastICA estimators.

Everything here is driven by per-row moment functionals computed by
quadrature against the known source densities.  Row ``i`` of the demixing
matrix pairs nonlinearity ``g_i`` with source ``sigma[i]``.

Sign conventions
----------------
Covariance denominators use ``|alpha_i| + |alpha_j|``, which is what the
sign-corrected nonlinearities ``g~_i = sign(alpha_i) g_i`` produce.  Signed
quantities that survive in the exact-centering covariance (``eta``, the
third-moment cross term) are likewise taken for ``g~``.

The gain-entry Cramer-Rao bound is ``kappa_j / (kappa_i kappa_j - 1)``.
That index order is the one for which optimal nonlinearities reproduce the
bound exactly; the transposed form ``kappa_i / (kappa_i kappa_j - 1)`` also
appears in the literature for the same quantity.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, InputError, NonIdentifiableError, NumericError
from .nonlinearity import Nonlinearity, parse_list
from .sources import SourceSpec, expect, fisher_kappa, moment, sample

ALPHA_EPS = 1e-9


class Variant(str, enum.Enum):
    GENERALIZED_EMPIRICAL = "generalized_empirical_centering"
    EXACT = "exact_centering"
    SYMMETRIC_LEGACY = "symmetric_legacy"
    ONE_UNIT = "one_unit"


@dataclass
class MomentFunctionals:
    """Per-row functionals; index ``i`` is the nonlinearity/row index."""

    specs: list
    nls: list
    sigma: tuple
    orientation: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray
    tau: np.ndarray
    kappa: np.ndarray
    third: np.ndarray
    stderr: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.nls)

    @property
    def sign(self) -> np.ndarray:
        return np.where(self.alpha < 0, -1.0, 1.0)

    @property
    def lam(self) -> np.ndarray:
        """``lam[i, j] = E[g~_i'(z)] - E[g~_j(z) z]`` (sign-corrected)."""
        s = self.sign
        gp = s * (self.alpha + self.gamma)  # E[g~']
        gz = s * self.gamma  # E[g~ z]
        return gp[:, None] - gz[None, :]

    def to_dict(self) -> dict:
        return {
            "sigma": [int(k) for k in self.sigma],
            "sources": [str(self.specs[k]) for k in self.sigma],
            "nonlinearities": [str(n) for n in self.nls],
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "eta": self.eta.tolist(),
            "tau": self.tau.tolist(),
            "kappa": [None if not np.isfinite(k) else float(k) for k in self.kappa],
            "third_moment": self.third.tolist(),
        }


def _kappa_or_inf(spec):
    try:
        return fisher_kappa(spec)
    except NumericError:
        return math.inf


def moment_functionals(
    specs, nls, sigma=None, orientation=None, method: str = "quad", n_mc: int = 10**7, seed: int = 0
) -> MomentFunctionals:
    """Functionals ``alpha, beta, gamma, eta, tau, kappa`` for each row.

    ``sigma[i]`` is the source extracted by row ``i`` (identity by default)
    and ``orientation[i]`` = +-1 the sign with which it is extracted.
    ``method='mc'`` replaces quadrature by an ``n_mc``-sample average and
    fills ``stderr``; it exists as an independent cross-check.
    """
    specs = [s if isinstance(s, SourceSpec) else SourceSpec.from_dict(s) for s in specs]
    d = len(specs)
    nls = parse_list(nls, d)
    sigma = tuple(range(d)) if sigma is None else tuple(int(k) for k in sigma)
    if sorted(sigma) != list(range(d)):
        raise InputError(f"sigma must be a permutation of 0..{d - 1}, got {sigma}")
    o = np.ones(d) if orientation is None else np.asarray(orientation, dtype=float)

    alpha, beta, gamma, eta = (np.empty(d) for _ in range(4))
    stderr = {}
    for i, nl in enumerate(nls):
        spec, s = specs[sigma[i]], o[i]
        if method == "quad":
            gp = expect(spec, lambda x: nl.gprime(s * x), extra_points=[s * p for p, _ in nl.jumps()])
            gp += sum(j * float(spec.pdf(s * p)) for p, j in nl.jumps())
            gz = expect(spec, lambda x: nl.g(s * x) * s * x)
            beta[i] = expect(spec, lambda x: nl.g(s * x) ** 2)
            eta[i] = expect(spec, lambda x: nl.g(s * x))
        elif method == "mc":
            u = s * sample(spec, n_mc, seed + 7919 * i)
            gu = nl.g(u)
            a_terms = nl.gprime(u) - gu * u
            gp = float(np.mean(nl.gprime(u)))
            gz = float(np.mean(gu * u))
            beta[i] = float(np.mean(gu**2))
            eta[i] = float(np.mean(gu))
            root = math.sqrt(n_mc)
            stderr.setdefault("alpha", np.zeros(d))[i] = a_terms.std() / root
            stderr.setdefault("beta", np.zeros(d))[i] = (gu**2).std() / root
            stderr.setdefault("gamma", np.zeros(d))[i] = (gu * u).std() / root
            stderr.setdefault("eta", np.zeros(d))[i] = gu.std() / root
        else:
            raise InputError(f"unknown method {method!r}")
        gamma[i] = gz
        alpha[i] = gp - gz
    tau = np.array([(moment(specs[k], 4) - 1.0) / 4.0 for k in sigma])
    kappa = np.array([_kappa_or_inf(specs[k]) for k in sigma])
    third = np.array([o[i] * moment(specs[k], 3) for i, k in enumerate(sigma)])
    return MomentFunctionals(
        specs, nls, sigma, o, alpha, beta, gamma, eta, tau, kappa, third, stderr
    )


def local_contrast_signs(f: MomentFunctionals) -> np.ndarray:
    """``sign(alpha_i)`` per row; raises on a degenerate pairing."""
    for i, a in enumerate(f.alpha):
        if abs(a) <= ALPHA_EPS:
            raise DegenerateError(
                f"nonlinearity {f.nls[i]} is degenerate for source {f.specs[f.sigma[i]]} "
                f"(alpha = {a:.3g})"
            )
    return f.sign


def _denominator(f, i, j):
    den = abs(f.alpha[i]) + abs(f.alpha[j])
    if not den > ALPHA_EPS:
        raise DegenerateError(
            f"|alpha_{i}| + |alpha_{j}| = 0: rows {i} ({f.nls[i]}) and {j} ({f.nls[j]}) are degenerate"
        )
    return den


def _offdiag(f, i, j, with_eta: bool):
    num = f.beta[i] - f.gamma[i] ** 2 + f.beta[j] - f.gamma[j] ** 2 + f.alpha[j] ** 2
    if with_eta:
        num -= f.eta[i] ** 2 + f.eta[j] ** 2
    return num / _denominator(f, i, j) ** 2


def _rows(B, d):
    B = np.asarray(B, dtype=float)
    if B.shape != (d, d):
        raise InputError(f"B must be {d}x{d}, got {B.shape}")
    return B


def cov_generalized(f: MomentFunctionals, B, i: int) -> np.ndarray:
    """Asymptotic covariance of ``sqrt(N) (b_i_hat - b_i)`` with empirical centering."""
    B = _rows(B, f.d)
    R = f.tau[i] * np.outer(B[i], B[i])
    for j in range(f.d):
        if j != i:
            R += _offdiag(f, i, j, with_eta=True) * np.outer(B[j], B[j])
    return R


def cov_exact_centering(f: MomentFunctionals, B, i: int, third_moments=None) -> np.ndarray:
    """Covariance of row ``i`` when the true mean is used for centering."""
    B = _rows(B, f.d)
    m3 = f.third if third_moments is None else np.asarray(third_moments, dtype=float)
    eta_t = f.sign * f.eta
    R = f.tau[i] * np.outer(B[i], B[i])
    v = np.zeros(f.d)
    for j in range(f.d):
        if j == i:
            continue
        den = _denominator(f, i, j)
        num = f.beta[i] - f.gamma[i] ** 2 + f.beta[j] - f.gamma[j] ** 2 + f.alpha[j] ** 2
        num -= f.eta[j] ** 2
        R += num / den**2 * np.outer(B[j], B[j])
        v += eta_t[j] / den * B[j]
        cross = np.outer(B[j], B[i])
        R -= m3[i] * eta_t[j] / (2.0 * den) * (cross + cross.T)
    return R + np.outer(v, v)


def cov_oneunit_deflation(f: MomentFunctionals, B, i: int) -> np.ndarray:
    """Covariance of the ``i``-th vector extracted by deflationary one-unit FastICA."""
    B = _rows(B, f.d)
    R = f.tau[i] * np.outer(B[i], B[i])
    for j in range(f.d):
        if j == i:
            continue
        a = j if j < i else i
        if abs(f.alpha[a]) <= ALPHA_EPS:
            raise DegenerateError(f"alpha_{a} = {f.alpha[a]:.3g} is degenerate")
        num = f.beta[a] - f.gamma[a] ** 2 - f.eta[a] ** 2
        if j < i:
            num += f.alpha[j] ** 2
        R += num / f.alpha[a] ** 2 * np.outer(B[j], B[j])
    return R


def trace_oneunit(f: MomentFunctionals, i: int, c: float = 1.0) -> float:
    """``c (beta_i - gamma_i^2) / alpha_i^2``; ``c`` depends only on the mixing."""
    if abs(f.alpha[i]) <= ALPHA_EPS:
        raise DegenerateError(f"alpha_{i} = {f.alpha[i]:.3g} is degenerate")
    return c * (f.beta[i] - f.gamma[i] ** 2) / f.alpha[i] ** 2


def gain_variance(f: MomentFunctionals, variant, i: int, j: int) -> float:
    """Asymptotic variance of ``sqrt(N) G_hat[i, sigma[j]]``."""
    variant = Variant(variant)
    if i == j:
        return float(f.tau[i])
    if variant is Variant.GENERALIZED_EMPIRICAL:
        return float(_offdiag(f, i, j, with_eta=True))
    if variant in (Variant.EXACT, Variant.SYMMETRIC_LEGACY):
        return float(_offdiag(f, i, j, with_eta=False))
    if abs(f.alpha[i]) <= ALPHA_EPS:
        raise DegenerateError(f"alpha_{i} = {f.alpha[i]:.3g} is degenerate")
    return float((f.beta[i] - f.gamma[i] ** 2) / f.alpha[i] ** 2)


def gain_variance_matrix(f: MomentFunctionals, variant) -> np.ndarray:
    """All variances laid out like the gain matrix: entry ``[i, sigma[j]]``."""
    V = np.empty((f.d, f.d))
    for i in range(f.d):
        for j in range(f.d):
            V[i, f.sigma[j]] = gain_variance(f, variant, i, j)
    return V


def off_sum(V, sigma) -> float:
    """``sum_{i != j} V[i, sigma[j]]``: the limit of ``N E||off(G_hat)||_F^2``."""
    d = len(sigma)
    return float(sum(V[i, sigma[j]] for i in range(d) for j in range(d) if i != j))


def crb_gain(kappa_i: float, kappa_j: float) -> float:
    """Cramer-Rao bound ``kappa_j / (kappa_i kappa_j - 1)`` for a gain entry."""
    if not kappa_i * kappa_j > 1.0 + 1e-12:
        raise NonIdentifiableError(
            f"kappa_i * kappa_j = {kappa_i * kappa_j:.6g} <= 1: the pair is not identifiable"
        )
    return 1.0 / (kappa_i - 1.0 / kappa_j)


def crb_matrix(kappas) -> np.ndarray:
    """``[i, j] = crb_gain(kappa_i, kappa_j)`` off the diagonal, NaN where undefined."""
    k = np.asarray(kappas, dtype=float)
    d = len(k)
    out = np.full((d, d), np.nan)
    for i, j in itertools.permutations(range(d), 2):
        try:
            out[i, j] = crb_gain(k[i], k[j])
        except NonIdentifiableError:
            pass
    return out


def optimal_nonlinearities(specs, target: int) -> list[Nonlinearity]:
    """Score for the target row, score / kappa for the others."""
    return [
        Nonlinearity.score(s) if k == target else Nonlinearity.scaled_score(s)
        for k, s in enumerate(specs)
    ]


@dataclass
class CRBAttainment:
    target: int
    V: np.ndarray  # V[j] = gain variance of entry (target, j), j != target
    crb: np.ndarray
    max_rel_gap: float
    intermediates: dict
    max_intermediate_error: float
    functionals: MomentFunctionals


def crb_attainment_check(specs, i: int) -> CRBAttainment:
    """Optimal-nonlinearity variances of row ``i`` against the bound.

    Intermediate identities are checked for the sign-corrected
    nonlinearities: ``beta_i = kappa_i``, ``gamma_i = 1``,
    ``|alpha_i| = kappa_i - 1``, ``eta_i = 0`` and, for ``j != i``,
    ``beta_j = gamma_j = 1/kappa_j``, ``|alpha_j| = 1 - 1/kappa_j``.
    """
    specs = [s if isinstance(s, SourceSpec) else SourceSpec.from_dict(s) for s in specs]
    kappas = np.array([fisher_kappa(s) for s in specs])
    for k, s in enumerate(specs):
        if abs(kappas[k] - 1.0) < 1e-9:
            raise NonIdentifiableError(
                f"source {k} ({s}) is Gaussian: its optimal nonlinearity has alpha = 0"
            )
    f = moment_functionals(specs, optimal_nonlinearities(specs, i))
    d = len(specs)
    V = np.full(d, np.nan)
    crb = np.full(d, np.nan)
    for j in range(d):
        if j != i:
            crb[j] = crb_gain(kappas[i], kappas[j])
            V[j] = gain_variance(f, Variant.GENERALIZED_EMPIRICAL, i, j)
    mask = np.arange(d) != i
    gap = float(np.max(np.abs(V[mask] - crb[mask]) / crb[mask])) if d > 1 else 0.0

    s = f.sign
    expected = {"beta": [], "gamma": [], "abs_alpha": [], "eta": []}
    actual = {"beta": [], "gamma": [], "abs_alpha": [], "eta": []}
    for k in range(d):
        kap = kappas[k]
        if k == i:
            expected["beta"].append(kap)
            expected["gamma"].append(1.0)
            expected["abs_alpha"].append(kap - 1.0)
        else:
            expected["beta"].append(1.0 / kap)
            expected["gamma"].append(1.0 / kap)
            expected["abs_alpha"].append(1.0 - 1.0 / kap)
        expected["eta"].append(0.0)
        actual["beta"].append(f.beta[k])
        actual["gamma"].append(s[k] * f.gamma[k])
        actual["abs_alpha"].append(abs(f.alpha[k]))
        actual["eta"].append(s[k] * f.eta[k])
    err = max(
        abs(a - e) for key in expected for a, e in zip(actual[key], expected[key])
    )
    inter = {key: {"expected": expected[key], "actual": actual[key]} for key in expected}
    return CRBAttainment(i, V, crb, gap, inter, float(err), f)


def estimating_residual(B, mu, Y, nls, signs) -> np.ndarray:
    """Sample average of the estimating function at ``(B, mu)``.

    Stacked as: ``d`` mean residuals, ``d(d+1)/2`` whitening residuals
    ``b_i.(y-mu)(y-mu).b_j - delta_ij`` for ``i <= j``, then ``d(d-1)/2``
    antisymmetry residuals ``g~_i(b_i.(y-mu)) b_j.(y-mu) - g~_j(b_j.(y-mu)) b_i.(y-mu)``
    for ``i < j``.
    """
    B = np.asarray(B, dtype=float)
    Y = np.asarray(Y, dtype=float)
    d, N = Y.shape
    nls = parse_list(nls, d)
    Yc = Y - np.asarray(mu, dtype=float).reshape(d, 1)
    U = B @ Yc
    s = np.asarray(signs, dtype=float)
    G = np.vstack([s[i] * nl.g(U[i]) for i, nl in enumerate(nls)])
    C = (U @ U.T) / N
    M = (G @ U.T) / N
    out = list(Yc.mean(axis=1))
    out += [C[i, j] - (i == j) for i in range(d) for j in range(i, d)]
    out += [M[i, j] - M[j, i] for i in range(d) for j in range(i + 1, d)]
    return np.array(out)


def all_assignments(specs, nls):
    """Functionals and sign patterns for every permutation ``sigma``."""
    d = len(specs)
    out = []
    for sigma in itertools.permutations(range(d)):
        f = moment_functionals(specs, nls, sigma)
        out.append(f)
    return out
