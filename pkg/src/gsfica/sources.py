"""Zero-mean, unit-variance source distributions.

Every distribution here doubles as an oracle: densities, score functions and
exact moments are available in closed form, and :func:`expect` integrates any
function against a density by adaptive Gauss-Kronrod quadrature.

Random numbers come from numpy's counter-based ``Philox`` bit generator so
that a ``(spec, n, seed)`` triple always reproduces the same record.

The score is ``f'/f`` *without* a minus sign, so ``score(gaussian, x) == -x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import NumericError, ParameterError, UnsupportedError

KINDS = ("gg", "laplace", "uniform", "gaussian", "bimod")

# Integration limits are placed where the density drops below this value.
_TAIL_PDF = 1e-20
_SQRT3 = math.sqrt(3.0)
_LAPLACE_B = 1.0 / math.sqrt(2.0)


def rng(seed: int) -> np.random.Generator:
    """Philox-backed generator used everywhere in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SourceSpec:
    """Parametric zero-mean, unit-variance source distribution.

    Use the named constructors (:meth:`gg`, :meth:`laplace`, ...) rather than
    the raw fields.
    """

    kind: str
    alpha: float | None = None
    mu1: float | None = None
    mu2: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown source kind {self.kind!r}")
        if self.kind == "gg":
            if self.alpha is None or not np.isfinite(self.alpha) or self.alpha <= 0:
                raise ParameterError(f"generalized Gaussian needs alpha > 0, got {self.alpha}")
        if self.kind == "bimod":
            if self.mu1 is None or self.mu2 is None:
                raise ParameterError("bimodal source needs mu1 and mu2")
            prod = self.mu1 * self.mu2
            if not prod < 0 or not abs(prod) < 1:
                raise ParameterError(
                    f"bimodal source needs mu1*mu2 < 0 and |mu1*mu2| < 1, got {prod}"
                )

    # -- constructors -----------------------------------------------------
    @classmethod
    def gg(cls, alpha: float) -> "SourceSpec":
        return cls("gg", alpha=float(alpha))

    @classmethod
    def laplace(cls) -> "SourceSpec":
        return cls("laplace")

    @classmethod
    def uniform(cls) -> "SourceSpec":
        return cls("uniform")

    @classmethod
    def gaussian(cls) -> "SourceSpec":
        return cls("gaussian")

    @classmethod
    def bimod(cls, mu1: float, mu2: float) -> "SourceSpec":
        return cls("bimod", mu1=float(mu1), mu2=float(mu2))

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        if self.kind == "gg":
            return {"kind": "gg", "alpha": self.alpha}
        if self.kind == "bimod":
            return {"kind": "bimod", "mu1": self.mu1, "mu2": self.mu2}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, obj) -> "SourceSpec":
        if isinstance(obj, str):
            obj = {"kind": obj}
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ParameterError(f"cannot parse source spec from {obj!r}")
        kind = obj["kind"]
        extra = set(obj) - {"kind", "alpha", "mu1", "mu2"}
        if extra:
            raise ParameterError(f"unexpected source fields {sorted(extra)}")
        try:
            if kind == "gg":
                return cls.gg(obj["alpha"])
            if kind == "bimod":
                return cls.bimod(obj["mu1"], obj["mu2"])
        except KeyError as exc:
            raise ParameterError(f"source {kind!r} is missing field {exc}") from None
        return cls(kind)

    def __str__(self):
        if self.kind == "gg":
            return f"gg({self.alpha:g})"
        if self.kind == "bimod":
            return f"bimod({self.mu1:g},{self.mu2:g})"
        return self.kind

    # -- derived parameters -----------------------------------------------
    @property
    def is_symmetric(self) -> bool:
        if self.kind == "bimod":
            return self.mu1 == -self.mu2
        return True

    @property
    def gg_beta(self) -> float:
        a = self.alpha
        return math.sqrt(math.exp(special.gammaln(3.0 / a) - special.gammaln(1.0 / a)))

    @property
    def bimod_weight(self) -> float:
        """Mixing probability ``p`` of the component centred at ``mu1``."""
        return abs(self.mu2) / (abs(self.mu1) + abs(self.mu2))

    @property
    def bimod_var(self) -> float:
        return 1.0 - abs(self.mu1 * self.mu2)

    def tail_bound(self) -> float:
        """Half-width of the interval outside which the density is negligible."""
        t = math.log(1.0 / _TAIL_PDF)
        if self.kind == "uniform":
            return _SQRT3
        if self.kind == "gaussian":
            return math.sqrt(2.0 * t)
        if self.kind == "laplace":
            return _LAPLACE_B * (t + math.log(1.0 / (2.0 * _LAPLACE_B)))
        if self.kind == "gg":
            a, b = self.alpha, self.gg_beta
            c = a * b / (2.0 * math.exp(special.gammaln(1.0 / a)))
            return max(t + math.log(max(c, 1e-300)), 1.0) ** (1.0 / a) / b
        s = math.sqrt(self.bimod_var)
        return max(abs(self.mu1), abs(self.mu2)) + s * math.sqrt(2.0 * t)

    def breakpoints(self) -> list[float]:
        """Points where the integrand should be split (kinks, modes)."""
        pts = [0.0]
        if self.kind == "bimod":
            pts += [self.mu1, self.mu2]
        lim = self.tail_bound()
        return sorted({p for p in pts if -lim < p < lim})

    # -- density, score ---------------------------------------------------
    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "gaussian":
            return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if k == "uniform":
            return np.where(np.abs(x) <= _SQRT3, 1.0 / (2.0 * _SQRT3), 0.0)
        if k == "laplace":
            return np.exp(-np.abs(x) / _LAPLACE_B) / (2.0 * _LAPLACE_B)
        if k == "gg":
            a, b = self.alpha, self.gg_beta
            c = a * b / (2.0 * math.exp(special.gammaln(1.0 / a)))
            return c * np.exp(-((b * np.abs(x)) ** a))
        p, v = self.bimod_weight, self.bimod_var
        return p * _normal_pdf(x, self.mu1, v) + (1.0 - p) * _normal_pdf(x, self.mu2, v)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "gaussian":
            return -0.5 * x * x - 0.5 * math.log(2.0 * math.pi)
        if k == "uniform":
            return np.where(np.abs(x) <= _SQRT3, -math.log(2.0 * _SQRT3), -np.inf)
        if k == "laplace":
            return -np.abs(x) / _LAPLACE_B - math.log(2.0 * _LAPLACE_B)
        if k == "gg":
            a, b = self.alpha, self.gg_beta
            logc = math.log(a * b / 2.0) - special.gammaln(1.0 / a)
            return logc - (b * np.abs(x)) ** a
        p, v = self.bimod_weight, self.bimod_var
        l1 = math.log(p) - 0.5 * (x - self.mu1) ** 2 / v
        l2 = math.log(1.0 - p) - 0.5 * (x - self.mu2) ** 2 / v
        return np.logaddexp(l1, l2) - 0.5 * math.log(2.0 * math.pi * v)

    def score(self, x):
        """``f'(x)/f(x)``; Laplace and GG(alpha <= 1) return 0 at the kink."""
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "gaussian":
            return -x
        if k == "uniform":
            raise UnsupportedError("uniform density has no score function")
        if k == "laplace":
            return -np.sign(x) / _LAPLACE_B
        if k == "gg":
            a, b = self.alpha, self.gg_beta
            ax = np.abs(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                mag = a * b**a * ax ** (a - 1.0)
            return np.where(ax > 0, -np.sign(x) * mag, 0.0)
        r1, r2 = self._bimod_resp(x)
        v = self.bimod_var
        return -(r1 * (x - self.mu1) + r2 * (x - self.mu2)) / v

    def score_prime(self, x):
        """Derivative of :meth:`score` away from kinks."""
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "gaussian":
            return -np.ones_like(x)
        if k == "uniform":
            raise UnsupportedError("uniform density has no score function")
        if k == "laplace":
            return np.zeros_like(x)
        if k == "gg":
            a, b = self.alpha, self.gg_beta
            ax = np.abs(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                val = -a * (a - 1.0) * b**a * ax ** (a - 2.0)
            if a == 2.0:
                return np.full_like(x, -2.0 * b * b)
            return np.where(ax > 0, val, 0.0 if a > 2.0 else -np.inf)
        # f''/f - (f'/f)^2 for the two-component mixture
        r1, r2 = self._bimod_resp(x)
        v = self.bimod_var
        fpp = (r1 * ((x - self.mu1) ** 2 / v - 1.0) + r2 * ((x - self.mu2) ** 2 / v - 1.0)) / v
        return fpp - self.score(x) ** 2

    def score_jumps(self) -> list[tuple[float, float]]:
        """Jump discontinuities of the score as ``(location, size)`` pairs."""
        if self.kind == "laplace":
            return [(0.0, -2.0 / _LAPLACE_B)]
        if self.kind == "gg" and self.alpha == 1.0:
            return [(0.0, -2.0 * self.gg_beta)]
        return []

    def _bimod_resp(self, x):
        # posterior component probabilities, computed in log space
        p, v = self.bimod_weight, self.bimod_var
        l1 = math.log(p) - 0.5 * (x - self.mu1) ** 2 / v
        l2 = math.log(1.0 - p) - 0.5 * (x - self.mu2) ** 2 / v
        m = np.maximum(l1, l2)
        e1, e2 = np.exp(l1 - m), np.exp(l2 - m)
        return e1 / (e1 + e2), e2 / (e1 + e2)

    # -- sampling ---------------------------------------------------------
    def sample(self, n: int, seed: int) -> np.ndarray:
        return sample(self, n, seed)


def _normal_pdf(x, mu, var):
    return np.exp(-0.5 * (x - mu) ** 2 / var) / math.sqrt(2.0 * math.pi * var)


def sample(spec: SourceSpec, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. values of ``spec``; bit-reproducible per ``seed``."""
    n = int(n)
    if n < 1:
        raise ParameterError(f"sample size must be >= 1, got {n}")
    g = rng(seed)
    k = spec.kind
    if k == "gaussian":
        return g.standard_normal(n)
    if k == "uniform":
        return g.uniform(-_SQRT3, _SQRT3, n)
    if k == "laplace":
        return g.laplace(0.0, _LAPLACE_B, n)
    if k == "gg":
        # |X|^alpha * beta^alpha ~ Gamma(1/alpha, 1)
        a = spec.alpha
        u = g.standard_gamma(1.0 / a, n)
        sign = 2.0 * g.integers(0, 2, n) - 1.0
        return sign * u ** (1.0 / a) / spec.gg_beta
    z = g.random(n) < spec.bimod_weight
    return np.where(z, spec.mu1, spec.mu2) + math.sqrt(spec.bimod_var) * g.standard_normal(n)


def pdf(spec: SourceSpec, x):
    return spec.pdf(x)


def score(spec: SourceSpec, x):
    return spec.score(x)


def expect(
    spec: SourceSpec,
    f: Callable,
    epsabs: float = 1e-13,
    epsrel: float = 1e-12,
    extra_points=(),
) -> float:
    """``E[f(s)]`` by adaptive Gauss-Kronrod quadrature on the truncated support.

    The support is split at :meth:`SourceSpec.breakpoints` and any
    ``extra_points`` so each piece has a smooth integrand.
    """
    lim = spec.tail_bound()
    pts = sorted({-lim, lim, *spec.breakpoints(), *(p for p in extra_points if -lim < p < lim)})

    def integrand(x):
        return float(f(x)) * float(spec.pdf(x))

    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, err = integrate.quad(integrand, a, b, epsabs=epsabs, epsrel=epsrel, limit=500)
        if not np.isfinite(val):
            raise NumericError(f"integral of {f!r} against {spec} is not finite")
        total += val
    return total


def _normal_moment(k: int, mu: float, var: float) -> float:
    # E[(mu + sqrt(var) Z)^k] by binomial expansion
    total = 0.0
    for j in range(0, k + 1, 2):
        total += math.comb(k, j) * mu ** (k - j) * var ** (j // 2) * _double_factorial(j - 1)
    return total


def _double_factorial(n: int) -> int:
    return 1 if n <= 0 else n * _double_factorial(n - 2)


MAX_MOMENT = 8


def moment(spec: SourceSpec, k: int) -> float:
    """Exact raw moment ``E[s^k]`` (equal to the central moment: mean is 0)."""
    k = int(k)
    if k < 0:
        raise ParameterError("moment order must be nonnegative")
    if k > MAX_MOMENT:
        raise NumericError(f"moments above order {MAX_MOMENT} are not supported (got {k})")
    if k == 0:
        return 1.0
    kind = spec.kind
    if kind == "bimod":
        p, v = spec.bimod_weight, spec.bimod_var
        return p * _normal_moment(k, spec.mu1, v) + (1 - p) * _normal_moment(k, spec.mu2, v)
    if k % 2:
        return 0.0
    if kind == "gaussian":
        return float(_double_factorial(k - 1))
    if kind == "uniform":
        return 3.0 ** (k / 2) / (k + 1)
    if kind == "laplace":
        return math.factorial(k) * _LAPLACE_B**k
    a, b = spec.alpha, spec.gg_beta
    return math.exp(special.gammaln((k + 1) / a) - special.gammaln(1 / a)) / b**k


def moment_quad(spec: SourceSpec, k: int) -> float:
    """Quadrature counterpart of :func:`moment`, kept as an independent check."""
    return expect(spec, lambda x: x**k)


def fisher_kappa(spec: SourceSpec) -> float:
    """``E[score(s)^2]`` by quadrature.

    Raises :class:`NumericError` when the integral diverges (uniform sources,
    generalized Gaussian with ``alpha <= 1/2``).
    """
    if spec.kind == "uniform":
        raise NumericError("Fisher information of the uniform density is infinite")
    if spec.kind == "gg" and spec.alpha <= 0.5:
        raise NumericError(
            f"Fisher information of gg({spec.alpha:g}) diverges: score^2 ~ |x|^{2 * spec.alpha - 2:g} at 0"
        )
    return expect(spec, lambda x: spec.score(x) ** 2)


def quadrature_rule(spec: SourceSpec, n: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and probability weights approximating the distribution of ``spec``.

    Piecewise Gauss-Legendre with ``n`` nodes on each piece between
    breakpoints; weights include the density and are normalized to sum to 1.
    Used by the infinite-sample engine, where expectations over mixtures
    become tensor-product sums.
    """
    lim = spec.tail_bound()
    pts = [-lim, *spec.breakpoints(), lim]
    gx, gw = np.polynomial.legendre.leggauss(int(n))
    nodes, weights = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        x = 0.5 * (b - a) * gx + 0.5 * (b + a)
        nodes.append(x)
        weights.append(0.5 * (b - a) * gw * spec.pdf(x))
    x = np.concatenate(nodes)
    w = np.concatenate(weights)
    return x, w / w.sum()


_MASK64 = (1 << 64) - 1


def splitmix64(seed: int, stream: int) -> int:
    """Derive an independent 64-bit seed for ``stream`` from ``seed`` (SplitMix64)."""
    z = (int(seed) * 0x9E3779B97F4A7C15 + (int(stream) + 1) * 0xBF58476D1CE4E5B9) & _MASK64
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def sample_batch(specs, n: int, seed: int) -> np.ndarray:
    """``d x n`` matrix whose row ``k`` is drawn from ``specs[k]`` with its own stream."""
    return np.vstack([sample(s, n, splitmix64(seed, k)) for k, s in enumerate(specs)])
