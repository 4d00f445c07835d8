"""Contrast nonlinearities ``G`` with derivatives ``g = G'`` and ``g'``.

Built-in kinds are ``kurtosis`` (x^4/4), ``gauss`` (-exp(-x^2/2)) and
``tanh`` (log cosh x).  Two score-based kinds, ``score`` and
``scaled_score``, wrap the score function of a known source; these are the
choices that let the generalized symmetric algorithm reach the Cramer-Rao
bound for a target component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, UnsupportedError
from .sources import SourceSpec, fisher_kappa

BUILTIN = ("kurtosis", "gauss", "tanh")
SCORE_KINDS = ("score", "scaled_score")

# Integer codes understood by the compiled kernel.
KERNEL_CODES = {"kurtosis": 0, "gauss": 1, "tanh": 2}

# Growth constant: |G^(k)(x)| <= GROWTH_C * (|x|^4 + 1) for the built-in kinds, k = 0..4.
GROWTH_C = 24.0


def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


@dataclass(frozen=True)
class Nonlinearity:
    """Immutable nonlinearity descriptor.

    ``spec`` is required for the score-based kinds and ignored otherwise.
    """

    kind: str
    spec: SourceSpec | None = None

    def __post_init__(self):
        if self.kind in BUILTIN:
            if self.spec is not None:
                raise ParameterError(f"{self.kind!r} takes no source spec")
        elif self.kind in SCORE_KINDS:
            if self.spec is None:
                raise ParameterError(f"{self.kind!r} needs a source spec")
            if self.spec.kind == "uniform":
                raise UnsupportedError(
                    "score nonlinearity of the uniform source is undefined off its support"
                )
            if self.spec.kind == "gg" and self.spec.alpha < 1:
                raise UnsupportedError(
                    f"score of {self.spec} is unbounded at 0 and its derivative is not integrable"
                )
        else:
            raise ParameterError(f"unknown nonlinearity kind {self.kind!r}")

    @classmethod
    def score(cls, spec: SourceSpec) -> "Nonlinearity":
        return cls("score", spec)

    @classmethod
    def scaled_score(cls, spec: SourceSpec) -> "Nonlinearity":
        return cls("scaled_score", spec)

    @property
    def scale(self) -> float:
        if self.kind == "scaled_score":
            return 1.0 / _kappa(self.spec)
        return 1.0

    @property
    def kernel_code(self) -> int | None:
        return KERNEL_CODES.get(self.kind)

    @property
    def is_even(self) -> bool | None:
        """Parity of ``G``: True if even, False if odd, None if neither."""
        if self.kind in BUILTIN:
            return True
        return True if self.spec.is_symmetric else None

    def G(self, x):
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "kurtosis":
            return 0.25 * x**4
        if k == "gauss":
            return -np.exp(-0.5 * x * x)
        if k == "tanh":
            return _logcosh(x)
        return self.scale * self.spec.logpdf(x)

    def g(self, x):
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "kurtosis":
            return x**3
        if k == "gauss":
            return x * np.exp(-0.5 * x * x)
        if k == "tanh":
            return np.tanh(x)
        return self.scale * self.spec.score(x)

    def gprime(self, x):
        """``g'`` away from jump points of ``g`` (see :meth:`jumps`)."""
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "kurtosis":
            return 3.0 * x * x
        if k == "gauss":
            return (1.0 - x * x) * np.exp(-0.5 * x * x)
        if k == "tanh":
            t = np.tanh(x)
            return 1.0 - t * t
        return self.scale * self.spec.score_prime(x)

    def jumps(self) -> list[tuple[float, float]]:
        """Jump discontinuities of ``g``; they add point masses to ``E[g'(s)]``."""
        if self.kind in BUILTIN:
            return []
        return [(x, self.scale * j) for x, j in self.spec.score_jumps()]

    def eval(self, order: int, x):
        if order == 0:
            return self.G(x)
        if order == 1:
            return self.g(x)
        if order == 2:
            return self.gprime(x)
        raise ParameterError(f"order must be 0, 1 or 2, got {order}")

    def to_json(self):
        if self.kind in BUILTIN:
            return self.kind
        return {self.kind: self.spec.to_dict()}

    @classmethod
    def from_json(cls, obj) -> "Nonlinearity":
        if isinstance(obj, str):
            return cls(obj)
        if isinstance(obj, dict) and len(obj) == 1:
            (kind, spec), = obj.items()
            return cls(kind, SourceSpec.from_dict(spec))
        raise ParameterError(f"cannot parse nonlinearity from {obj!r}")

    def __str__(self):
        if self.kind in BUILTIN:
            return self.kind
        return f"{self.kind}[{self.spec}]"


_KAPPA_CACHE: dict[SourceSpec, float] = {}


def _kappa(spec: SourceSpec) -> float:
    if spec not in _KAPPA_CACHE:
        _KAPPA_CACHE[spec] = fisher_kappa(spec)
    return _KAPPA_CACHE[spec]


def eval(nl: Nonlinearity, order: int, x):
    """Evaluate ``G`` (order 0), ``g`` (order 1) or ``g'`` (order 2)."""
    return nl.eval(order, x)


def parse_list(items, d: int | None = None) -> list[Nonlinearity]:
    """Parse a JSON list, or a comma-separated string, of nonlinearities."""
    if isinstance(items, str):
        items = [s.strip() for s in items.split(",") if s.strip()]
    nls = [n if isinstance(n, Nonlinearity) else Nonlinearity.from_json(n) for n in items]
    if d is not None:
        if len(nls) == 1:
            nls = nls * d
        if len(nls) != d:
            raise ParameterError(f"expected {d} nonlinearities, got {len(nls)}")
    return nls


def finite_difference(f, x, h=None):
    """Central difference with step ``1e-5 * max(1, |x|)``."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-5 * np.maximum(1.0, np.abs(x))
    return (f(x + h) - f(x - h)) / (2.0 * h)
