"""Seeded Monte Carlo runner for the gain-matrix experiments.

Each trial draws fresh sources from a seed derived from ``(base_seed, t)``,
mixes them, standardizes, separates from a fixed ``W0`` and records the
gain matrix together with fixed-point diagnostics.  Trials are independent,
so they may run on a process pool; the aggregate is always reduced in trial
order and BLAS is pinned to one thread, which keeps the output identical for
any ``GSFICA_THREADS``.
"""
from __future__ import annotations

import csv
import enum
import json
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from . import asymptotics as asy
from . import fastica
from .errors import DegenerateError, ExperimentInvalidError, GsficaError, InputError, ParameterError
from .metrics import align, gain_matrix, off_index
from .nonlinearity import parse_list
from .preprocess import Centering, standardize
from .sources import SourceSpec, moment, sample_batch, splitmix64

HIST_BINS = 50
HIST_SPAN = 4.0  # in predicted standard deviations
MAX_FAILURE_RATE = 0.5


class Algorithm(str, enum.Enum):
    ONE_UNIT = "one_unit"
    SYMMETRIC = "symmetric"
    GENERALIZED_SYMMETRIC = "generalized_symmetric"


@dataclass
class ExperimentConfig:
    specs: list
    nls: list
    N: int
    trials: int
    H: np.ndarray | None = None
    W0: np.ndarray | None = None
    centering: Centering = Centering.EMPIRICAL
    base_seed: int = 0
    algorithm: Algorithm = Algorithm.GENERALIZED_SYMMETRIC
    tol: float = fastica.DEFAULT_TOL
    max_iter: int = fastica.DEFAULT_MAX_ITER

    def __post_init__(self):
        self.specs = [s if isinstance(s, SourceSpec) else SourceSpec.from_dict(s) for s in self.specs]
        d = len(self.specs)
        if d < 1:
            raise ParameterError("need at least one source")
        self.nls = parse_list(self.nls, d)
        self.N, self.trials = int(self.N), int(self.trials)
        if self.N <= d:
            raise ParameterError(f"N must exceed d (N={self.N}, d={d})")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        self.H = np.eye(d) if self.H is None else np.asarray(self.H, dtype=float)
        if self.H.shape != (d, d):
            raise ParameterError(f"H must be {d}x{d}")
        if np.linalg.cond(self.H) > 1e12:
            raise ParameterError("mixing matrix H is singular")
        self.W0 = np.eye(d) if self.W0 is None else np.asarray(self.W0, dtype=float)
        if self.W0.shape != (d, d) or np.abs(self.W0 @ self.W0.T - np.eye(d)).max() > 1e-8:
            raise ParameterError(f"W0 must be an orthogonal {d}x{d} matrix")
        self.centering = Centering(self.centering)
        self.algorithm = Algorithm(self.algorithm)
        self.base_seed = int(self.base_seed)
        if self.algorithm is Algorithm.SYMMETRIC and len({str(n) for n in self.nls}) != 1:
            raise ParameterError("the symmetric algorithm uses a single nonlinearity")

    @property
    def d(self) -> int:
        return len(self.specs)

    @property
    def mean(self) -> np.ndarray:
        """True mean of the observations ``H s``."""
        return self.H @ np.array([moment(s, 1) for s in self.specs])

    def to_dict(self) -> dict:
        return {
            "sources": [s.to_dict() for s in self.specs],
            "nonlinearities": [n.to_json() for n in self.nls],
            "N": self.N,
            "trials": self.trials,
            "H": self.H.tolist(),
            "W0": self.W0.tolist(),
            "centering": self.centering.value,
            "base_seed": self.base_seed,
            "algorithm": self.algorithm.value,
            "tol": self.tol,
            "max_iter": self.max_iter,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {"sources", "nonlinearities", "N", "trials", "H", "W0", "centering",
                 "base_seed", "algorithm", "tol", "max_iter"}
        extra = set(obj) - known - {"N_sweep", "outputs"}
        if extra:
            raise InputError(f"unknown config keys: {sorted(extra)}")
        for key in ("sources", "nonlinearities", "N", "trials"):
            if key not in obj:
                raise InputError(f"config is missing {key!r}")
        kw = {k: obj[k] for k in ("H", "W0", "centering", "base_seed", "algorithm", "tol", "max_iter") if k in obj}
        return cls(obj["sources"], obj["nonlinearities"], obj["N"], obj["trials"], **kw)

    def with_(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


@dataclass
class TrialRecord:
    t: int
    seed: int
    G: np.ndarray
    sigma: tuple
    signs: np.ndarray
    off: float
    converged: bool
    iterations: int
    orth_error: float
    fp_residual: float
    symmetry_defect: float
    est_residual: float
    est_residual_centered: float  # whitening and antisymmetry blocks only
    diagnostics: list = field(default_factory=list)


def trial_seed(base_seed: int, t: int) -> int:
    return splitmix64(base_seed, t)


def _separate(cfg: ExperimentConfig, X, whitener):
    if cfg.algorithm is Algorithm.ONE_UNIT:
        return fastica.one_unit_deflation(X, cfg.nls, cfg.W0, cfg.tol, cfg.max_iter, whitener=whitener)
    ic = fastica.IterationConfig(cfg.nls, cfg.tol, cfg.max_iter, cfg.W0)
    return fastica.generalized_symmetric(X, ic, whitener=whitener)


def run_trial(cfg: ExperimentConfig, t: int) -> TrialRecord:
    """One seeded trial; engine errors become a non-converged record."""
    seed = trial_seed(cfg.base_seed, t)
    S = sample_batch(cfg.specs, cfg.N, seed)
    Y = cfg.H @ S
    d = cfg.d
    nan = math.nan
    try:
        data = standardize(Y, cfg.centering, cfg.mean)
        res = _separate(cfg, data.X, data.whitener)
    except GsficaError as exc:
        return TrialRecord(t, seed, np.full((d, d), nan), tuple(range(d)), np.ones(d), nan,
                           False, 0, nan, nan, nan, nan, nan, [str(exc)])
    G = gain_matrix(res.B, cfg.H)
    sigma, signs, warn = align(G)
    W = res.W
    orth = float(np.linalg.norm(W @ W.T - np.eye(d)))
    fp = sym = nan
    if cfg.algorithm is not Algorithm.ONE_UNIT:
        try:
            fp = fastica.fixed_point_residual(W, data.X, cfg.nls)
        except DegenerateError:
            pass
        sym = fastica.symmetry_defect(W, data.X, cfg.nls, res.sign_vector)
    r = asy.estimating_residual(res.B, data.mean_used, Y, cfg.nls, res.sign_vector)
    return TrialRecord(
        t, seed, G, sigma, signs, off_index(G, sigma), res.converged, res.iterations,
        orth, fp, sym, float(np.linalg.norm(r)), float(np.linalg.norm(r[d:])),
        list(res.diagnostics) + warn,
    )


def _worker_init():
    threadpool_limits(1)


def _run_chunk(args):
    cfg, ts = args
    with threadpool_limits(1):
        return [run_trial(cfg, t) for t in ts]


def n_threads() -> int:
    raw = os.environ.get("GSFICA_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"GSFICA_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def run_trials(cfg: ExperimentConfig, threads: int | None = None) -> list[TrialRecord]:
    threads = n_threads() if threads is None else max(1, int(threads))
    ts = list(range(cfg.trials))
    if threads == 1 or cfg.trials < 2:
        return _run_chunk((cfg, ts))
    chunks = [ts[k::threads] for k in range(threads)]
    with ProcessPoolExecutor(max_workers=threads, initializer=_worker_init) as pool:
        parts = list(pool.map(_run_chunk, [(cfg, c) for c in chunks if c]))
    records = [r for part in parts for r in part]
    records.sort(key=lambda r: r.t)
    return records


# ---------------------------------------------------------------------------
# theoretical side


@dataclass
class Prediction:
    sigma: tuple
    orientation: np.ndarray
    variant: str
    V: np.ndarray  # [i, sigma[j]] layout, rows sign-normalized
    V_all: dict
    off_limit: float
    functionals: dict
    signs: list

    def to_dict(self) -> dict:
        return {
            "sigma": [int(k) for k in self.sigma],
            "orientation": [int(o) for o in self.orientation],
            "variant": self.variant,
            "V": self.V.tolist(),
            "V_by_variant": {k: v.tolist() for k, v in self.V_all.items()},
            "off_limit": self.off_limit,
            "local_contrast_signs": self.signs,
            "functionals": self.functionals,
        }


def predicted_assignment(cfg: ExperimentConfig, n_nodes: int | None = None):
    """``(sigma, orientation)`` reached by the infinite-sample engine from ``W0``."""
    d = cfg.d
    if n_nodes is None:
        n_nodes = {1: 200, 2: 100, 3: 40}.get(d, max(4, int(2e6 ** (1 / d) / 2)))
    C = cfg.H @ cfg.H.T
    from .preprocess import inv_sqrt_sym

    A = inv_sqrt_sym(C) @ cfg.H
    X, w = fastica.theoretical_data(cfg.specs, A, n_nodes)
    ic = fastica.IterationConfig(cfg.nls, 1e-10, 500, cfg.W0)
    res = fastica.generalized_symmetric(X, ic, weights=w)
    if not res.converged:
        raise DegenerateError("the infinite-sample iteration did not converge: " + "; ".join(res.diagnostics))
    sigma, signs, _ = align(res.W @ A)
    return sigma, signs


def _variant_for(cfg: ExperimentConfig) -> str:
    if cfg.algorithm is Algorithm.ONE_UNIT:
        return "one_unit_deflation"
    if cfg.centering is Centering.EMPIRICAL:
        return asy.Variant.GENERALIZED_EMPIRICAL.value
    return asy.Variant.EXACT.value


def predict(cfg: ExperimentConfig) -> Prediction:
    sigma, orient = predicted_assignment(cfg)
    f = asy.moment_functionals(cfg.specs, cfg.nls, sigma, orient)
    V_all = {v.value: asy.gain_variance_matrix(f, v) for v in asy.Variant}
    d = cfg.d
    P = np.zeros((d, d))
    P[np.arange(d), list(sigma)] = 1.0
    Vd = np.empty((d, d))
    for i in range(d):
        Vd[i] = np.diag(P.T @ asy.cov_oneunit_deflation(f, P, i) @ P)
    V_all["one_unit_deflation"] = Vd
    variant = _variant_for(cfg)
    V = V_all[variant]
    try:
        signs = [int(s) for s in asy.local_contrast_signs(f)]
    except DegenerateError:
        signs = []
    return Prediction(sigma, orient, variant, V, V_all, asy.off_sum(V, sigma), f.to_dict(), signs)


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class Aggregate:
    config: dict
    trials: int
    included: int
    failures: int
    nonconverged: int
    sigma_mismatch: int
    sigma: tuple
    mean: np.ndarray  # of sqrt(N) (G~ - P_sigma), G~ = diag(signs) G
    variance: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    off_scaled_mean: float
    off_scaled_stderr: float
    iterations: dict
    properties: dict
    histograms: dict
    prediction: Prediction | None
    prediction_error: str | None
    assignment_agreement: float | None
    diagnostics: list

    def to_dict(self) -> dict:
        return _clean({
            "config": self.config,
            "trials": self.trials,
            "included": self.included,
            "failures": self.failures,
            "nonconverged": self.nonconverged,
            "sigma_mismatch": self.sigma_mismatch,
            "sigma": list(self.sigma),
            "mean": self.mean,
            "variance": self.variance,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "N_off_mean": self.off_scaled_mean,
            "N_off_stderr": self.off_scaled_stderr,
            "iterations": self.iterations,
            "properties": self.properties,
            "histograms": self.histograms,
            "prediction": None if self.prediction is None else self.prediction.to_dict(),
            "prediction_error": self.prediction_error,
            "assignment_agreement": self.assignment_agreement,
            "diagnostics": self.diagnostics,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _histogram(values, sd):
    edges = np.linspace(-HIST_SPAN * sd, HIST_SPAN * sd, HIST_BINS + 1)
    clipped = np.clip(values, edges[0], edges[-1])
    counts, _ = np.histogram(clipped, edges)
    return edges, counts


def aggregate(cfg: ExperimentConfig, records: list[TrialRecord], prediction=None, prediction_error=None) -> Aggregate:
    d, N = cfg.d, cfg.N
    conv = [r for r in records if r.converged]
    modal = Counter(r.sigma for r in conv).most_common(1)[0][0] if conv else tuple(range(d))
    ref = prediction.sigma if prediction is not None else modal
    good = [r for r in conv if r.sigma == ref]
    nonconv = len(records) - len(conv)
    mismatch = len(conv) - len(good)
    failures = nonconv + mismatch
    diagnostics = sorted({m for r in records if not r.converged for m in r.diagnostics})
    if prediction_error:
        diagnostics.insert(0, "prediction unavailable: " + prediction_error)
    if failures > MAX_FAILURE_RATE * len(records):
        raise ExperimentInvalidError(
            f"{failures} of {len(records)} trials failed ({nonconv} not converged, "
            f"{mismatch} reached another assignment)"
            + ("; " + "; ".join(diagnostics[:5]) if diagnostics else "")
        )
    P = np.zeros((d, d))
    P[np.arange(d), list(ref)] = 1.0
    Z = np.array([math.sqrt(N) * (r.signs[:, None] * r.G - P) for r in good])
    mean = Z.mean(axis=0)
    var = Z.var(axis=0, ddof=1) if len(good) > 1 else np.full((d, d), math.nan)
    skew = stats.skew(Z, axis=0) if len(good) > 2 else np.full((d, d), math.nan)
    kurt = stats.kurtosis(Z, axis=0) if len(good) > 3 else np.full((d, d), math.nan)
    off = np.array([N * r.off for r in good])
    hist = {}
    for i in range(d):
        for j in range(d):
            sd = math.sqrt(prediction.V[i, j]) if prediction is not None else math.nan
            if not sd > 0:
                sd = math.sqrt(var[i, j]) if var[i, j] > 0 else 1.0
            edges, counts = _histogram(Z[:, i, j], sd)
            hist[f"{i},{j}"] = {"edges": edges, "counts": counts, "predicted_sd": sd}
    its = np.array([r.iterations for r in records])
    props = {
        "max_orth_error": max((r.orth_error for r in good), default=math.nan),
        "max_fp_residual": max((r.fp_residual for r in good), default=math.nan),
        "max_symmetry_defect": max((r.symmetry_defect for r in good), default=math.nan),
        "max_estimating_residual": max((r.est_residual for r in good), default=math.nan),
        "max_estimating_residual_centered": max((r.est_residual_centered for r in good), default=math.nan),
    }
    agreement = None
    if prediction is not None and conv:
        agreement = sum(r.sigma == prediction.sigma for r in conv) / len(conv)
    return Aggregate(
        cfg.to_dict(), len(records), len(good), failures, nonconv, mismatch, ref,
        mean, var, skew, kurt,
        float(off.mean()), float(off.std(ddof=1) / math.sqrt(len(off))) if len(off) > 1 else math.nan,
        {"mean": float(its.mean()), "min": int(its.min()), "max": int(its.max())},
        props, hist, prediction, prediction_error, agreement, diagnostics,
    )


def run_experiment(cfg: ExperimentConfig, threads: int | None = None, with_prediction: bool = True) -> Aggregate:
    """Run every trial and aggregate with the theoretical predictions attached."""
    prediction, err = None, None
    if with_prediction:
        try:
            prediction = predict(cfg)
        except GsficaError as exc:
            err = str(exc)
    records = run_trials(cfg, threads)
    return aggregate(cfg, records, prediction, err)


def sweep(cfg: ExperimentConfig, Ns, threads: int | None = None) -> list[Aggregate]:
    """Same experiment at several sample sizes; each size gets its own seed stream."""
    out = []
    prediction, err = None, None
    try:
        prediction = predict(cfg)
    except GsficaError as exc:
        err = str(exc)
    for N in Ns:
        c = cfg.with_(N=int(N), base_seed=splitmix64(cfg.base_seed, int(N)))
        out.append(aggregate(c, run_trials(c, threads), prediction, err))
    return out


# ---------------------------------------------------------------------------
# CSV output


def _fmt(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else "nan"


def write_sweep_csv(path, aggs: list[Aggregate]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "empirical", "theoretical"])
        for a in aggs:
            theo = a.prediction.off_limit if a.prediction is not None else math.nan
            w.writerow([a.config["N"], _fmt(a.off_scaled_mean), _fmt(theo)])


def write_histogram_csv(path, agg: Aggregate, i: int, j: int):
    """Bin centers, empirical density and the predicted normal density for entry ``(i, j)``."""
    h = agg.histograms[f"{i},{j}"]
    edges = np.asarray(h["edges"])
    counts = np.asarray(h["counts"], dtype=float)
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[1:] + edges[:-1])
    dens = counts / max(counts.sum(), 1.0) / width
    sd = h["predicted_sd"]
    theo = stats.norm.pdf(centers, scale=sd)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "empirical", "theoretical"])
        for x, e, t in zip(centers, dens, theo):
            w.writerow([_fmt(x), _fmt(e), _fmt(t)])
