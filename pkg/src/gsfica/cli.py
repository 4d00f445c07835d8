"""``gsfica`` command line: separate | predict | simulate | surface.

Every command that writes files also writes ``<output>.manifest.json`` with
the resolved configuration, seeds and output paths, so the run can be
repeated exactly.  Exit codes: 0 success (a flagged non-convergence is
still success), 2 input error, 3 numeric or degeneracy error.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import asymptotics as asy
from . import fastica
from . import montecarlo as mc
from .errors import GsficaError, InputError, NumericError
from .nonlinearity import parse_list
from .preprocess import random_orthogonal, standardize
from .sources import SourceSpec, fisher_kappa, sample_batch

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


# ---------------------------------------------------------------------------
# I/O helpers


def _fmt(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else "nan"


def read_csv_matrix(path) -> np.ndarray:
    """Read samples-by-channels CSV (optional header) into a ``d x N`` array."""
    rows = []
    width = None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise InputError(f"{path}, line {lineno}: non-numeric value in {row!r}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise InputError(f"{path}, line {lineno}: expected {width} columns, found {len(vals)}")
            if not all(math.isfinite(v) for v in vals):
                raise InputError(f"{path}, line {lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows).T


def write_csv_matrix(path, M, header=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for row in np.asarray(M).T:
            w.writerow([_fmt(v) for v in row])


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}, line {exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise InputError(f"{path}: expected a JSON object")
    return obj


def _dump(obj, path=None):
    text = json.dumps(mc._clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _manifest(path, command, config, seeds, outputs, started):
    if path is None:
        return
    _dump(
        {
            "command": command,
            "config": config,
            "version": __version__,
            "seeds": seeds,
            "outputs": [str(p) for p in outputs],
            "duration_s": time.perf_counter() - started,
        },
        str(path) + ".manifest.json",
    )


def _specs(obj):
    if "sources" not in obj:
        raise InputError("config is missing 'sources'")
    return [SourceSpec.from_dict(s) for s in obj["sources"]]


# ---------------------------------------------------------------------------
# commands


def cmd_separate(args) -> int:
    started = time.perf_counter()
    Y = read_csv_matrix(args.data)
    d = Y.shape[0]
    nls = parse_list(args.nonlinearities, d)
    W0 = None if args.seed is None else random_orthogonal(d, args.seed)
    data = standardize(Y, args.centering, args.mu)
    cfg = fastica.IterationConfig(nls, args.tol, args.max_iter, W0)
    res = fastica.generalized_symmetric(data.X, cfg, whitener=data.whitener)
    out = res.to_dict()
    out.update(
        nonlinearities=[n.to_json() for n in nls],
        centering=data.mode.value,
        mean=data.mean_used,
        symmetry_defect=fastica.symmetry_defect(res.W, data.X, nls, res.sign_vector),
        fixed_point_residual=fastica.fixed_point_residual(res.W, data.X, nls),
    )
    _dump(out, args.out)
    outputs = [args.out] if args.out else []
    if args.sources_out:
        write_csv_matrix(args.sources_out, res.W @ data.X, [f"s{i + 1}" for i in range(d)])
        outputs.append(args.sources_out)
    if args.out:
        config = {
            "data": str(args.data), "nonlinearities": [n.to_json() for n in nls],
            "centering": data.mode.value, "mu": args.mu, "tol": args.tol, "max_iter": args.max_iter,
        }
        _manifest(args.out, "separate", config, {"seed": args.seed}, outputs, started)
    return EXIT_OK


def _prediction_report(specs, nls, sigma) -> dict:
    f = asy.moment_functionals(specs, nls, sigma)
    signs = asy.local_contrast_signs(f)
    return {
        "sigma": list(sigma),
        "sign_pattern": "".join("+" if s > 0 else "-" for s in signs),
        "local_contrast_signs": [int(s) for s in signs],
        "functionals": f.to_dict(),
        "V": {v.value: asy.gain_variance_matrix(f, v) for v in asy.Variant},
    }


def cmd_predict(args) -> int:
    started = time.perf_counter()
    cfg = _load_json(args.config)
    specs = _specs(cfg)
    d = len(specs)
    nls = parse_list(cfg.get("nonlinearities", ["tanh"]), d)
    if "sigma" in cfg:
        perms = [tuple(int(k) for k in cfg["sigma"])]
    else:
        perms = list(itertools.permutations(range(d)))
    kappas = []
    for s in specs:
        try:
            kappas.append(fisher_kappa(s))
        except NumericError:
            kappas.append(math.inf)
    report = {
        "sources": [s.to_dict() for s in specs],
        "nonlinearities": [n.to_json() for n in nls],
        "kappa": kappas,
        "crb": asy.crb_matrix(kappas),
        "assignments": [_prediction_report(specs, nls, p) for p in perms],
    }
    _dump(report, args.out)
    outputs = [args.out] if args.out else []
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sigma", "variant", "i", "j", "V"])
            for a in report["assignments"]:
                tag = "".join(str(k + 1) for k in a["sigma"])
                for variant, V in a["V"].items():
                    for i in range(d):
                        for j in range(d):
                            w.writerow([tag, variant, i + 1, j + 1, _fmt(V[i, j])])
        outputs.append(args.csv)
    _manifest(args.out, "predict", cfg, {}, outputs, started)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    raw = _load_json(args.config)
    cfg = mc.ExperimentConfig.from_dict(raw)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    outputs = []
    sweep = raw.get("N_sweep")
    if sweep:
        aggs = mc.sweep(cfg, [int(n) for n in sweep])
        path = outdir / "sweep.json"
        path.write_text(json.dumps([a.to_dict() for a in aggs], indent=2, sort_keys=True, allow_nan=False) + "\n")
        outputs.append(path)
        csv_path = outdir / "sweep.csv"
        mc.write_sweep_csv(csv_path, aggs)
        outputs.append(csv_path)
        last = aggs[-1]
    else:
        last = mc.run_experiment(cfg)
        path = outdir / "aggregate.json"
        path.write_text(last.to_json() + "\n")
        outputs.append(path)
    for j in range(cfg.d):
        hp = outdir / f"hist_1{j + 1}.csv"
        mc.write_histogram_csv(hp, last, 0, j)
        outputs.append(hp)
    _manifest(outdir / "simulate", "simulate", raw, {"base_seed": cfg.base_seed}, outputs, started)
    return EXIT_OK


def _grid(spec, default):
    lo, hi, n = spec if spec is not None else default
    return np.linspace(float(lo), float(hi), int(n))


def cmd_surface(args) -> int:
    started = time.perf_counter()
    cfg = _load_json(args.config)
    specs = _specs(cfg)
    d = len(specs)
    if d != 3:
        raise InputError(f"the (phi, chi) surface needs exactly 3 sources, got {d}")
    nls = parse_list(cfg.get("nonlinearities", ["kurtosis"]), d)
    seed = int(cfg.get("seed", 0))
    N = cfg.get("N", 100000)
    H = np.asarray(cfg.get("H", np.eye(d)), dtype=float)
    if N is None:  # exact expectations
        X, w = fastica.theoretical_data(specs, standardize_mixing(H))
    else:
        X, w = standardize(H @ sample_batch(specs, int(N), seed)).X, None
    signs = fastica.detect_signs(np.eye(d), X, nls, w)
    phi = _grid(cfg.get("phi"), (-0.5, 0.5, 41))
    chi = _grid(cfg.get("chi"), (-0.5, 0.5, 41))
    J1 = fastica.contrast_surface(phi, chi, X, nls, None, w)
    J2 = fastica.contrast_surface(phi, chi, X, nls, signs, w)
    out = Path(args.out)
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["phi", "chi", "J1", "J2"])
        for a, p in enumerate(phi):
            for b, c in enumerate(chi):
                wr.writerow([_fmt(p), _fmt(c), _fmt(J1[a, b]), _fmt(J2[a, b])])
    resolved = dict(cfg, nonlinearities=[n.to_json() for n in nls], signs=[int(s) for s in signs])
    _manifest(out, "surface", resolved, {"seed": seed}, [out], started)
    return EXIT_OK


def standardize_mixing(H):
    from .preprocess import inv_sqrt_sym

    return inv_sqrt_sym(H @ H.T) @ H


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsfica", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("separate", help="separate a CSV of observations (rows = samples)")
    s.add_argument("data")
    s.add_argument("--nonlinearities", "-g", default="tanh",
                   help="comma-separated kinds, one per component or one for all")
    s.add_argument("--centering", choices=["empirical", "exact", "none"], default="empirical")
    s.add_argument("--mu", type=lambda v: [float(x) for x in v.split(",")], default=None,
                   help="true mean for --centering exact, comma-separated")
    s.add_argument("--tol", type=float, default=fastica.DEFAULT_TOL)
    s.add_argument("--max-iter", type=int, default=fastica.DEFAULT_MAX_ITER)
    s.add_argument("--seed", type=int, default=None, help="random orthogonal start (default: identity)")
    s.add_argument("--out", "-o", default=None, help="JSON result path (default: stdout)")
    s.add_argument("--sources-out", default=None, help="write recovered sources as CSV")
    s.set_defaults(func=cmd_separate)

    s = sub.add_parser("predict", help="asymptotic variances, CRB and sign patterns")
    s.add_argument("config")
    s.add_argument("--out", "-o", default=None)
    s.add_argument("--csv", default=None, help="also write the variance table as CSV")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    s.add_argument("config")
    s.add_argument("--out-dir", "-o", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("surface", help="contrast values over the (phi, chi) grid")
    s.add_argument("config")
    s.add_argument("--out", "-o", required=True)
    s.set_defaults(func=cmd_surface)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"gsfica {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except GsficaError as exc:
        print(f"gsfica {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
