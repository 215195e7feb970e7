"""``drmtest`` command line.

Exit codes: 0 success, 2 usage error, 3 data or domain error, 4 numerical failure.
Machine output goes to --out (or stdout); diagnostics go to stderr, with
verbosity set by DRMTEST_LOG (error, warn, info, debug).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .dual import ConvergenceError, DimensionError
from .estimate import baseline_weights, el_kernel_density, fitted_cdf
from .dual import fit_mele
from .hypothesis import HypothesisParseError, parse_hypothesis
from .infer import (
    InternalConsistencyError,
    SingularInformationError,
    delr_test,
    permutation_test,
    wald_test,
)
from .model import BasisSpec, DomainError, MultiSample, validate_dataset
from .power import (
    BaselineSpec,
    DivergentIntegralError,
    LocalAlternative,
    UnreachablePowerError,
    local_power,
    noncentrality,
    sample_size,
    theoretical_information,
)
from .sim import StudyAbortedError, load_study_config, run_null_study, run_power_study, write_qq_csv

DEFAULT_SEED = 20160101
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("drmtest")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _blocks(text: str, what: str) -> np.ndarray:
    """'a,b;c,d' -> [[a, b], [c, d]]."""
    rows = [_floats(part, what) for part in text.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise UsageError(f"{what}: every ';'-separated block needs the same length")
    return np.array(rows, dtype=float)


def read_samples(path) -> MultiSample:
    """Read a CSV with header ``sample,value``; sample indices must be 0..m."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file {path} does not exist")
    groups: dict[int, list[float]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:2]] != ["sample", "value"]:
            raise DataError(f"{path}: header must be 'sample,value'")
        for line, row in enumerate(reader, start=2):
            try:
                k = int(row["sample"])
                v = float(row["value"])
            except (TypeError, ValueError):
                raise DataError(f"{path}:{line}: cannot parse {row}") from None
            if k < 0:
                raise DataError(f"{path}:{line}: negative sample index {k}")
            groups.setdefault(k, []).append(v)
    if not groups:
        raise DataError(f"{path}: no observations")
    if sorted(groups) != list(range(len(groups))):
        raise DataError(f"{path}: sample indices must be contiguous 0..m, got {sorted(groups)}")
    return MultiSample(tuple(np.array(groups[k]) for k in range(len(groups))))


def _load_data(args) -> tuple[MultiSample, BasisSpec]:
    basis = _basis(args.basis)
    data = read_samples(args.input)
    report = validate_dataset(data, basis)
    if not report.ok:
        raise DataError("; ".join(report.violations))
    return data, basis


def _basis(text: str) -> BasisSpec:
    try:
        return BasisSpec.parse(text)
    except ValueError as exc:
        raise UsageError(f"--basis: {exc}") from None


def _level(value: str) -> float:
    v = float(value)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {v}")
    return v


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _emit(args, doc=None, table=None):
    """Write a JSON document, or a CSV table (header row first)."""
    buf = io.StringIO()
    if table is not None:
        csv.writer(buf, lineterminator="\n").writerows(table)
    elif args.format == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        for k, v in doc.items():
            writer.writerow([k, json.dumps(_jsonable(v)) if isinstance(v, (dict, list, np.ndarray)) else v])
    else:
        json.dump(_jsonable(doc), buf, indent=2, sort_keys=False)
        buf.write("\n")
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _theta_doc(theta) -> dict:
    return {"alpha": theta.alpha, "beta": theta.beta_blocks}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _run_test(data, basis, c, args):
    if args.method == "delr":
        return delr_test(data, basis, c)
    if args.method == "wald":
        return wald_test(data, basis, c)
    return permutation_test(data, basis, reps=args.reps, seed=args.seed, c=c)


def cmd_test(args) -> int:
    data, basis = _load_data(args)
    m, d = data.m, basis.d
    if args.pairwise:
        return _pairwise(args, data, basis)
    c = _hypothesis(args.hypothesis, m, d)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = _run_test(data, basis, c, args)
    for w in caught:
        log.warning("%s", w.message)
    fits = res.fits
    diagnostics = {
        "method": res.method,
        "n": data.n,
        "sizes": data.sizes,
        "q": c.q,
        "converged": [f.converged for f in fits],
        "iterations": [f.iterations for f in fits],
        "gradient_norm": [f.gradient_norm for f in fits],
        "warnings": [str(w.message) for w in caught],
    }
    if "reps" in res.details:
        diagnostics["permutations"] = res.details["reps"]
    if "failures" in res.details:
        diagnostics["permutation_failures"] = res.details["failures"]
    theta = res.theta_hat
    if theta is None:
        theta = fit_mele(data, basis).theta_hat
    _emit(args, {
        "statistic": res.statistic,
        "df": res.df,
        "p_value": res.p_value,
        "theta_hat": _theta_doc(theta),
        "diagnostics": diagnostics,
    })
    return EXIT_OK


def _pairwise(args, data, basis) -> int:
    """Test F_i = F_j for all pairs using every sample to estimate F_0."""
    k = data.m + 1
    d = basis.d
    pvals = np.full((k, k), np.nan)
    stats = np.full((k, k), np.nan)
    pairs = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for i in range(k):
            for j in range(i + 1, k):
                c = parse_hypothesis(f"equal:{i},{j}", data.m, d)
                if args.method == "perm":
                    sub = data.subset([i, j])
                    res = permutation_test(sub, basis, reps=args.reps, seed=args.seed)
                else:
                    res = _run_test(data, basis, c, args)
                pairs.append({"i": i, "j": j, "statistic": res.statistic, "p_value": res.p_value})
                stats[i, j] = stats[j, i] = res.statistic
                pvals[i, j] = pvals[j, i] = res.p_value
    n_pairs = len(pairs)
    adjusted = np.minimum(1.0, pvals * n_pairs) if args.bonferroni else pvals
    for p in pairs:
        p["p_adjusted"] = adjusted[p["i"], p["j"]]
    np.fill_diagonal(adjusted, 1.0)
    if args.format == "csv":
        table = [["i", "j", "statistic", "p_value", "p_adjusted"]]
        table += [[p["i"], p["j"], repr(float(p["statistic"])), repr(float(p["p_value"])),
                   repr(float(p["p_adjusted"]))] for p in pairs]
        _emit(args, table=table)
    else:
        _emit(args, {
            "pairs": pairs,
            "p_value_matrix": adjusted,
            "adjustment": "bonferroni" if args.bonferroni else "none",
            "diagnostics": {"method": args.method, "warnings": [str(w.message) for w in caught]},
        })
    return EXIT_OK


def _hypothesis(text, m, d):
    if not text:
        raise UsageError("--hypothesis is required")
    return parse_hypothesis(text, m, d)


def _power_inputs(args):
    basis = _basis(args.basis)
    try:
        f0 = BaselineSpec.parse(args.f0)
    except ValueError as exc:
        raise DataError(f"--f0: {exc}") from None
    rho = np.array(_floats(args.rho, "--rho"))
    m, d = rho.size - 1, basis.d
    beta_star = _blocks(args.beta_star, "--beta-star")
    if beta_star.shape != (m, d):
        raise UsageError(f"--beta-star needs {m} blocks of {d} values, got shape {beta_star.shape}")
    c = _hypothesis(args.hypothesis, m, d)
    return basis, f0, rho, beta_star, c


def cmd_power(args) -> int:
    basis, f0, rho, beta_star, c = _power_inputs(args)
    drifts = _blocks(args.drift, "--drift")
    if drifts.shape != beta_star.shape:
        raise UsageError(f"--drift needs shape {beta_star.shape}, got {drifts.shape}")
    alt = LocalAlternative(beta_star.ravel(), drifts, rho)
    alt.check_null(c)
    U = theoretical_information(f0, alt.beta_star, rho, basis)
    delta2 = noncentrality(alt, U, c)
    _emit(args, {"delta2": delta2, "power": local_power(delta2, c.q, args.level), "df": c.q,
                 "level": args.level})
    return EXIT_OK


def cmd_samplesize(args) -> int:
    basis, f0, rho, beta_star, c = _power_inputs(args)
    shifts = _blocks(args.shift, "--shift")
    if shifts.shape != beta_star.shape:
        raise UsageError(f"--shift needs shape {beta_star.shape}, got {shifts.shape}")
    res = sample_size(args.target, args.level, shifts, rho, f0, beta_star.ravel(), c, basis)
    _emit(args, {"n_star": res.n_star, "power_at_n_star": res.power_at_n_star,
                 "power_below": res.power_below, "delta2_per_n": res.delta2_per_n})
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = load_study_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read study config: {exc}") from None
    if args.replicates is not None:
        cfg.replicates = args.replicates
    if args.seed_given:
        cfg.seed = args.seed
    workers = args.threads
    if args.qq:
        null = run_null_study(cfg, workers=workers)
        write_qq_csv(args.qq, null.qq_pairs())
        log.info("null rejection rate %.4f, KS distance %.4f", null.rejection_rate, null.ks_distance())
    table = run_power_study(cfg, workers=workers)
    rows = [["setting", "method", "rate", "se", "failures"]]
    rows += [[r.setting, r.method, f"{r.rate:.6g}", f"{r.se:.6g}", r.failures] for r in table.rows]
    _emit(args, table=rows)
    return EXIT_OK


def cmd_density(args) -> int:
    data, basis = _load_data(args)
    if not 0 <= args.sample <= data.m:
        raise UsageError(f"--sample must lie in 0..{data.m}")
    fit = fit_mele(data, basis)
    wb = baseline_weights(fit, data, basis)
    if args.grid:
        lo, hi, num = args.grid.split(":")
        grid = np.linspace(float(lo), float(hi), int(num))
    else:
        x = data.pooled
        pad = 0.1 * (x.max() - x.min() or 1.0)
        grid = np.linspace(x.min() - pad, x.max() + pad, 201)
    if args.cdf:
        values = fitted_cdf(wb, args.sample, grid)
    else:
        values = el_kernel_density(wb, args.sample, bandwidth=args.bandwidth, grid=grid)
    rows = [["x", "value"]] + [[repr(float(a)), repr(float(b))] for a, b in zip(grid, values)]
    _emit(args, table=rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--level", type=_level, default=0.05)
    common.add_argument("--seed", type=int, default=None,
                        help=f"RNG seed (default {DEFAULT_SEED})")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default=None,
                        help="json for test/power/samplesize, csv for simulate/density (defaults)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes for simulations (default: all CPUs)")

    data = _Parser(add_help=False)
    data.add_argument("--input", required=True, help="CSV with header sample,value")
    data.add_argument("--basis", required=True, help="basis terms, e.g. x,x2 or logx,x")

    power = _Parser(add_help=False)
    power.add_argument("--f0", required=True, help="baseline, e.g. gamma:2,1 or normal:0,1")
    power.add_argument("--rho", required=True, help="sample proportions rho_0,...,rho_m")
    power.add_argument("--basis", required=True)
    power.add_argument("--beta-star", required=True, help="null parameters 'b11,b12;b21,b22'")
    power.add_argument("--hypothesis", required=True)

    parser = _Parser(prog="drmtest", description="Empirical likelihood tests under the density ratio model.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("test", parents=[common, data], help="DELR, Wald, or permutation test")
    p.add_argument("--hypothesis", help="e.g. equal:all, equal:1,2;3,4, lincomb:2*b1-b2=0")
    p.add_argument("--method", choices=("delr", "wald", "perm"), default="delr")
    p.add_argument("--reps", type=int, default=999, help="permutations for --method perm")
    p.add_argument("--pairwise", action="store_true", help="test every pair of samples")
    p.add_argument("--bonferroni", action="store_true", help="Bonferroni-adjust pairwise p-values")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("power", parents=[common, power], help="asymptotic local power")
    p.add_argument("--drift", required=True, help="local drifts c_k, 'c11,c12;c21,c22'")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("samplesize", parents=[common, power], help="smallest n reaching a target power")
    p.add_argument("--shift", required=True, help="fixed shifts beta_k - beta_k*, 's11,s12;s21,s22'")
    p.add_argument("--target", type=float, default=0.8)
    p.set_defaults(func=cmd_samplesize)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo power table from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--replicates", type=int, help="override the config's replicate count")
    p.add_argument("--qq", help="also run the null study and write QQ pairs to this CSV")
    p.set_defaults(func=cmd_simulate, table=True)

    p = sub.add_parser("density", parents=[common, data], help="EL kernel density or fitted CDF on a grid")
    p.add_argument("--sample", type=int, default=0)
    p.add_argument("--grid", help="lo:hi:num")
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--cdf", action="store_true", help="fitted CDF instead of density")
    p.set_defaults(func=cmd_density, table=True)
    return parser


_VALUE_FLAGS = {"--beta-star", "--drift", "--shift", "--rho", "--hypothesis", "--grid", "--f0"}


def _join_negative_values(argv: list) -> list:
    """Let values such as "-1,1;-2,2" follow their flag without '='."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") and not argv[i + 1].startswith("--"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def _configure_logging():
    level = _LOG_LEVELS.get(os.environ.get("DRMTEST_LOG", "warn").lower(), logging.WARNING)
    root = logging.getLogger("drmtest")
    root.setLevel(level)
    if not root.handlers:
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("drmtest: %(levelname)s: %(message)s"))
        root.addHandler(handler)


def run(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_values(sys.argv[1:] if argv is None else list(argv)))
        if args.command is None:
            raise UsageError("a command is required: test, power, samplesize, simulate, density")
        if args.format is None:
            args.format = "csv" if getattr(args, "table", False) else "json"
        args.seed_given = args.seed is not None
        if args.seed is None:
            args.seed = DEFAULT_SEED
        log.debug("arguments: %s", vars(args))
        return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (UsageError, HypothesisParseError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (ConvergenceError, SingularInformationError, InternalConsistencyError, StudyAbortedError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (DataError, DomainError, DimensionError, DivergentIntegralError, UnreachablePowerError,
            ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
