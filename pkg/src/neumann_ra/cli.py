"""Command-line entry point.

Subcommands: normalize, weights, estimate, simulate, oracle-check, envelope.
Computational failures exit 1 with a machine-readable ``error\t<kind>\t<msg>``
line on stderr; usage problems exit 2.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .design import (
    NormalizedDesign,
    normalize,
    read_covariates_csv,
    write_covariates_csv,
)
from .envelopes import envelope_report
from .errors import NeumannRAError
from .estimators import Assignment, ObservedData, corrections, dim, ols_ra, population_ols
from .folding import GramContext, closed_form_weights_d0, neumann_weights, scalar_expectation
from .oracle import (
    exact_expectation,
    exact_weight_vector,
    injective_aggregates,
)
from .simulation import SimConfig, run_experiment
from .weights_io import WeightStore

CACHE_ENV_VAR = "NEUMANN_RA_CACHE_DIR"


def _cache_dir(args) -> str | None:
    if getattr(args, "weights_cache", None):
        return args.weights_cache
    return os.environ.get(CACHE_ENV_VAR) or None


def _load_design(path: str) -> NormalizedDesign:
    return normalize(read_covariates_csv(path))


def cmd_normalize(args) -> int:
    design = _load_design(args.covariates)
    out = Path(args.out) if args.out else Path(args.covariates).with_suffix(".normalized.csv")
    write_covariates_csv(out, design.X, comment=f"neumann-ra {__version__}")
    x = design.X
    col_dev = float(np.max(np.abs(x.sum(axis=0)))) if design.p else 0.0
    gram_dev = (
        float(np.max(np.abs(x.T @ x - design.n * np.eye(design.p)))) if design.p else 0.0
    )
    print(f"n\t{design.n}")
    print(f"p\t{design.p}")
    print(f"max_column_sum\t{col_dev:.17g}")
    print(f"max_gram_deviation\t{gram_dev:.17g}")
    print(f"wrote\t{out}")
    return 0


def cmd_weights(args) -> int:
    design = _load_design(args.covariates)
    store = WeightStore(_cache_dir(args))
    vector = store.get_or_compute(design, args.m, args.d)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(f"# neumann-ra {__version__}\n")
            writer = csv.writer(fh)
            writer.writerow(["unit", "xi"])
            for i, value in enumerate(vector.xi):
                writer.writerow([i, f"{value:.17g}"])
        print(f"wrote\t{args.out}")
    else:
        for i, value in enumerate(vector.xi):
            print(f"{i}\t{value:.17g}")
    return 0


def cmd_estimate(args) -> int:
    design = _load_design(args.covariates)
    outcomes = []
    treated = []
    with open(args.observed, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        if [h.strip() for h in header] != ["y", "t"]:
            raise NeumannRAError(f"expected observed header ['y', 't'], got {header}")
        for row in reader:
            if row:
                outcomes.append(float(row[0]))
                treated.append(int(row[1]))
    if len(outcomes) != design.n:
        raise NeumannRAError("observed file row count differs from the design")
    assignment = Assignment(tuple(i for i, t in enumerate(treated) if t), design.n)
    observed = ObservedData(design, assignment, np.asarray(outcomes))
    store = WeightStore(_cache_dir(args))
    rows = [("dim", dim(observed)), ("ols", ols_ra(observed))]
    if args.d >= 0:
        treated_w = [store.get_or_compute(design, assignment.n1, d) for d in range(args.d + 1)]
        control_w = [store.get_or_compute(design, assignment.n0, d) for d in range(args.d + 1)]
        result = corrections(observed, treated_w, control_w)
        for d in range(args.d + 1):
            rows.append((f"neumann_d{d}", result.estimate(d)))
    writer = csv.writer(sys.stdout)
    writer.writerow(["assignment_id", "method", "estimate"])
    for method, value in rows:
        writer.writerow([0, method, f"{value:.17g}"])
    return 0


def _parse_config_file(path: str) -> dict:
    values: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise NeumannRAError(f"bad config line: {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _build_config(args) -> SimConfig:
    raw = _parse_config_file(args.config) if args.config else {}

    def pick(key, flag, default=None):
        if flag is not None:
            return flag
        return raw.get(key, default)

    gammas = pick("gammas", None, "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7")
    degrees = pick("degrees", None, "0,1,2,3")
    wins = raw.get("winsorize", "")
    return SimConfig(
        n=int(pick("n", args.n, 500)),
        n1=int(pick("n1", args.n1, 150)),
        gammas=tuple(float(v) for v in str(gammas).split(",") if v != ""),
        dist=str(pick("dist", None, "gaussian")),
        winsorize_quantiles=(
            tuple(float(v) for v in wins.split(","))[:2] if wins else None
        ),
        residual_model=str(pick("residual_model", None, "typical")),
        n_assignments=int(pick("N", args.N, 2000)),
        n_replicates=int(pick("R", args.R, 50)),
        degrees=tuple(int(v) for v in str(degrees).split(",") if v != ""),
        seed=int(pick("seed", args.seed, 0)),
    )


def cmd_simulate(args) -> int:
    config = _build_config(args)
    out_dir = Path(args.out_dir or "simulation_out")
    threads = args.threads or os.cpu_count() or 1
    run_experiment(config, out_dir, threads=threads, version=__version__)
    print(f"wrote\t{out_dir / 'estimates.csv'}")
    print(f"wrote\t{out_dir / 'metrics.csv'}")
    return 0


def cmd_oracle_check(args) -> int:
    """Certify the engine against brute-force enumeration on small fixtures."""
    from .combinatorics import enumerate_partitions, enumerate_words
    from .design import RawCovariates
    from .folding import class_aggregates

    rng = np.random.default_rng(20240817)
    failures = 0
    print("check\tcase\tmax_deviation\tstatus")
    for n in range(6, args.max_n + 1, 2):
        design = normalize(RawCovariates(rng.standard_normal((n, 2))))
        ctx = GramContext(design)
        r = population_ols(design, rng.standard_normal(n)).residuals
        for d in range(args.max_d + 1):
            m = max(2, n // 2)
            dev_w = float(np.max(np.abs(
                neumann_weights(d, m, ctx).xi - exact_weight_vector(d, m, design)
            )))
            status = "ok" if dev_w < 1e-8 else "FAIL"
            failures += status == "FAIL"
            print(f"weights\tn={n},m={m},d={d}\t{dev_w:.3e}\t{status}")
            dev_e = abs(
                scalar_expectation(d, m, ctx, r) - exact_expectation(d, m, design, r)
            )
            status = "ok" if dev_e < 1e-8 else "FAIL"
            failures += status == "FAIL"
            print(f"expectation\tn={n},m={m},d={d}\t{dev_e:.3e}\t{status}")
        if n == 6:
            d0 = closed_form_weights_d0(3, ctx).xi
            dev = float(np.max(np.abs(neumann_weights(0, 3, ctx).xi - d0)))
            status = "ok" if dev < 1e-9 else "FAIL"
            failures += status == "FAIL"
            print(f"closed_form\tn={n},m=3,d=0\t{dev:.3e}\t{status}")
    design = normalize(RawCovariates(rng.standard_normal((7, 2))))
    ctx = GramContext(design)
    worst = 0.0
    for word in enumerate_words(min(args.max_d, 1)):
        for pi in enumerate_partitions(word.length):
            phi0, phi1 = class_aggregates(word, pi, 2, ctx)
            ref0, ref1 = injective_aggregates(word, pi, design, 2)
            scale = max(1.0, abs(ref0), abs(ref1))
            worst = max(worst, abs(phi0 - ref0) / scale, abs(phi1 - ref1) / scale)
    status = "ok" if worst < 1e-9 else "FAIL"
    failures += status == "FAIL"
    print(f"class_aggregates\tn=7,d<=1\t{worst:.3e}\t{status}")
    return 1 if failures else 0


def cmd_envelope(args) -> int:
    design = _load_design(args.covariates)
    if args.residuals:
        rows = []
        with open(args.residuals, newline="") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            next(reader)
            for row in reader:
                if row:
                    rows.append([float(v) for v in row])
        r1 = np.asarray([row[0] for row in rows])
        r0 = np.asarray([row[1] for row in rows])
        r1 = r1 - r1.mean()
        r0 = r0 - r0.mean()
    else:
        from .simulation import worst_case_residual

        r0 = worst_case_residual(design)
        r1 = 3.0 * r0
    report = envelope_report(
        design, r1, r0, args.m, args.delta, args.d,
        n_draws=args.draws, seed=args.seed or 0,
    )
    for key, value in report.as_rows():
        print(f"{key}\t{value:.17g}")
    if not report.series_certified:
        print("note\tseries not certified convergent (alpha_env >= 1)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neumann-ra",
        description="Design-based ATE estimation with series-corrected regression adjustment",
    )
    parser.add_argument("--version", action="version", version=f"neumann-ra {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_norm = sub.add_parser("normalize", help="center and whiten a covariate CSV")
    p_norm.add_argument("covariates")
    p_norm.add_argument("--out")
    p_norm.set_defaults(func=cmd_normalize)

    p_weights = sub.add_parser("weights", help="compute per-unit correction weights")
    p_weights.add_argument("covariates")
    p_weights.add_argument("--d", type=int, required=True)
    p_weights.add_argument("--m", type=int, required=True)
    p_weights.add_argument("--out")
    p_weights.add_argument("--weights-cache")
    p_weights.set_defaults(func=cmd_weights)

    p_est = sub.add_parser("estimate", help="estimate effects on supplied data")
    p_est.add_argument("covariates")
    p_est.add_argument("observed", help="CSV with header y,t")
    p_est.add_argument("--d", type=int, default=1)
    p_est.add_argument("--weights-cache")
    p_est.set_defaults(func=cmd_estimate)

    p_sim = sub.add_parser("simulate", help="run the experiment harness")
    p_sim.add_argument("--config")
    p_sim.add_argument("--n", type=int)
    p_sim.add_argument("--n1", type=int)
    p_sim.add_argument("--N", type=int)
    p_sim.add_argument("--R", type=int)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--threads", type=int)
    p_sim.add_argument("--out-dir")
    p_sim.set_defaults(func=cmd_simulate)

    p_oracle = sub.add_parser("oracle-check", help="certify the engine against brute force")
    p_oracle.add_argument("--max-n", type=int, default=8)
    p_oracle.add_argument("--max-d", type=int, default=2)
    p_oracle.set_defaults(func=cmd_oracle_check)

    p_env = sub.add_parser("envelope", help="emit concentration-envelope diagnostics")
    p_env.add_argument("covariates")
    p_env.add_argument("--m", type=int, required=True)
    p_env.add_argument("--delta", type=float, default=0.1)
    p_env.add_argument("--d", type=int, default=1)
    p_env.add_argument("--draws", type=int, default=0)
    p_env.add_argument("--seed", type=int)
    p_env.add_argument("--residuals", help="CSV with header r1,r0")
    p_env.set_defaults(func=cmd_envelope)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NeumannRAError as exc:
        print(f"error\t{type(exc).__name__}\t{exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
