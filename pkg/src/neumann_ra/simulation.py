"""Monte-Carlo experiment harness: instances, assignment sampling, metrics.

Each outer replicate fixes one master covariate matrix, slices and normalizes
its leading columns per dimension exponent, attaches potential outcomes from
one of two residual models, then evaluates every estimator on N independent
uniformly drawn assignments.  Bias and variance are reported on the scale of
the population residual standard deviation, and all randomness flows through
counter-style substreams of a single master seed so results are identical for
any worker count.
"""

from __future__ import annotations

import csv
import hashlib
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import NormalizedDesign, RawCovariates, normalize, winsorize
from .errors import NeumannRAError
from .estimators import (
    Assignment,
    PotentialOutcomes,
    corrections,
    dim,
    observe,
    ols_ra,
    population_ols,
)
from .folding import GramContext, neumann_weights

RESIDUAL_MODELS = ("typical", "worst_case")
DISTRIBUTIONS = ("gaussian", "t2")

# Substream purposes, used as spawn keys off the master seed.
_PURPOSE_MASTER = 0
_PURPOSE_BETA = 1
_PURPOSE_RESIDUAL = 2
_PURPOSE_ASSIGN = 3


@dataclass(frozen=True)
class SimConfig:
    n: int
    n1: int
    gammas: tuple[float, ...]
    dist: str = "gaussian"
    winsorize_quantiles: tuple[float, float] | None = None
    residual_model: str = "typical"
    n_assignments: int = 2000
    n_replicates: int = 50
    degrees: tuple[int, ...] = (0, 1, 2, 3)
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.n1 <= self.n - 1):
            raise NeumannRAError("need 1 <= n1 <= n-1")
        if self.n_assignments < 1 or self.n_replicates < 1:
            raise NeumannRAError("need at least one assignment and one replicate")
        if any(not (0.0 <= g < 1.0) for g in self.gammas):
            raise NeumannRAError("dimension exponents must lie in [0, 1)")
        if self.dist not in DISTRIBUTIONS:
            raise NeumannRAError(f"dist must be one of {DISTRIBUTIONS}")
        if self.residual_model not in RESIDUAL_MODELS:
            raise NeumannRAError(f"residual_model must be one of {RESIDUAL_MODELS}")

    @property
    def methods(self) -> tuple[str, ...]:
        return ("dim", "ols") + tuple(f"neumann_d{d}" for d in self.degrees)

    def fingerprint(self) -> str:
        text = repr((
            self.n, self.n1, self.gammas, self.dist, self.winsorize_quantiles,
            self.residual_model, self.n_assignments, self.n_replicates,
            self.degrees, self.seed,
        ))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ExperimentInstance:
    """One fixed finite population: design, both outcome vectors, and the truth."""

    design: NormalizedDesign
    outcomes: PotentialOutcomes
    tau: float
    sigma_n2: float
    p: int


def _rng(seed: int, *spawn_key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=spawn_key))


def generate_master(n: int, dist: str, seed: int, replicate: int = 0) -> np.ndarray:
    """n-by-n matrix with i.i.d. standard Gaussian or t(2) entries."""
    rng = _rng(seed, _PURPOSE_MASTER, replicate)
    if dist == "gaussian":
        return rng.standard_normal((n, n))
    if dist == "t2":
        return rng.standard_t(2, size=(n, n))
    raise NeumannRAError(f"unknown distribution {dist!r}")


def worst_case_residual(design: NormalizedDesign) -> np.ndarray:
    """Residual direction aligned with the centered leverage profile.

    Projects ``h - (p/n) 1`` off the intercept-and-covariate span and rescales
    to mean square one.  If that direction vanishes (all leverages equal), any
    feasible direction works; standard basis vectors are projected in order
    until one survives.
    """
    n, p = design.n, design.p
    h = np.einsum("ij,ij->i", design.X, design.X) / n
    target = h - p / n

    def residualize(v: np.ndarray) -> np.ndarray:
        out = v - v.mean()
        if p:
            out = out - design.X @ (design.X.T @ out) / n
        return out

    direction = residualize(target)
    norm = float(np.linalg.norm(direction))
    if norm < 1e-12 * math.sqrt(n):
        for k in range(n):
            basis = np.zeros(n)
            basis[k] = 1.0
            direction = residualize(basis)
            norm = float(np.linalg.norm(direction))
            if norm >= 1e-9:
                break
        else:
            raise NeumannRAError("no direction orthogonal to the design span")
    return math.sqrt(n) * direction / norm


def sigma_n2(r1: np.ndarray, r0: np.ndarray, n1: int, n0: int) -> float:
    """Residual-scale variance proxy used to normalize bias and variance."""
    r1 = np.asarray(r1, dtype=float)
    r0 = np.asarray(r0, dtype=float)
    n = n1 + n0
    return float(r1 @ r1 / n1 + r0 @ r0 / n0 - (r1 - r0) @ (r1 - r0) / n)


def build_instance(master: np.ndarray, gamma: float, config: SimConfig,
                   replicate: int = 0, gamma_index: int = 0) -> ExperimentInstance:
    """Slice p = ceil(n^gamma) leading columns, normalize, attach outcomes."""
    n = config.n
    p = int(math.ceil(n**gamma))
    if p > n - 2:
        raise NeumannRAError(f"p={p} too large for n={n}")
    raw = RawCovariates(master[:, :p].copy())
    if config.winsorize_quantiles is not None:
        raw = winsorize(raw, *config.winsorize_quantiles)
    design = normalize(raw)
    rng_beta = _rng(config.seed, _PURPOSE_BETA, replicate, gamma_index)
    direction = rng_beta.standard_normal(p)
    beta_star = direction / np.linalg.norm(direction) if p else direction
    signal = design.X @ beta_star
    if config.residual_model == "typical":
        rng_eps = _rng(config.seed, _PURPOSE_RESIDUAL, replicate, gamma_index)
        eps1 = rng_eps.standard_normal(n)
        eps0 = rng_eps.standard_normal(n)
    else:
        eps = worst_case_residual(design)
        eps1 = 3.0 * eps
        eps0 = eps
    outcomes = PotentialOutcomes(signal + eps1, signal + eps0)
    r1 = population_ols(design, outcomes.y1).residuals
    r0 = population_ols(design, outcomes.y0).residuals
    return ExperimentInstance(
        design=design,
        outcomes=outcomes,
        tau=outcomes.tau,
        sigma_n2=sigma_n2(r1, r0, config.n1, n - config.n1),
        p=p,
    )


def sample_assignment(rng: np.random.Generator, n: int, n1: int) -> Assignment:
    return Assignment(tuple(int(i) for i in rng.permutation(n)[:n1]), n)


@dataclass
class ReplicateResult:
    replicate: int
    # (gamma, assignment_id, method) -> estimate, in deterministic row order.
    estimates: list[tuple[float, int, str, float]]
    # (gamma, method) -> (nbias, nvar, nrmse)
    metrics: list[tuple[float, str, float, float, float]]


@dataclass
class ExperimentResult:
    config: SimConfig
    replicates: list[ReplicateResult]
    # (gamma, method, stat) -> (median, q10, q90)
    summary: list[tuple[float, str, str, float, float, float]] = field(default_factory=list)


def evaluate_instance(instance: ExperimentInstance, config: SimConfig,
                      rng_assign: np.random.Generator) -> dict[str, list[float]]:
    """Estimates of every configured method over N fresh assignments."""
    n, n1 = config.n, config.n1
    max_d = max(config.degrees) if config.degrees else -1
    ctx = GramContext(instance.design)
    if max_d >= 0:
        treated_w = [neumann_weights(d, n1, ctx, max_degree=max(max_d, 3)) for d in range(max_d + 1)]
        control_w = [neumann_weights(d, n - n1, ctx, max_degree=max(max_d, 3)) for d in range(max_d + 1)]
    per_method: dict[str, list[float]] = {method: [] for method in config.methods}
    for _ in range(config.n_assignments):
        assignment = sample_assignment(rng_assign, n, n1)
        observed = observe(instance.design, instance.outcomes, assignment)
        values = {"dim": dim(observed)}
        if max_d >= 0:
            result = corrections(observed, treated_w, control_w)
            values["ols"] = result.tau_ols
            for d in config.degrees:
                values[f"neumann_d{d}"] = result.estimate(d)
        else:
            values["ols"] = ols_ra(observed)
        for method in config.methods:
            per_method[method].append(values[method])
    return per_method


def instance_metrics(per_method: dict[str, list[float]], instance: ExperimentInstance,
                     config: SimConfig) -> list[tuple[str, float, float, float]]:
    """(method, normalized |bias|, normalized variance, nrmse) rows for one instance."""
    n = config.n
    sigma_n = math.sqrt(instance.sigma_n2) if instance.sigma_n2 > 0 else float("nan")
    rows = []
    for method in config.methods:
        vals = np.asarray(per_method[method])
        nbias = abs(float(vals.mean()) - instance.tau) * math.sqrt(n) / sigma_n
        if len(vals) > 1:
            nvar = float(vals.var(ddof=1)) * n / (sigma_n**2)
        else:
            nvar = 0.0
        rows.append((method, nbias, nvar, math.sqrt(nbias**2 + nvar)))
    return rows


def run_replicate(config: SimConfig, replicate: int) -> ReplicateResult:
    """All estimates and per-instance metrics for one outer replicate."""
    master = generate_master(config.n, config.dist, config.seed, replicate)
    estimates: list[tuple[float, int, str, float]] = []
    metrics: list[tuple[float, str, float, float, float]] = []
    for gamma_index, gamma in enumerate(config.gammas):
        instance = build_instance(master, gamma, config, replicate, gamma_index)
        rng_assign = _rng(config.seed, _PURPOSE_ASSIGN, replicate, gamma_index)
        per_method = evaluate_instance(instance, config, rng_assign)
        if not instance.sigma_n2 > 0:
            warnings.warn(
                f"replicate {replicate}, gamma {gamma}: nonpositive sigma_n^2, metrics undefined",
                RuntimeWarning,
            )
        if config.n_assignments == 1:
            warnings.warn("single assignment per instance: variance reported as 0",
                          RuntimeWarning)
        for k in range(config.n_assignments):
            for method in config.methods:
                estimates.append((gamma, k, method, per_method[method][k]))
        for method, nbias, nvar, nrmse in instance_metrics(per_method, instance, config):
            metrics.append((gamma, method, nbias, nvar, nrmse))
    return ReplicateResult(replicate, estimates, metrics)


def _summarize(config: SimConfig, replicates: list[ReplicateResult]):
    summary = []
    stats = ("bias", "variance", "nrmse")
    for gamma in config.gammas:
        for method in config.methods:
            values = {stat: [] for stat in stats}
            for rep in replicates:
                for g, meth, nbias, nvar, nrmse in rep.metrics:
                    if g == gamma and meth == method:
                        values["bias"].append(nbias)
                        values["variance"].append(nvar)
                        values["nrmse"].append(nrmse)
            for stat in stats:
                arr = np.asarray(values[stat])
                summary.append((
                    gamma, method, stat,
                    float(np.median(arr)),
                    float(np.quantile(arr, 0.10)),
                    float(np.quantile(arr, 0.90)),
                ))
    return summary


def _partial_path(out_dir: Path, config: SimConfig, replicate: int) -> Path:
    return out_dir / "partial" / f"{config.fingerprint()}_rep{replicate:04d}.csv"


def _save_partial(path: Path, result: ReplicateResult) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        for gamma, k, method, estimate in result.estimates:
            writer.writerow(["e", f"{gamma:.17g}", k, method, f"{estimate:.17g}"])
        for gamma, method, nbias, nvar, nrmse in result.metrics:
            writer.writerow([
                "m", f"{gamma:.17g}", method,
                f"{nbias:.17g}", f"{nvar:.17g}", f"{nrmse:.17g}",
            ])
    tmp.replace(path)


def _load_partial(path: Path, replicate: int) -> ReplicateResult:
    estimates = []
    metrics = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row[0] == "e":
                estimates.append((float(row[1]), int(row[2]), row[3], float(row[4])))
            else:
                metrics.append((float(row[1]), row[2], float(row[3]), float(row[4]), float(row[5])))
    return ReplicateResult(replicate, estimates, metrics)


def run_experiment(config: SimConfig, out_dir: str | Path | None = None,
                   threads: int = 1, version: str = "0") -> ExperimentResult:
    """Run all replicates, write estimates.csv and metrics.csv, return the result.

    Replicates are independent jobs; with ``threads > 1`` they run in worker
    processes.  Output rows are ordered by (replicate, gamma, assignment,
    method) regardless of scheduling, and completed replicates are persisted
    under ``out_dir/partial`` and reused on reruns with the same config.
    """
    out_path = Path(out_dir) if out_dir is not None else None
    results: dict[int, ReplicateResult] = {}
    pending = []
    for rep in range(config.n_replicates):
        if out_path is not None:
            partial = _partial_path(out_path, config, rep)
            if partial.exists():
                results[rep] = _load_partial(partial, rep)
                continue
        pending.append(rep)
    if pending:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                for rep, res in zip(pending, pool.map(run_replicate, [config] * len(pending), pending)):
                    results[rep] = res
        else:
            for rep in pending:
                results[rep] = run_replicate(config, rep)
        if out_path is not None:
            for rep in pending:
                _save_partial(_partial_path(out_path, config, rep), results[rep])
    ordered = [results[rep] for rep in range(config.n_replicates)]
    experiment = ExperimentResult(config, ordered, _summarize(config, ordered))
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        write_estimates_csv(out_path / "estimates.csv", experiment, version)
        write_metrics_csv(out_path / "metrics.csv", experiment, version)
    return experiment


def write_estimates_csv(path: str | Path, experiment: ExperimentResult, version: str = "0") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# neumann-ra {version}\n")
        writer = csv.writer(fh)
        writer.writerow(["replicate", "gamma", "assignment_id", "method", "estimate"])
        for rep in experiment.replicates:
            for gamma, k, method, estimate in rep.estimates:
                writer.writerow([rep.replicate, f"{gamma:.17g}", k, method, f"{estimate:.17g}"])


def write_metrics_csv(path: str | Path, experiment: ExperimentResult, version: str = "0") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# neumann-ra {version}\n")
        writer = csv.writer(fh)
        writer.writerow(["gamma", "method", "stat", "median", "q10", "q90"])
        for gamma, method, stat, med, q10, q90 in experiment.summary:
            writer.writerow([
                f"{gamma:.17g}", method, stat,
                f"{med:.17g}", f"{q10:.17g}", f"{q90:.17g}",
            ])
