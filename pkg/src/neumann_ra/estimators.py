"""Difference-in-means, arm-wise OLS adjustment, correction terms, and audits.

Under the design normalization the population OLS of an outcome vector on
``[1, X]`` has closed-form coefficients (mean and ``X'y / n``), and the
adjusted-estimator error decomposes exactly into a residual difference in
means minus an arm-wise remainder; the remainder's series terms in
``I - Sigma_arm`` are what the correction weights estimate.  The audit
operation recomputes every piece of that decomposition from both potential
outcome vectors and is a verification tool, not an estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import NormalizedDesign
from .errors import (
    ArmTooSmall,
    NeumannRAError,
    SingularArmCovariance,
    WeightArmMismatch,
)
from .folding import NeumannWeightVector

SIGMA_MIN_EIGENVALUE = 1e-10


@dataclass(frozen=True)
class PotentialOutcomes:
    """Fixed treated/control outcome vectors for the whole population."""

    y1: np.ndarray
    y0: np.ndarray

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=float)
        y0 = np.asarray(self.y0, dtype=float)
        if y1.shape != y0.shape or y1.ndim != 1:
            raise NeumannRAError("potential outcome vectors must be equal-length 1-d arrays")
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(y0))):
            raise NeumannRAError("potential outcomes contain non-finite entries")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y0", y0)

    @property
    def tau(self) -> float:
        return float(self.y1.mean() - self.y0.mean())


@dataclass(frozen=True)
class Assignment:
    """A treated subset of fixed size; the control arm is its complement."""

    treated: tuple[int, ...]
    n: int

    def __post_init__(self):
        treated = tuple(sorted(int(i) for i in self.treated))
        if not (1 <= len(treated) <= self.n - 1):
            raise NeumannRAError("treated arm must have between 1 and n-1 units")
        if treated[0] < 0 or treated[-1] >= self.n or len(set(treated)) != len(treated):
            raise NeumannRAError("treated indices must be distinct members of range(n)")
        object.__setattr__(self, "treated", treated)

    @property
    def n1(self) -> int:
        return len(self.treated)

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def control(self) -> tuple[int, ...]:
        mask = np.ones(self.n, dtype=bool)
        mask[list(self.treated)] = False
        return tuple(int(i) for i in np.nonzero(mask)[0])

    def indicator(self) -> np.ndarray:
        t = np.zeros(self.n)
        t[list(self.treated)] = 1.0
        return t


@dataclass(frozen=True)
class ObservedData:
    """Design plus the single outcome vector revealed by an assignment."""

    design: NormalizedDesign
    assignment: Assignment
    y_obs: np.ndarray

    def __post_init__(self):
        if self.assignment.n != self.design.n:
            raise NeumannRAError("assignment population size differs from design")
        y = np.asarray(self.y_obs, dtype=float)
        if y.shape != (self.design.n,):
            raise NeumannRAError("observed outcomes must have length n")
        object.__setattr__(self, "y_obs", y)


def observe(design: NormalizedDesign, outcomes: PotentialOutcomes,
            assignment: Assignment) -> ObservedData:
    t = assignment.indicator()
    return ObservedData(design, assignment, t * outcomes.y1 + (1.0 - t) * outcomes.y0)


@dataclass(frozen=True)
class PopulationFit:
    """Population OLS of a full outcome vector on the intercept and covariates."""

    mu: float
    beta: np.ndarray
    residuals: np.ndarray


@dataclass(frozen=True)
class ArmFit:
    """In-arm OLS-with-intercept fit and the arm moments used by the audit."""

    arm: int
    mu_hat: float
    beta_hat: np.ndarray
    residuals: np.ndarray  # in-sample, ordered like ``indices``
    xbar: np.ndarray
    sigma: np.ndarray
    indices: tuple[int, ...]


def population_ols(design: NormalizedDesign, y: np.ndarray) -> PopulationFit:
    """Closed-form population fit: mu = mean(y), beta = X'y / n."""
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n,):
        raise NeumannRAError("outcome vector must have length n")
    mu = float(y.mean())
    beta = design.X.T @ y / design.n
    residuals = y - mu - design.X @ beta
    return PopulationFit(mu, beta, residuals)


def dim(observed: ObservedData) -> float:
    """Treated mean minus control mean of the observed outcomes."""
    t = list(observed.assignment.treated)
    c = list(observed.assignment.control)
    return float(observed.y_obs[t].mean() - observed.y_obs[c].mean())


def arm_ols(observed: ObservedData, arm: int) -> ArmFit:
    """OLS-with-intercept on one arm's rows, solved by QR factorization."""
    if arm not in (0, 1):
        raise NeumannRAError("arm must be 0 or 1")
    idx = observed.assignment.treated if arm == 1 else observed.assignment.control
    idx = list(idx)
    n_arm = len(idx)
    p = observed.design.p
    if n_arm < p + 2:
        raise ArmTooSmall(f"arm {arm} has {n_arm} units, needs at least p+2={p + 2}")
    x_arm = observed.design.X[idx]
    y_arm = observed.y_obs[idx]
    xbar = x_arm.mean(axis=0)
    centered = x_arm - xbar
    sigma = centered.T @ centered / n_arm
    if p:
        smallest = float(np.linalg.eigvalsh(sigma)[0])
        if smallest < SIGMA_MIN_EIGENVALUE:
            raise SingularArmCovariance(
                f"arm {arm} covariance smallest eigenvalue {smallest:.3e}"
            )
    augmented = np.column_stack([np.ones(n_arm), x_arm])
    q, r_mat = np.linalg.qr(augmented)
    coeffs = np.linalg.solve(r_mat, q.T @ y_arm)
    mu_hat = float(coeffs[0])
    beta_hat = coeffs[1:]
    residuals = y_arm - augmented @ coeffs
    return ArmFit(arm, mu_hat, beta_hat, residuals, xbar, sigma, tuple(idx))


def ols_ra(observed: ObservedData) -> float:
    """Regression-adjusted estimate: difference of the two arm intercept predictions."""
    return arm_ols(observed, 1).mu_hat - arm_ols(observed, 0).mu_hat


@dataclass(frozen=True)
class CorrectionResult:
    """Per-degree correction terms and the corrected estimates they produce."""

    tau_ols: float
    treated_terms: tuple[float, ...]  # degree d' term for arm 1, d' = 0..D
    control_terms: tuple[float, ...]

    @property
    def max_degree(self) -> int:
        return len(self.treated_terms) - 1

    def estimate(self, d: int) -> float:
        """Corrected estimate with terms up to degree d added."""
        if not (0 <= d <= self.max_degree):
            raise NeumannRAError(f"degree {d} outside computed range 0..{self.max_degree}")
        total = self.tau_ols
        for d_prime in range(d + 1):
            total += self.treated_terms[d_prime] - self.control_terms[d_prime]
        return total


def _arm_correction(fit: ArmFit, weights: NeumannWeightVector, degree: int) -> float:
    n_arm = len(fit.indices)
    if weights.m != n_arm:
        raise WeightArmMismatch(
            f"weights for m={weights.m} applied to arm of size {n_arm}"
        )
    if weights.degree != degree:
        raise WeightArmMismatch(
            f"expected degree {degree} weights, got {weights.degree}"
        )
    return float(weights.xi[list(fit.indices)] @ fit.residuals) / n_arm


def corrections(observed: ObservedData, treated_weights: list[NeumannWeightVector],
                control_weights: list[NeumannWeightVector]) -> CorrectionResult:
    """Sample-analog correction terms from in-sample residuals, degrees 0..D.

    Each arm uses weights computed at its own size; the two weight lists must
    cover the same degrees in increasing order.
    """
    if len(treated_weights) != len(control_weights) or not treated_weights:
        raise NeumannRAError("need matching non-empty weight lists for both arms")
    fit1 = arm_ols(observed, 1)
    fit0 = arm_ols(observed, 0)
    tau_ols = fit1.mu_hat - fit0.mu_hat
    treated_terms = []
    control_terms = []
    for d_prime, (w1, w0) in enumerate(zip(treated_weights, control_weights)):
        treated_terms.append(_arm_correction(fit1, w1, d_prime))
        control_terms.append(_arm_correction(fit0, w0, d_prime))
    return CorrectionResult(tau_ols, tuple(treated_terms), tuple(control_terms))


@dataclass(frozen=True)
class DecompositionAudit:
    """Every piece of the error decomposition for one assignment.

    ``remainders[a]`` is the arm-a remainder; ``series_terms[a][d']`` its
    degree-d' series term; ``tails[a]`` the difference between the remainder
    and the summed terms; ``delta_opnorms[a]`` the spectral norm of
    ``I - Sigma_a``.  The identity ``tau_ols - tau = residual_dim - (R1 - R0)``
    holds exactly up to floating point.
    """

    tau: float
    tau_hat_ols: float
    residual_dim: float
    remainders: tuple[float, float]  # (arm 0, arm 1)
    series_terms: tuple[tuple[float, ...], tuple[float, ...]]
    tails: tuple[float, float]
    delta_opnorms: tuple[float, float]

    @property
    def identity_gap(self) -> float:
        r0, r1 = self.remainders
        return (self.tau_hat_ols - self.tau) - (self.residual_dim - (r1 - r0))


def decomposition_audit(design: NormalizedDesign, outcomes: PotentialOutcomes,
                        assignment: Assignment, max_degree: int) -> DecompositionAudit:
    """Recompute the full decomposition using both potential outcome vectors."""
    observed = observe(design, outcomes, assignment)
    fits = (arm_ols(observed, 0), arm_ols(observed, 1))
    pops = (population_ols(design, outcomes.y0), population_ols(design, outcomes.y1))
    remainders = []
    series_terms = []
    tails = []
    delta_norms = []
    resid_means = []
    for arm in (0, 1):
        fit = fits[arm]
        pop = pops[arm]
        idx = list(fit.indices)
        n_arm = len(idx)
        r_arm = pop.residuals[idx]
        resid_means.append(float(r_arm.mean()))
        centered = design.X[idx] - fit.xbar
        u_vec = centered.T @ r_arm / n_arm
        delta = np.eye(design.p) - fit.sigma
        delta_norms.append(float(np.linalg.norm(delta, 2)) if design.p else 0.0)
        remainder = float(fit.xbar @ np.linalg.solve(fit.sigma, u_vec)) if design.p else 0.0
        terms = []
        vec = u_vec
        for _ in range(max_degree + 1):
            terms.append(float(fit.xbar @ vec))
            vec = delta @ vec
        remainders.append(remainder)
        series_terms.append(tuple(terms))
        tails.append(remainder - sum(terms))
    tau_hat_ols = fits[1].mu_hat - fits[0].mu_hat
    residual_dim = resid_means[1] - resid_means[0]
    return DecompositionAudit(
        tau=outcomes.tau,
        tau_hat_ols=tau_hat_ols,
        residual_dim=residual_dim,
        remainders=(remainders[0], remainders[1]),
        series_terms=(series_terms[0], series_terms[1]),
        tails=(tails[0], tails[1]),
        delta_opnorms=(delta_norms[0], delta_norms[1]),
    )
