"""Covariate designs satisfying the centering and orthonormalization conditions.

A valid design matrix ``X`` (n units, p covariates) has column sums zero and
``X'X = n I``.  Every downstream computation (weights, estimators, envelopes)
assumes these two conditions; :func:`normalize` produces them from raw
covariates by centering followed by symmetric whitening.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, NeumannRAError, RankDeficient

# Validation tolerances for the two design conditions.
COLUMN_SUM_TOL = 1e-10  # |1'X|_inf <= tol * n
GRAM_REL_TOL = 1e-8  # |X'X - nI|_max <= tol * n
RANK_EIG_RATIO = 1e-12  # smallest/largest covariance eigenvalue


@dataclass(frozen=True)
class RawCovariates:
    """Unit-by-covariate matrix before any normalization."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionError(f"covariates must be 2-d, got shape {values.shape}")
        if values.shape[0] < 1:
            raise DimensionError("need at least one unit")
        if not np.all(np.isfinite(values)):
            raise NeumannRAError("covariates contain non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NormalizedDesign:
    """Design matrix with centered columns and ``X'X = n I``."""

    X: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        n, p = X.shape
        if p > n - 1:
            raise DimensionError(f"p={p} exceeds n-1={n - 1}")
        col_sums = X.sum(axis=0) if p else np.zeros(0)
        if p and np.max(np.abs(col_sums)) > COLUMN_SUM_TOL * n:
            raise NeumannRAError("columns are not centered")
        if p:
            dev = np.max(np.abs(X.T @ X - n * np.eye(p)))
            if dev > GRAM_REL_TOL * n:
                raise NeumannRAError(f"X'X deviates from nI by {dev:.3e}")
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def normalize(raw: RawCovariates) -> NormalizedDesign:
    """Center columns and whiten so the output satisfies both design conditions.

    Whitening multiplies the centered matrix on the right by the inverse
    symmetric square root of the sample covariance, which keeps the column
    span and makes the transform idempotent.
    """
    values = raw.values
    n, p = values.shape
    if p > n - 1:
        raise DimensionError(f"p={p} requires at least n={p + 1} units")
    if p == 0:
        return NormalizedDesign(np.zeros((n, 0)))
    centered = values - values.mean(axis=0)
    cov = centered.T @ centered / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[-1] <= 0.0 or eigvals[0] < RANK_EIG_RATIO * eigvals[-1]:
        raise RankDeficient(
            f"centered covariance is rank deficient (smallest eigenvalue {eigvals[0]:.3e})"
        )
    inv_sqrt = eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T
    return NormalizedDesign(centered @ inv_sqrt)


def leverage(design: NormalizedDesign) -> np.ndarray:
    """Per-unit leverage scores; equal to ``|x_i|^2 / n`` under the normalization."""
    return np.einsum("ij,ij->i", design.X, design.X) / design.n


def winsorize(raw: RawCovariates, q_lo: float, q_hi: float) -> RawCovariates:
    """Clip each column to its [q_lo, q_hi] nearest-rank (inclusive) quantiles."""
    if not (0.0 <= q_lo < q_hi <= 1.0):
        raise NeumannRAError(f"invalid quantile bounds ({q_lo}, {q_hi})")
    values = raw.values.copy()
    n = values.shape[0]
    for j in range(values.shape[1]):
        col = np.sort(values[:, j])
        lo = col[max(int(np.ceil(q_lo * n)) - 1, 0)]
        hi = col[max(int(np.ceil(q_hi * n)) - 1, 0)]
        np.clip(values[:, j], lo, hi, out=values[:, j])
    return RawCovariates(values)


def read_covariates_csv(path: str | Path) -> RawCovariates:
    """Read a covariate CSV with header ``x1..xp``, one row per unit.

    Comment lines starting with '#' are skipped.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        expected = [f"x{j + 1}" for j in range(len(header))]
        if [h.strip() for h in header] != expected:
            raise NeumannRAError(f"expected header {expected}, got {header}")
        for row in reader:
            if row:
                rows.append([float(v) for v in row])
    if not rows:
        raise NeumannRAError(f"no data rows in {path}")
    return RawCovariates(np.asarray(rows, dtype=float))


def write_covariates_csv(path: str | Path, values: np.ndarray, comment: str | None = None) -> None:
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(values.shape[1])])
        for row in values:
            writer.writerow([f"{v:.17g}" for v in row])
