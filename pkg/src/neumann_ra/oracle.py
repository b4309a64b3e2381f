"""Brute-force references for certifying the folding engine at small scale.

Everything here enumerates explicitly: subsets for the weight and expectation
definitions, injective label tuples for the class aggregates, and complete
assignments for randomization moments.  None of it shares code with the
Gram-level contraction path it certifies.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations
from math import comb

import numpy as np

from .combinatorics import CHI_UNIT, AnnotatedWord, SetPartition
from .design import NormalizedDesign
from .errors import BudgetExceeded, NeumannRAError
from .estimators import (
    Assignment,
    PotentialOutcomes,
    corrections,
    dim,
    observe,
    ols_ra,
)
from .folding import GramContext, neumann_weights


@dataclass(frozen=True)
class OracleBudget:
    """Caps on enumeration sizes; exceeding one raises instead of running forever."""

    max_subsets: int = 2_000_000
    max_labels: int = 2_000_000


DEFAULT_BUDGET = OracleBudget()


def _series_value(x_sub: np.ndarray, d: int, target: np.ndarray) -> float:
    """``xbar' (I - Sigma)^d target`` for one explicit subsample."""
    m, p = x_sub.shape
    xbar = x_sub.mean(axis=0)
    centered = x_sub - xbar
    sigma = centered.T @ centered / m
    vec = target
    delta = np.eye(p) - sigma
    for _ in range(d):
        vec = delta @ vec
    return float(xbar @ vec)


def exact_weight(d: int, m: int, design: NormalizedDesign, i: int,
                 budget: OracleBudget = DEFAULT_BUDGET) -> float:
    """Average of the degree-d series value over all size-m subsets containing i."""
    n = design.n
    if comb(n - 1, m - 1) > budget.max_subsets:
        raise BudgetExceeded(f"C({n - 1},{m - 1}) subsets exceed the budget")
    others = [j for j in range(n) if j != i]
    values = []
    for rest in combinations(others, m - 1):
        idx = sorted((i,) + rest)
        x_sub = design.X[idx]
        xbar = x_sub.mean(axis=0)
        values.append(_series_value(x_sub, d, design.X[i] - xbar))
    return float(np.sum(np.asarray(values)) / len(values))


def exact_weight_vector(d: int, m: int, design: NormalizedDesign,
                        budget: OracleBudget = DEFAULT_BUDGET) -> np.ndarray:
    """All n weights from a single pass over the C(n, m) subsets."""
    n = design.n
    if comb(n, m) > budget.max_subsets:
        raise BudgetExceeded(f"C({n},{m}) subsets exceed the budget")
    sums = np.zeros(n)
    for subset in combinations(range(n), m):
        idx = list(subset)
        x_sub = design.X[idx]
        m_units = x_sub.shape[0]
        xbar = x_sub.mean(axis=0)
        centered = x_sub - xbar
        sigma = centered.T @ centered / m_units
        delta = np.eye(design.p) - sigma
        mat = np.linalg.matrix_power(delta, d) if d else np.eye(design.p)
        vals = (mat.T @ xbar) @ centered.T
        sums[idx] += vals
    return sums / comb(n - 1, m - 1)


def exact_expectation(d: int, m: int, design: NormalizedDesign, r: np.ndarray,
                      budget: OracleBudget = DEFAULT_BUDGET) -> float:
    """Average of the degree-d residual term over all size-m subsets."""
    n = design.n
    r = np.asarray(r, dtype=float)
    if r.shape != (n,):
        raise NeumannRAError(f"residual vector must have length {n}")
    if comb(n, m) > budget.max_subsets:
        raise BudgetExceeded(f"C({n},{m}) subsets exceed the budget")
    values = []
    for subset in combinations(range(n), m):
        idx = list(subset)
        x_sub = design.X[idx]
        xbar = x_sub.mean(axis=0)
        u_vec = (x_sub - xbar).T @ r[idx] / m
        values.append(_series_value(x_sub, d, u_vec))
    return float(np.sum(np.asarray(values)) / len(values))


def injective_aggregates(word: AnnotatedWord, pi: SetPartition,
                         design: NormalizedDesign, i: int,
                         budget: OracleBudget = DEFAULT_BUDGET) -> tuple[float, float]:
    """Class-0/class-1 sums of design monomials over injective block labelings.

    Class 0 labelings avoid unit i entirely; class 1 use it for exactly one
    block.  Labelings with more blocks than available labels contribute zero.
    """
    n = design.n
    ell = pi.num_blocks
    count = 1
    for k in range(ell):
        count *= max(n - k, 0)
    if count > budget.max_labels:
        raise BudgetExceeded(f"{count} injective tuples exceed the budget")
    if ell > n:
        return 0.0, 0.0
    gram = design.X @ design.X.T
    block_of = pi.block_of
    edges = word.edges
    anchor_block = block_of[word.anchor_position] if word.chi == CHI_UNIT else None
    phi0 = 0.0
    phi1 = 0.0
    for labels in permutations(range(n), ell):
        value = 1.0
        for s, t in edges:
            value *= gram[labels[block_of[s]], labels[block_of[t]]]
        if anchor_block is not None:
            value *= gram[labels[anchor_block], i]
        if i in labels:
            phi1 += value
        else:
            phi0 += value
    return phi0, phi1


def exact_randomization_moments(design: NormalizedDesign, outcomes: PotentialOutcomes,
                                n1: int, estimator: str, degree: int | None = None,
                                budget: OracleBudget = DEFAULT_BUDGET,
                                ctx: GramContext | None = None) -> tuple[float, float]:
    """Exact mean and variance of an estimator over all equiprobable assignments.

    ``estimator`` is one of ``dim``, ``ols``, or ``neumann`` (which requires
    ``degree`` and evaluates the corrected estimator with terms up to that
    degree).  Variance is the population variance over the assignment law.
    """
    n = design.n
    if comb(n, n1) > budget.max_subsets:
        raise BudgetExceeded(f"C({n},{n1}) assignments exceed the budget")
    if estimator == "neumann":
        if degree is None:
            raise NeumannRAError("the neumann estimator needs a degree")
        if ctx is None:
            ctx = GramContext(design)
        treated_w = [neumann_weights(d, n1, ctx) for d in range(degree + 1)]
        control_w = [neumann_weights(d, n - n1, ctx) for d in range(degree + 1)]
    estimates = []
    for treated in combinations(range(n), n1):
        observed = observe(design, outcomes, Assignment(treated, n))
        if estimator == "dim":
            estimates.append(dim(observed))
        elif estimator == "ols":
            estimates.append(ols_ra(observed))
        elif estimator == "neumann":
            estimates.append(corrections(observed, treated_w, control_w).estimate(degree))
        else:
            raise NeumannRAError(f"unknown estimator {estimator!r}")
    values = np.asarray(estimates)
    return float(values.mean()), float(values.var())
