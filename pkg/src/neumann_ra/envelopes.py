"""Finite-sample concentration envelopes and the series tail bound.

These are diagnostics only: deterministic high-probability bounds on the
operator deviation of the subsample covariance, the residualized mean vector,
and the subsample covariate mean, assembled from Bernstein-type inequalities
for sampling without replacement with finite-population corrections.  The
estimator path never consumes them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design import NormalizedDesign, leverage
from .errors import NeumannRAError


def _bernstein_threshold(sigma: float, value_range: float, m: int, n: int,
                         log_term: float) -> float:
    """Deviation threshold for a size-m SRSWOR mean of bounded scalars.

    ``sigma`` is the population standard deviation, ``value_range`` the spread
    B - A, and ``log_term`` the log(k/delta) entering both the variance proxy
    and the additive term.
    """
    variance_proxy = ((n - m + 1) / n) * sigma**2 + ((m - 1) / n) * sigma * value_range * math.sqrt(2.0 * log_term / m)
    return math.sqrt(2.0 * variance_proxy * log_term / m) + 2.0 * value_range * log_term / (3.0 * m)


def scalar_threshold(values: np.ndarray, m: int, n: int, delta: float) -> float:
    """Two-sided deviation threshold for the subsample mean of the given scalars."""
    if not (0.0 < delta < 1.0):
        raise NeumannRAError("delta must be in (0, 1)")
    if m < 1:
        raise NeumannRAError("sample size must be positive")
    values = np.asarray(values, dtype=float)
    sigma = float(values.std())
    value_range = float(values.max() - values.min())
    return _bernstein_threshold(sigma, value_range, m, n, math.log(4.0 / delta))


def matrix_threshold(design: NormalizedDesign, m: int, delta: float) -> tuple[float, float, float]:
    """Operator-norm deviation threshold for the subsample second-moment matrix.

    Uses the centered rank-one summands ``x_i x_i' - I``; returns
    ``(threshold, v, c)`` where v is the spectral norm of the average squared
    summand and c the largest summand norm.
    """
    if not (0.0 < delta < 1.0):
        raise NeumannRAError("delta must be in (0, 1)")
    n, p = design.n, design.p
    if p == 0:
        return 0.0, 0.0, 0.0
    g = np.einsum("ij,ij->i", design.X, design.X)
    # (1/n) sum (x x' - I)^2 = (1/n) X' diag(g) X - I under the normalization.
    avg_sq = design.X.T @ (design.X * g[:, None]) / n - np.eye(p)
    v = float(np.max(np.abs(np.linalg.eigvalsh(avg_sq))))
    # Eigenvalues of x x' - I are |x|^2 - 1 (once) and -1 (p - 1 times).
    if p == 1:
        c = float(np.max(np.abs(g - 1.0)))
    else:
        c = float(max(np.max(np.abs(g - 1.0)), 1.0))
    log_term = math.log(4.0 * p / delta)
    threshold = max(2.0 * math.sqrt(v * log_term / m), 2.0 * c * log_term / m)
    return threshold, v, c


@dataclass(frozen=True)
class EnvelopeReport:
    """Envelope values, their building blocks, and optional empirical coverage."""

    delta: float
    m: int
    degree: int
    alpha_env: float
    beta_env: float
    gamma_env: float
    epsilon_tail: float
    t_q: float
    t_r: float
    t_r2: float
    t_mat: float
    v_mat: float
    c_mat: float
    max_leverage: float
    leverage_ratio: float
    series_certified: bool
    n_draws: int = 0
    delta_cover: float = float("nan")
    u_cover: float = float("nan")
    xbar_cover: float = float("nan")
    delta_emp_max: float = float("nan")

    def as_rows(self) -> list[tuple[str, float]]:
        rows = [
            ("delta", self.delta),
            ("m", float(self.m)),
            ("degree", float(self.degree)),
            ("alpha_env", self.alpha_env),
            ("beta_env", self.beta_env),
            ("gamma_env", self.gamma_env),
            ("epsilon_tail", self.epsilon_tail),
            ("t_q", self.t_q),
            ("t_r", self.t_r),
            ("t_r2", self.t_r2),
            ("t_mat", self.t_mat),
            ("v_mat", self.v_mat),
            ("c_mat", self.c_mat),
            ("max_leverage", self.max_leverage),
            ("leverage_ratio", self.leverage_ratio),
            ("series_certified", float(self.series_certified)),
            ("n_draws", float(self.n_draws)),
        ]
        if self.n_draws:
            rows += [
                ("delta_cover", self.delta_cover),
                ("u_cover", self.u_cover),
                ("xbar_cover", self.xbar_cover),
                ("delta_emp_max", self.delta_emp_max),
            ]
        return rows


def envelope_report(design: NormalizedDesign, r1: np.ndarray, r0: np.ndarray,
                    m: int, delta: float, degree: int, n_draws: int = 0,
                    seed: int = 0) -> EnvelopeReport:
    """Assemble the three envelopes and the degree-d tail bound for one design.

    The residualized-mean envelope is evaluated for both residual vectors and
    the larger value is reported, so one report bounds both arms at the given
    subsample size.  With ``n_draws > 0``, that many SRSWOR draws are taken to
    report empirical coverage of each envelope.
    """
    n, p = design.n, design.p
    r1 = np.asarray(r1, dtype=float)
    r0 = np.asarray(r0, dtype=float)
    for r in (r1, r0):
        if r.shape != (n,):
            raise NeumannRAError("residual vectors must have length n")
        if abs(float(r.sum())) > 1e-8 * max(1.0, float(np.linalg.norm(r)) * math.sqrt(n)):
            raise NeumannRAError("residual vectors must sum to zero")
    if not (0.0 < delta < 1.0):
        raise NeumannRAError("delta must be in (0, 1)")
    g = np.einsum("ij,ij->i", design.X, design.X)
    b_x2 = float(g.max()) if p else 0.0

    # Subsample mean of |x|^2: one-sided bound, log(2/delta).
    t_q = _bernstein_threshold(float(g.std()), b_x2, m, n, math.log(2.0 / delta)) if p else 0.0
    gamma_env = math.sqrt((p + t_q) / m)

    t_mat, v_mat, c_mat = matrix_threshold(design, m, delta)
    alpha_env = t_mat + gamma_env**2

    # Residual envelope: worse arm, log(6/delta) in each scalar piece.
    log6 = math.log(6.0 / delta)
    beta_env = 0.0
    t_r = t_r2 = 0.0
    for r in (r1, r0):
        b_r = float(np.max(np.abs(r)))
        r2 = r**2
        t_r2_arm = _bernstein_threshold(float(r2.std()), b_r**2, m, n, log6)
        t_r_arm = _bernstein_threshold(float(r.std()), 2.0 * b_r, m, n, log6)
        beta_arm = math.sqrt((p + t_q) / m) * math.sqrt(float(r2.mean()) + t_r2_arm) + gamma_env * t_r_arm
        if beta_arm >= beta_env:
            beta_env, t_r, t_r2 = beta_arm, t_r_arm, t_r2_arm

    if alpha_env < 1.0:
        epsilon_tail = 2.0 * alpha_env ** (degree + 1) * beta_env * gamma_env / (1.0 - alpha_env)
        certified = True
    else:
        epsilon_tail = float("inf")
        certified = False

    h = leverage(design)
    max_lev = float(h.max()) if p else 0.0
    lev_ratio = max_lev / (p / n) if p else float("nan")

    report = EnvelopeReport(
        delta=delta, m=m, degree=degree,
        alpha_env=alpha_env, beta_env=beta_env, gamma_env=gamma_env,
        epsilon_tail=epsilon_tail, t_q=t_q, t_r=t_r, t_r2=t_r2, t_mat=t_mat,
        v_mat=v_mat, c_mat=c_mat, max_leverage=max_lev, leverage_ratio=lev_ratio,
        series_certified=certified,
    )
    if n_draws <= 0:
        return report

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(7,)))
    worse_r = r1 if float(np.abs(r1).max()) >= float(np.abs(r0).max()) else r0
    delta_hits = u_hits = xbar_hits = 0
    delta_max = 0.0
    for _ in range(n_draws):
        idx = np.sort(rng.permutation(n)[:m])
        x_sub = design.X[idx]
        xbar = x_sub.mean(axis=0)
        centered = x_sub - xbar
        sigma = centered.T @ centered / m
        d_norm = float(np.linalg.norm(np.eye(p) - sigma, 2)) if p else 0.0
        u_norm = float(np.linalg.norm(centered.T @ worse_r[idx] / m))
        x_norm = float(np.linalg.norm(xbar))
        delta_max = max(delta_max, d_norm)
        delta_hits += d_norm <= alpha_env
        u_hits += u_norm <= beta_env
        xbar_hits += x_norm <= gamma_env
    return EnvelopeReport(
        delta=delta, m=m, degree=degree,
        alpha_env=alpha_env, beta_env=beta_env, gamma_env=gamma_env,
        epsilon_tail=epsilon_tail, t_q=t_q, t_r=t_r, t_r2=t_r2, t_mat=t_mat,
        v_mat=v_mat, c_mat=c_mat, max_leverage=max_lev, leverage_ratio=lev_ratio,
        series_certified=certified, n_draws=n_draws,
        delta_cover=delta_hits / n_draws, u_cover=u_hits / n_draws,
        xbar_cover=xbar_hits / n_draws, delta_emp_max=delta_max,
    )
