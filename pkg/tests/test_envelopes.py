"""Concentration thresholds and envelope assembly."""

import math

import numpy as np
import pytest

from neumann_ra.design import NormalizedDesign
from neumann_ra.envelopes import envelope_report, matrix_threshold, scalar_threshold
from neumann_ra.errors import NeumannRAError
from neumann_ra.simulation import worst_case_residual

from conftest import random_design


class TestScalarThreshold:
    def test_constant_values(self):
        assert scalar_threshold(np.full(10, 3.0), 4, 10, 0.1) == 0.0

    def test_monotone_in_confidence(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal(20)
        deltas = [0.5, 0.2, 0.1, 0.01]
        thresholds = [scalar_threshold(values, 8, 20, d) for d in deltas]
        assert thresholds == sorted(thresholds)

    def test_hand_computed_case(self):
        values = np.asarray([0.0, 0.0, 1.0, 1.0])
        m, n, delta = 2, 4, 0.5
        got = scalar_threshold(values, m, n, delta)
        # Independent transcription: sigma = 1/2, range = 1, L = log(8).
        log_term = math.log(4 / delta)
        proxy = ((n - m + 1) / n) * 0.25 + ((m - 1) / n) * 0.5 * 1.0 * math.sqrt(2 * log_term / m)
        expected = math.sqrt(2 * proxy * log_term / m) + 2 * 1.0 * log_term / (3 * m)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_rejects_bad_delta(self):
        with pytest.raises(NeumannRAError):
            scalar_threshold(np.ones(3), 2, 3, 1.5)


class TestMatrixThreshold:
    def test_unit_norm_single_column(self):
        design = NormalizedDesign(np.array([[1.0], [-1.0], [1.0], [-1.0]]))
        threshold, v, c = matrix_threshold(design, 2, 0.1)
        assert (threshold, v, c) == (0.0, 0.0, 0.0)

    def test_v_bounded_by_c_squared(self):
        for seed in range(4):
            design = random_design(20, 3, seed)
            _, v, c = matrix_threshold(design, 8, 0.1)
            assert v <= c**2 + 1e-12

    def test_v_matches_dense_eigensolve(self):
        design = random_design(15, 3, 9)
        _, v, c = matrix_threshold(design, 6, 0.1)
        summands = [
            np.outer(x, x) - np.eye(3) for x in design.X
        ]
        avg_sq = sum(mat @ mat for mat in summands) / 15
        v_ref = float(np.max(np.abs(np.linalg.eigvalsh(avg_sq))))
        c_ref = max(float(np.max(np.abs(np.linalg.eigvalsh(mat)))) for mat in summands)
        assert v == pytest.approx(v_ref, rel=1e-10)
        assert c == pytest.approx(c_ref, rel=1e-10)


class TestEnvelopeReport:
    def test_zero_residuals_zero_beta(self):
        design = random_design(30, 2, 10)
        report = envelope_report(design, np.zeros(30), np.zeros(30), 10, 0.1, 1)
        assert report.beta_env == 0.0
        assert report.t_r == 0.0 and report.t_r2 == 0.0
        assert report.gamma_env > 0.0

    def test_tail_monotone_in_degree_when_certified(self):
        # Need alpha_env < 1: single covariate, large subsample, loose delta.
        design = random_design(400, 1, 11)
        r = worst_case_residual(design)
        tails = []
        for degree in range(4):
            report = envelope_report(design, r, r, 300, 0.5, degree)
            assert report.series_certified, f"alpha_env={report.alpha_env}"
            tails.append(report.epsilon_tail)
        assert tails == sorted(tails, reverse=True)

    def test_uncertified_reports_infinite_tail(self):
        design = random_design(40, 5, 12)
        r = worst_case_residual(design)
        report = envelope_report(design, r, r, 8, 0.05, 1)
        assert not report.series_certified
        assert math.isinf(report.epsilon_tail)

    def test_additive_term_dominates_at_full_sample(self):
        # At m = n the finite-population factor collapses the variance proxy,
        # so the threshold is driven by the additive term.
        rng = np.random.default_rng(13)
        values = rng.uniform(0, 1, size=50)
        n = 50
        sigma = float(values.std())
        value_range = float(values.max() - values.min())
        log_term = math.log(4 / 0.1)
        proxy_full = (1 / n) * sigma**2 + ((n - 1) / n) * sigma * value_range * math.sqrt(2 * log_term / n)
        sqrt_part = math.sqrt(2 * proxy_full * log_term / n)
        additive = 2 * value_range * log_term / (3 * n)
        total = scalar_threshold(values, n, n, 0.1)
        assert total == pytest.approx(sqrt_part + additive, rel=1e-12)
        assert scalar_threshold(values, n, n, 0.1) < scalar_threshold(values, n // 4, n, 0.1)

    def test_canonical_rate_band(self):
        # Gaussian designs: the operator envelope stays within a constant
        # multiple of sqrt(p log(p/delta) / m) across sizes.
        for seed, n in ((0, 100), (1, 200), (2, 400)):
            p = int(np.ceil(n**0.4))
            m = int(0.3 * n)
            design = random_design(n, p, 1000 + seed)
            r = worst_case_residual(design)
            report = envelope_report(design, r, r, m, 0.1, 0)
            ratio = report.alpha_env / math.sqrt(p * math.log(p / 0.1) / m)
            assert 0.1 <= ratio <= 10.0

    def test_coverage_counts_reported(self):
        design = random_design(60, 3, 14)
        r = worst_case_residual(design)
        report = envelope_report(design, 3 * r, r, 20, 0.1, 1, n_draws=50, seed=3)
        assert report.n_draws == 50
        assert 0.9 <= report.delta_cover <= 1.0
        assert report.delta_emp_max > 0.0

    def test_rejects_uncentered_residuals(self):
        design = random_design(20, 2, 15)
        with pytest.raises(NeumannRAError):
            envelope_report(design, np.ones(20), np.zeros(20), 5, 0.1, 1)
