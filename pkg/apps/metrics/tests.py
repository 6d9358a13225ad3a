"""
Tests for the metrics app.
"""

import math

import numpy as np
from django.test import SimpleTestCase

from apps.shared.exceptions import ConstantTargetError, DimensionMismatchError, ZeroDenominatorError
from .services import MetricReport, aggregate, evaluate, mape, nrmse, rmse


class MetricValuesTestCase(SimpleTestCase):
    """Hand-evaluated metric values."""

    def test_perfect_prediction_scores_zero(self):
        """Test perfect prediction scores zero."""
        y = [1.0, 2.0, 3.0]
        self.assertEqual(rmse(y, y), 0.0)
        self.assertEqual(nrmse(y, y), 0.0)
        self.assertEqual(mape(y, y), 0.0)

    def test_unit_error(self):
        """Test RMSE of a constant unit error."""
        self.assertEqual(rmse([0.0, 0.0], [1.0, 1.0]), 1.0)

    def test_nrmse_hand_value(self):
        """Test NRMSE hand value."""
        self.assertAlmostEqual(nrmse([1.0, 3.0], [2.0, 2.0]), 1.0, places=12)

    def test_mape_hand_value(self):
        """Test MAPE hand value."""
        # |2-1|/2 and |4-5|/4 averaged
        self.assertAlmostEqual(mape([2.0, 4.0], [1.0, 5.0]), 37.5, places=10)

    def test_mape_offset_applies_to_both_series(self):
        """Test MAPE offset applies to both series."""
        self.assertAlmostEqual(mape([0.0, 0.9], [0.1, 0.9], offset=0.1), 50.0, places=10)


class MetricPropertiesTestCase(SimpleTestCase):

    def test_predicting_the_mean_gives_nrmse_one(self):
        """Test predicting the mean gives NRMSE one."""
        rng = np.random.default_rng(0)
        y = rng.normal(size=200)
        self.assertAlmostEqual(nrmse(y, np.full_like(y, y.mean())), 1.0, places=12)

    def test_rmse_is_translation_invariant(self):
        """Test RMSE is translation invariant."""
        rng = np.random.default_rng(1)
        y = rng.normal(size=100)
        y_hat = y + rng.normal(scale=0.1, size=100)
        self.assertAlmostEqual(rmse(y + 7.5, y_hat + 7.5), rmse(y, y_hat), places=10)

    def test_mape_with_offset_is_finite_on_zero_heavy_series(self):
        """Test MAPE with offset is finite on zero heavy series."""
        y = np.array([0.0, 0.0, 0.2, 0.5, 0.0])
        self.assertTrue(math.isfinite(mape(y, y + 0.01, offset=0.1)))


class MetricErrorsTestCase(SimpleTestCase):

    def test_constant_target_rejected_by_nrmse(self):
        """Test constant target rejected by NRMSE."""
        with self.assertRaises(ConstantTargetError):
            nrmse([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])

    def test_zero_denominator_rejected_by_mape(self):
        """Test zero denominator rejected by MAPE."""
        with self.assertRaises(ZeroDenominatorError):
            mape([0.0, 1.0], [0.5, 1.0])

    def test_length_mismatch(self):
        """Test length mismatch."""
        with self.assertRaises(DimensionMismatchError):
            rmse([1.0, 2.0], [1.0])

    def test_empty_input(self):
        """Test empty input."""
        with self.assertRaises(DimensionMismatchError):
            rmse([], [])


class EvaluateTestCase(SimpleTestCase):

    def test_report_fields(self):
        """Test the fields of a metric report."""
        report = evaluate([1.0, 3.0], [2.0, 2.0])
        self.assertEqual(report.n, 2)
        self.assertEqual(report.rmse, 1.0)
        self.assertAlmostEqual(report.nrmse, 1.0)
        self.assertEqual(report.offset_applied, 0.0)

    def test_undefined_metrics_become_nan(self):
        """Test undefined metrics become NaN."""
        with self.assertLogs('apps.metrics.services', level='WARNING'):
            report = evaluate([0.0, 0.0], [1.0, 1.0])
        self.assertEqual(report.rmse, 1.0)
        self.assertTrue(math.isnan(report.nrmse))
        self.assertTrue(math.isnan(report.mape))

    def test_aggregate_uses_population_std(self):
        """Test aggregate uses population standard deviation."""
        reports = [
            MetricReport(rmse=1.0, nrmse=0.1, mape=1.0, n=10),
            MetricReport(rmse=3.0, nrmse=0.3, mape=3.0, n=10),
        ]
        summary = aggregate(reports)
        self.assertEqual(summary['n_runs'], 2)
        self.assertEqual(summary['rmse_mean'], 2.0)
        self.assertEqual(summary['rmse_std'], 1.0)
        self.assertAlmostEqual(summary['nrmse_std'], 0.1)

    def test_aggregate_of_nothing(self):
        """Test aggregate of nothing."""
        summary = aggregate([])
        self.assertEqual(summary['n_runs'], 0)
        self.assertIsNone(summary['rmse_mean'])
