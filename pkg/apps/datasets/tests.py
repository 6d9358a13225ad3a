"""
Tests for the datasets app.
"""

import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.shared.exceptions import ConfigurationError, SeriesParseError, SplitOverflowError
from .services import (
    DatasetService,
    Split,
    export_csv,
    gen_mackey_glass,
    gen_narma10,
    load_csv,
    make_system_task,
    make_task,
    smooth,
)


class MackeyGlassTestCase(SimpleTestCase):
    """Test cases for the RK4 delay-equation generator."""

    def test_pure_decay_matches_closed_form(self):
        """Test pure decay matches closed form."""
        series = gen_mackey_glass(11, a=0.0, b=-0.1, burn_in=0, history=1.2, jitter=0.0)
        expected = 1.2 * np.exp(-0.1 * np.arange(11))
        np.testing.assert_allclose(series, expected, atol=1e-6, rtol=0)

    def test_fixed_seed_is_bit_identical(self):
        """Test fixed seed is bit identical."""
        first = gen_mackey_glass(300, seed=5, burn_in=100)
        second = gen_mackey_glass(300, seed=5, burn_in=100)
        np.testing.assert_array_equal(first, second)

    def test_seed_changes_history_jitter(self):
        """Test seed changes history jitter."""
        first = gen_mackey_glass(50, seed=1, burn_in=0)
        second = gen_mackey_glass(50, seed=2, burn_in=0)
        self.assertFalse(np.array_equal(first, second))

    def test_chaotic_regime_is_aperiodic(self):
        """Test chaotic regime is aperiodic."""
        series = gen_mackey_glass(2000, seed=0)
        for period in range(1, 51):
            deviation = np.max(np.abs(series[period:] - series[:-period]))
            self.assertGreater(deviation, 1e-3, msg=f"period {period}")

    def test_series_stays_in_physical_range(self):
        """Test series stays in physical range."""
        series = gen_mackey_glass(500, seed=0)
        self.assertTrue(np.all(series > 0.0))
        self.assertTrue(np.all(series < 2.0))

    def test_invalid_parameters(self):
        """Test invalid parameters."""
        with self.assertRaises(ConfigurationError):
            gen_mackey_glass(10, tau=0.0)
        with self.assertRaises(ConfigurationError):
            gen_mackey_glass(0)


class Narma10TestCase(SimpleTestCase):
    """Test cases for the tenth-order NARMA generator."""

    def test_first_ten_outputs_are_zero(self):
        """Test first ten outputs are zero."""
        _, y = gen_narma10(100, seed=3)
        np.testing.assert_array_equal(y[:10], np.zeros(10))

    def test_first_nonzero_output(self):
        """Test first nonzero output."""
        u, y = gen_narma10(100, seed=3)
        self.assertAlmostEqual(y[10], 1.5 * u[0] * u[9] + 0.1, places=15)

    def test_inputs_drawn_from_half_unit_interval(self):
        """Test inputs drawn from half unit interval."""
        u, _ = gen_narma10(5000, seed=4)
        self.assertTrue(np.all(u >= 0.0))
        self.assertTrue(np.all(u < 0.5))

    def test_zero_input_converges_to_fixed_point(self):
        """Test zero input converges to fixed point."""
        # Root of 0.5y² − 0.7y + 0.1 = 0 below 1
        fixed_point = (0.7 - np.sqrt(0.49 - 0.2)) / 1.0
        _, y = gen_narma10(400, inputs=np.zeros(400))
        self.assertAlmostEqual(y[-1], fixed_point, places=8)

    def test_fixed_seed_is_reproducible(self):
        """Test fixed seed is reproducible."""
        first = gen_narma10(200, seed=9)
        second = gen_narma10(200, seed=9)
        np.testing.assert_array_equal(first[0], second[0])
        np.testing.assert_array_equal(first[1], second[1])

    def test_too_short(self):
        """Test that a series of ten or fewer steps is rejected."""
        with self.assertRaises(ConfigurationError):
            gen_narma10(10)


class SmoothingTestCase(SimpleTestCase):

    def test_window_one_is_identity(self):
        """Test window one is identity."""
        series = np.array([3.0, -1.0, 4.0, 1.5])
        np.testing.assert_array_equal(smooth(series, 1), series)

    def test_constant_series_unchanged(self):
        """Test constant series unchanged."""
        series = np.full(20, 2.5)
        np.testing.assert_allclose(smooth(series, 5), series)

    def test_center_value(self):
        """Test center value."""
        smoothed = smooth(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), 5)
        self.assertAlmostEqual(smoothed[2], 3.0)

    def test_edges_use_shrinking_windows(self):
        """Test edges use shrinking windows."""
        smoothed = smooth(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), 5)
        self.assertAlmostEqual(smoothed[0], 2.0)
        self.assertAlmostEqual(smoothed[1], 2.5)
        self.assertAlmostEqual(smoothed[4], 4.0)

    def test_even_window_rejected(self):
        """Test even window rejected."""
        with self.assertRaises(ConfigurationError):
            smooth(np.arange(5.0), 4)


class CsvIngestionTestCase(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, name, text):
        path = Path(self.tmp.name) / name
        path.write_text(text)
        return path

    def test_headerless_single_column(self):
        """Test headerless single column."""
        path = self.write('plain.csv', '1.0\n2.5\n3.25\n')
        np.testing.assert_array_equal(load_csv(path), [1.0, 2.5, 3.25])

    def test_header_detected_and_named_column(self):
        """Test header detected and named column."""
        path = self.write('temps.csv', 'Date,Temp\n1981-01-01,20.7\n1981-01-02,17.9\n')
        np.testing.assert_array_equal(load_csv(path, column='Temp'), [20.7, 17.9])

    def test_semicolon_delimited_column(self):
        """Test semicolon delimited column."""
        path = self.write('sunspots.csv', '1749;01;1749.042; 96.7\n1749;02;1749.123; 104.3\n')
        np.testing.assert_array_equal(load_csv(path, column=3, delimiter=';'), [96.7, 104.3])

    def test_parse_error_reports_line_number(self):
        """Test parse error reports line number."""
        path = self.write('bad.csv', 'value\n1.0\n2.0\noops\n4.0\n')
        with self.assertRaises(SeriesParseError) as ctx:
            load_csv(path)
        self.assertEqual(ctx.exception.line_number, 4)

    def test_undecodable_bytes_report_line_number(self):
        """Test that bytes outside UTF-8 raise a parse error on the offending line."""
        path = Path(self.tmp.name) / 'latin.csv'
        path.write_bytes(b'1.0\n2.0\n\xff\xfe3.0\n4.0\n')
        with self.assertRaises(SeriesParseError) as ctx:
            load_csv(path)
        self.assertEqual(ctx.exception.line_number, 3)

    def test_named_column_without_header(self):
        """Test named column without header."""
        path = self.write('plain.csv', '1.0\n2.0\n')
        with self.assertRaises(ConfigurationError):
            load_csv(path, column='Temp')


class TaskTestCase(SimpleTestCase):

    def test_targets_are_shifted_inputs(self):
        """Test targets are shifted inputs."""
        series = np.arange(200.0)
        task = make_task(series, horizon=84, split=Split(60, 30, 20))
        self.assertEqual(task.length, 110)
        np.testing.assert_array_equal(task.targets[:, 0], task.inputs[:, 0] + 84)

    def test_split_overflow(self):
        """Test split overflow."""
        with self.assertRaises(SplitOverflowError):
            make_task(np.arange(100.0), horizon=1, split=Split(60, 20, 20))

    def test_drop_last_removes_provisional_points(self):
        """Test drop last removes provisional points."""
        series = np.arange(50.0)
        task = make_task(series, horizon=1, split=Split(30, 5, 3), drop_last=11, mape_offset=0.1)
        self.assertEqual(task.targets[-1, 0], 38.0)
        self.assertEqual(task.mape_offset, 0.1)
        with self.assertRaises(SplitOverflowError):
            make_task(series, horizon=1, split=Split(30, 5, 4), drop_last=11)

    def test_split_segments(self):
        """Test split segments."""
        task = make_task(np.arange(20.0), horizon=1, split=Split(10, 5, 4))
        inputs, targets = task.segment('validate')
        np.testing.assert_array_equal(inputs[:, 0], np.arange(10.0, 15.0))
        np.testing.assert_array_equal(targets[:, 0], np.arange(11.0, 16.0))
        with self.assertRaises(ConfigurationError):
            task.segment('holdout')

    def test_system_task_has_no_shift(self):
        """Test system task has no shift."""
        u, y = gen_narma10(60, seed=0)
        task = make_system_task(u, y, Split(40, 10, 10))
        np.testing.assert_array_equal(task.inputs[:, 0], u)
        np.testing.assert_array_equal(task.targets[:, 0], y)
        self.assertEqual(task.horizon, 0)

    def test_system_task_shifts_targets_by_the_horizon(self):
        """Test that a system task pairs u(t) with y(t+h)."""
        u, y = gen_narma10(61, seed=0)
        task = make_system_task(u, y, Split(40, 10, 10), horizon=1)
        np.testing.assert_array_equal(task.inputs[:, 0], u[:60])
        np.testing.assert_array_equal(task.targets[:, 0], y[1:61])
        self.assertEqual(task.horizon, 1)
        with self.assertRaises(SplitOverflowError):
            make_system_task(u, y, Split(41, 10, 10), horizon=1)

    def test_build_task_in_system_mode(self):
        """Test that a narma10 section in system mode drives the stack with u."""
        spec = {
            'source': 'narma10',
            'mode': 'system',
            'split': {'train': 100, 'validate': 20, 'test': 30},
            'horizon': 1,
        }
        task = DatasetService.build_task(spec, seed=2)
        u, y = gen_narma10(151, seed=2)
        np.testing.assert_array_equal(task.inputs[:, 0], u[:150])
        np.testing.assert_array_equal(task.targets[:, 0], y[1:151])

    def test_build_task_from_generator_section(self):
        """Test build task from generator section."""
        spec = {
            'source': 'narma10',
            'split': {'train': 100, 'validate': 20, 'test': 30},
            'horizon': 1,
        }
        task = DatasetService.build_task(spec, seed=2)
        _, y = gen_narma10(151, seed=2)
        self.assertEqual(task.length, 150)
        np.testing.assert_array_equal(task.inputs[:, 0], y[:150])


class ExportTestCase(SimpleTestCase):

    def test_csv_and_sidecar_written(self):
        """Test CSV and sidecar written."""
        with tempfile.TemporaryDirectory() as tmp:
            csv_path, meta_path = export_csv(
                Path(tmp) / 'narma.csv',
                {'u': np.array([0.1, 0.2]), 'y': np.array([0.0, 0.0])},
                {'source': 'narma10', 'seed': 4},
            )
            self.assertEqual(meta_path.name, 'narma.meta.json')
            self.assertEqual(json.loads(meta_path.read_text())['seed'], 4)
            self.assertEqual(csv_path.read_text().splitlines()[0], 'u,y')
            np.testing.assert_array_equal(load_csv(csv_path, column='y'), [0.0, 0.0])
