"""
Tests for the shared helpers: error mapping, ridge solving, interval
validation and atomic file output.
"""

import json
import logging
import math
import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings
from rest_framework import serializers

from deep_esn.utils.file_io import AtomicFileWriter, OutputDirectory, sha256_digest
from .exceptions import (
    EXIT_CONFIG_ERROR,
    EXIT_RUNTIME_ERROR,
    RECOVERABLE_ERRORS,
    ConfigurationError,
    CorruptModelFileError,
    DimensionMismatchError,
    ErrorCodes,
    NonFiniteStateError,
    SeriesParseError,
    SingularSystemError,
    describe_error,
    exit_code_for,
    handle_command_errors,
)
from .linalg import as_matrix, ensure_finite, ridge_solve
from .serializers import IntervalValidationMixin, SplitSerializer


class ExceptionTestCase(SimpleTestCase):

    def test_default_message_comes_from_the_code(self):
        """Test default message comes from the code."""
        error = SingularSystemError()
        self.assertEqual(error.code, ErrorCodes.SINGULAR_SYSTEM)
        self.assertIn('singular', error.message)

    def test_parse_error_keeps_the_line(self):
        """Test parse error keeps the line."""
        error = SeriesParseError('bad value', line_number=12)
        self.assertEqual(error.line_number, 12)
        self.assertEqual(error.as_dict()['details'], {'line': 12})

    def test_exit_codes(self):
        """Test the exit code assigned to each error category."""
        self.assertEqual(exit_code_for(ConfigurationError()), EXIT_CONFIG_ERROR)
        self.assertEqual(exit_code_for(CorruptModelFileError()), EXIT_RUNTIME_ERROR)
        self.assertEqual(exit_code_for(KeyError('x')), EXIT_RUNTIME_ERROR)

    def test_command_decorator_translates_errors(self):
        """Test command decorator translates errors."""
        @handle_command_errors
        def failing(kind):
            if kind == 'config':
                raise ConfigurationError('bad depth', details={'architecture.depth': 'too small'})
            raise FileNotFoundError('absent.desn')

        with self.assertRaises(CommandError) as ctx:
            failing('config')
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG_ERROR)
        self.assertIn('architecture.depth', str(ctx.exception))

        with self.assertRaises(CommandError) as ctx:
            failing('io')
        self.assertEqual(ctx.exception.returncode, EXIT_RUNTIME_ERROR)

    def test_command_decorator_maps_numerical_errors_to_runtime(self):
        """Test that numerical exceptions from outside the toolkit exit with code 3."""
        @handle_command_errors
        def failing(error):
            raise error

        for error in (ValueError('bad shape'), np.linalg.LinAlgError('not positive definite'),
                      FloatingPointError('overflow')):
            with self.subTest(error=type(error).__name__):
                with self.assertRaises(CommandError) as ctx:
                    failing(error)
                self.assertEqual(ctx.exception.returncode, EXIT_RUNTIME_ERROR)
                self.assertIn(type(error).__name__, str(ctx.exception))

    def test_describe_error(self):
        """Test the one-line summaries used in failed result rows."""
        self.assertEqual(describe_error(SeriesParseError('bad value', line_number=3)),
                         "SERIES_PARSE_ERROR: bad value {'line': 3}")
        self.assertEqual(describe_error(np.linalg.LinAlgError('singular')), 'LinAlgError: singular')
        self.assertTrue(all(issubclass(kind, Exception) for kind in RECOVERABLE_ERRORS))
        self.assertIsInstance(np.linalg.LinAlgError(), RECOVERABLE_ERRORS)


class RidgeSolveTestCase(SimpleTestCase):
    """Test cases for the closed-form ridge solution."""

    def test_matches_the_explicit_inverse(self):
        """Test matches the explicit inverse."""
        rng = np.random.default_rng(0)
        design = rng.normal(size=(6, 50))
        targets = rng.normal(size=(2, 50))
        beta = 1e-3
        expected = targets @ design.T @ np.linalg.inv(design @ design.T + beta * np.eye(6))
        np.testing.assert_allclose(ridge_solve(design, targets, beta), expected, atol=1e-10)

    def test_scalar_hand_value(self):
        """Test scalar hand value."""
        # M = [1 2], T = [2 4]: W = 10 / (5 + 1)
        weights = ridge_solve(np.array([[1.0, 2.0]]), np.array([[2.0, 4.0]]), 1.0)
        self.assertAlmostEqual(weights[0, 0], 10.0 / 6.0)

    def test_rank_deficient_without_regularization(self):
        """Test rank deficient without regularization."""
        design = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
        with self.assertRaises(SingularSystemError):
            ridge_solve(design, np.ones((1, 3)), 0.0)

    def test_step_count_mismatch(self):
        """Test step count mismatch."""
        with self.assertRaises(DimensionMismatchError):
            ridge_solve(np.ones((2, 4)), np.ones((1, 3)), 1e-5)

    def test_non_finite_design(self):
        """Test non finite design."""
        design = np.array([[1.0, np.nan], [0.5, 1.0]])
        with self.assertRaises((NonFiniteStateError, SingularSystemError)):
            ridge_solve(design, np.ones((1, 2)), 1e-5)


class MatrixHelperTestCase(SimpleTestCase):

    def test_vector_becomes_a_column(self):
        """Test vector becomes a column."""
        self.assertEqual(as_matrix([1, 2, 3]).shape, (3, 1))

    def test_column_count_is_checked(self):
        """Test column count is checked."""
        with self.assertRaises(DimensionMismatchError):
            as_matrix(np.ones((4, 2)), 'inputs', columns=3)

    def test_three_dimensional_input_rejected(self):
        """Test three dimensional input rejected."""
        with self.assertRaises(DimensionMismatchError):
            as_matrix(np.ones((2, 2, 2)))

    def test_ensure_finite(self):
        """Test ensure_finite passes finite arrays through and rejects Inf."""
        values = np.array([1.0, 2.0])
        self.assertIs(ensure_finite(values), values)
        with self.assertRaises(NonFiniteStateError):
            ensure_finite(np.array([1.0, np.inf]), 'state')


class UnitIntervalSerializer(IntervalValidationMixin, serializers.Serializer):
    value = serializers.FloatField()

    def validate_value(self, value):
        return self._validate_open_unit(value, 'value')


class SerializerTestCase(SimpleTestCase):

    def test_open_interval_excludes_the_ends(self):
        """Test open interval excludes the ends."""
        self.assertTrue(UnitIntervalSerializer(data={'value': 0.5}).is_valid())
        for bad in (0.0, 1.0):
            serializer = UnitIntervalSerializer(data={'value': bad})
            self.assertFalse(serializer.is_valid())
            self.assertIn('(0, 1)', str(serializer.errors['value'][0]))

    def test_split_lengths(self):
        """Test split lengths."""
        self.assertTrue(SplitSerializer(data={'train': 10, 'validate': 0, 'test': 0}).is_valid())
        serializer = SplitSerializer(data={'train': 0, 'validate': -1, 'test': 5})
        self.assertFalse(serializer.is_valid())
        self.assertEqual(set(serializer.errors), {'train', 'validate'})


class AtomicFileWriterTestCase(SimpleTestCase):
    """Test cases for file output."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def test_write_creates_parents_and_leaves_no_temp_files(self):
        """Test write creates parents and leaves no temp files."""
        path = AtomicFileWriter.write_bytes(self.root / 'a' / 'b.bin', b'payload')
        self.assertEqual(path.read_bytes(), b'payload')
        self.assertEqual(os.listdir(path.parent), ['b.bin'])

    def test_json_writes_non_finite_as_null(self):
        """Test JSON writes non finite as null."""
        path = AtomicFileWriter.write_json(self.root / 'r.json', {
            'rmse': np.float64(0.25), 'nrmse': math.nan, 'shape': np.array([2, 3]),
        })
        self.assertEqual(json.loads(path.read_text()), {'rmse': 0.25, 'nrmse': None, 'shape': [2, 3]})

    def test_csv_has_no_index(self):
        """Test CSV has no index."""
        path = AtomicFileWriter.write_csv(self.root / 't.csv', pd.DataFrame({'x': [1, 2]}))
        self.assertEqual(path.read_text().splitlines(), ['x', '1', '2'])

    def test_provenance_records_the_command(self):
        """Test provenance records the command."""
        path = OutputDirectory.write_provenance(self.root, {'name': 'mgs84'}, 'train')
        record = json.loads(path.read_text())
        self.assertEqual(record['command'], 'train')
        self.assertEqual(record['config'], {'name': 'mgs84'})
        self.assertEqual(set(record), {'command', 'config'})

    def test_provenance_is_byte_identical_across_reruns(self):
        """Test that writing the same config twice gives the same bytes."""
        first = OutputDirectory.write_provenance(self.root / 'a', {'name': 'mgs84'}, 'train').read_bytes()
        second = OutputDirectory.write_provenance(self.root / 'b', {'name': 'mgs84'}, 'train').read_bytes()
        self.assertEqual(first, second)

    def test_output_directory_falls_back_to_settings(self):
        """Test output directory falls back to settings."""
        target = self.root / 'runs'
        with override_settings(DEEP_ESN={'OUTPUT_DIR': str(target)}):
            self.assertEqual(OutputDirectory.resolve(), target)
        self.assertTrue(target.is_dir())
        self.assertEqual(OutputDirectory.resolve(self.root / 'explicit'), self.root / 'explicit')

    def test_writes_are_logged_under_the_project_logger(self):
        """Test that file_io debug records reach the configured deep_esn logger."""
        self.assertIn('deep_esn', settings.LOGGING['loggers'])
        self.assertFalse(logging.getLogger('deep_esn').propagate)
        with self.assertLogs('deep_esn.utils.file_io', level='DEBUG') as logs:
            AtomicFileWriter.write_bytes(self.root / 'x.bin', b'abc')
        self.assertIn('Wrote 3 bytes', logs.output[0])

    def test_digest(self):
        """Test the SHA-256 digest of empty input."""
        self.assertEqual(
            sha256_digest(b''),
            'e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855',
        )
