"""
Tests for the diagnostics app.
"""

import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from apps.reservoir.services import ReservoirLayer, ReservoirParams, init_reservoir, scale_to_singular_value
from apps.stack.services import DeepEsnConfig, DeepEsnModel
from .services import (
    check_esp,
    condition_analysis,
    condition_number,
    perturbation_trace,
    state_convergence,
    write_condition_csv,
    write_esp_csv,
    write_trace_csv,
)


def series(length):
    t = np.arange(length)[:, None]
    return np.sin(0.2 * t) + 0.5 * np.sin(0.031 * t)


def trained_model(depth=3, leak_rate=0.5, **overrides):
    options = dict(
        input_dim=1, depth=depth, reservoir_size=30, encoder_size=8, washout=10, seed=2,
        hyperparameters=[{'input_scaling': 0.5, 'spectral_radius': 0.9, 'leak_rate': leak_rate}],
    )
    options.update(overrides)
    data = series(301)
    return DeepEsnModel.initialize(DeepEsnConfig.build(**options)).fit(data[:-1], data[1:])


def contracting(model, sigma=0.5):
    model.reservoirs = [scale_to_singular_value(layer, sigma) for layer in model.reservoirs]
    return model


class ConditionNumberTestCase(SimpleTestCase):

    def test_identity(self):
        """Test that the identity matrix has condition number one."""
        self.assertAlmostEqual(condition_number(np.eye(4)), 1.0, places=12)

    def test_diagonal(self):
        """Test a diagonal matrix against its singular-value ratio."""
        self.assertAlmostEqual(condition_number(np.diag([2.0, 1.0])), 2.0, places=12)

    def test_scale_invariance(self):
        """Test that scaling a matrix leaves its condition number unchanged."""
        matrix = np.random.default_rng(0).normal(size=(40, 6))
        self.assertAlmostEqual(condition_number(7.0 * matrix) / condition_number(matrix), 1.0, delta=1e-9)

    def test_rank_deficient_is_infinite(self):
        """Test rank deficient is infinite."""
        matrix = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        self.assertTrue(math.isinf(condition_number(matrix)))

    def test_zero_matrix_is_infinite(self):
        """Test zero matrix is infinite."""
        self.assertTrue(math.isinf(condition_number(np.zeros((3, 3)))))


class ConditionAnalysisTestCase(SimpleTestCase):

    def test_labels_alternate_reservoirs_and_encoders(self):
        """Test labels alternate reservoirs and encoders."""
        report = condition_analysis(trained_model(depth=3), series(200))
        self.assertEqual([e.label for e in report.entries], ['R1', 'E1', 'R2', 'E2', 'R3'])
        for entry in report.entries:
            self.assertGreaterEqual(entry.cond, 1.0)

    def test_csv_output(self):
        """Test CSV output."""
        report = condition_analysis(trained_model(depth=2), series(200))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_condition_csv(report, Path(tmp) / 'condition.csv')
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ['layer', 'cond', 'log10_cond'])
        self.assertEqual(list(frame['layer']), ['R1', 'E1', 'R2'])


class EchoStatePropertyTestCase(SimpleTestCase):

    def make_layer(self, w_res):
        params = ReservoirParams(size=w_res.shape[0], input_dim=1, input_scaling=0.5,
                                 spectral_radius=0.5, leak_rate=1.0)
        return ReservoirLayer(params, np.zeros((w_res.shape[0], 1)), w_res)

    def test_half_identity_satisfies(self):
        """Test half identity satisfies."""
        (row,) = check_esp([self.make_layer(0.5 * np.eye(4))])
        self.assertAlmostEqual(row.max_singular_value, 0.5)
        self.assertTrue(row.satisfies)

    def test_large_singular_value_fails(self):
        """Test large singular value fails."""
        layer = scale_to_singular_value(self.make_layer(0.5 * np.eye(4)), 1.5)
        (row,) = check_esp([layer])
        self.assertFalse(row.satisfies)
        self.assertFalse(row.necessary)

    def test_spectral_radius_and_singular_value_both_reported(self):
        """Test spectral radius and singular value both reported."""
        params = ReservoirParams(size=300, input_dim=1, input_scaling=0.5, spectral_radius=0.9,
                                 leak_rate=0.5, seed=17)
        (row,) = check_esp([init_reservoir(params)])
        self.assertAlmostEqual(row.spectral_radius, 0.9, places=6)
        self.assertGreaterEqual(row.max_singular_value, row.spectral_radius)
        self.assertTrue(row.necessary)

    def test_model_input_and_csv(self):
        """Test model input and CSV."""
        rows = check_esp(trained_model(depth=2))
        self.assertEqual([row.label for row in rows], ['R1', 'R2'])
        with tempfile.TemporaryDirectory() as tmp:
            frame = pd.read_csv(write_esp_csv(rows, Path(tmp) / 'esp.csv'))
        self.assertEqual(len(frame), 2)


class PerturbationTraceTestCase(SimpleTestCase):

    def test_zero_magnitude_gives_zero_traces(self):
        """Test zero magnitude gives zero traces."""
        trace = perturbation_trace(trained_model(), series(300), magnitude=0.0)
        for delta in trace.deltas.values():
            np.testing.assert_array_equal(delta, np.zeros(300))

    def test_no_layer_responds_before_the_perturbation(self):
        """Test no layer responds before the perturbation."""
        trace = perturbation_trace(trained_model(), series(300), perturb_step=150, magnitude=0.1)
        self.assertEqual(trace.labels, ['R1', 'R2', 'R3', 'ESN'])
        for delta in trace.deltas.values():
            np.testing.assert_array_equal(delta[:150], np.zeros(150))
            self.assertGreater(delta[150:].max(), 0.0)

    def test_contracting_layers_forget_the_perturbation(self):
        """Test contracting layers forget the perturbation."""
        model = contracting(trained_model(leak_rate=1.0), sigma=0.5)
        trace = perturbation_trace(model, series(400), perturb_step=200, magnitude=0.1, horizon=400)
        for label in ('R1', 'R2', 'R3'):
            delta = trace.deltas[label]
            self.assertLess(delta[-1], 1e-6 * delta.max())

    def test_windowed_csv_starts_before_the_perturbation(self):
        """Test windowed CSV starts before the perturbation."""
        trace = perturbation_trace(trained_model(depth=2), series(300), perturb_step=200, horizon=300,
                                   include_reference=False)
        with tempfile.TemporaryDirectory() as tmp:
            frame = pd.read_csv(write_trace_csv(trace, Path(tmp) / 'trace.csv'))
        self.assertEqual(frame['t'].min(), 180)
        self.assertEqual(sorted(frame['layer'].unique()), ['R1', 'R2'])
        self.assertEqual(len(trace.to_frame(full=True)), 600)


class StateConvergenceTestCase(SimpleTestCase):

    def test_distinct_initial_states_converge(self):
        """Test distinct initial states converge."""
        model = contracting(trained_model(), sigma=0.9)
        traces = state_convergence(model, series(1000), seed=3)
        for label, trace in traces.items():
            self.assertGreater(trace[0], 0.0)
            self.assertLess(trace[-1], 1e-6, msg=label)
