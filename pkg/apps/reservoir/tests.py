"""
Tests for the reservoir app.
"""

import numpy as np
from django.test import SimpleTestCase

from apps.shared.exceptions import (
    ConfigurationError,
    DimensionMismatchError,
    NonFiniteStateError,
    WashoutError,
)
from .services import (
    ReservoirLayer,
    ReservoirParams,
    init_reservoir,
    largest_singular_value,
    scale_to_singular_value,
    spectral_radius,
)


def make_params(**overrides):
    values = dict(size=50, input_dim=2, input_scaling=0.5, spectral_radius=0.9,
                  leak_rate=0.3, sparsity=0.1, seed=7)
    values.update(overrides)
    return ReservoirParams(**values)


class ReservoirInitializationTestCase(SimpleTestCase):
    """Test cases for init_reservoir."""

    def test_spectral_radius_matches_requested_value(self):
        """Test spectral radius matches requested value."""
        layer = init_reservoir(make_params(size=120, spectral_radius=0.9))
        self.assertAlmostEqual(spectral_radius(layer.w_res), 0.9, delta=0.9 * 1e-8)

    def test_sparsity_fraction_is_respected(self):
        """Test sparsity fraction is respected."""
        params = make_params(size=100, sparsity=0.1)
        layer = init_reservoir(params)
        nonzero = np.count_nonzero(layer.w_res)
        self.assertLessEqual(abs(nonzero - 0.1 * 100 * 100), 1)

    def test_input_weights_bounded_by_input_scaling(self):
        """Test input weights bounded by input scaling."""
        layer = init_reservoir(make_params(input_scaling=0.3))
        self.assertTrue(np.all(np.abs(layer.w_in) <= 0.3))

    def test_zero_input_scaling_gives_zero_input_matrix(self):
        """Test zero input scaling gives zero input matrix."""
        layer = init_reservoir(make_params(input_scaling=0.0))
        self.assertFalse(np.any(layer.w_in))

    def test_same_seed_gives_identical_layers(self):
        """Test same seed gives identical layers."""
        first = init_reservoir(make_params(seed=11))
        second = init_reservoir(make_params(seed=11))
        np.testing.assert_array_equal(first.w_in, second.w_in)
        np.testing.assert_array_equal(first.w_res, second.w_res)

    def test_different_seeds_differ(self):
        """Test different seeds differ."""
        first = init_reservoir(make_params(seed=1))
        second = init_reservoir(make_params(seed=2))
        self.assertFalse(np.array_equal(first.w_res, second.w_res))

    def test_state_starts_at_zero(self):
        """Test state starts at zero."""
        layer = init_reservoir(make_params())
        np.testing.assert_array_equal(layer.state, np.zeros(50))

    def test_invalid_parameters_are_rejected(self):
        """Test invalid parameters are rejected."""
        with self.assertRaises(ConfigurationError) as ctx:
            make_params(spectral_radius=1.0, leak_rate=0.0, sparsity=1.5)
        self.assertIn('spectral_radius', ctx.exception.details)
        self.assertIn('leak_rate', ctx.exception.details)
        self.assertIn('sparsity', ctx.exception.details)


class ReservoirStepTestCase(SimpleTestCase):
    """Test cases for the leaky-integrator update."""

    def test_zero_state_zero_input_stays_at_origin(self):
        """Test zero state zero input stays at origin."""
        layer = init_reservoir(make_params())
        np.testing.assert_array_equal(layer.step(np.zeros(2)), np.zeros(50))

    def test_full_leak_equals_tanh_of_input_drive(self):
        """Test full leak equals tanh of input drive."""
        layer = init_reservoir(make_params(leak_rate=1.0))
        u = np.array([0.4, -0.2])
        expected = np.tanh(layer.w_in @ u)
        np.testing.assert_array_equal(layer.step(u), expected)

    def test_hand_evaluated_half_leak(self):
        """Test hand evaluated half leak."""
        params = ReservoirParams(size=3, input_dim=3, input_scaling=1.0,
                                 spectral_radius=0.5, leak_rate=0.5)
        layer = ReservoirLayer(params, np.eye(3), np.zeros((3, 3)))
        state = layer.step(np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(state, [0.5 * np.tanh(1.0), 0.0, 0.0], rtol=0, atol=1e-15)

    def test_full_leak_matches_no_leak_update(self):
        """Test full leak matches no leak update."""
        params = make_params(leak_rate=1.0)
        layer = init_reservoir(params)
        rng = np.random.default_rng(3)
        inputs = rng.uniform(-1, 1, size=(20, 2))
        x = np.zeros(50)
        for u in inputs:
            x = np.tanh(layer.w_res @ x + layer.w_in @ u)
            np.testing.assert_array_equal(layer.step(u), x)

    def test_wrong_input_length_raises(self):
        """Test wrong input length raises."""
        layer = init_reservoir(make_params())
        with self.assertRaises(DimensionMismatchError):
            layer.step(np.zeros(3))

    def test_non_finite_state_raises(self):
        """Test non finite state raises."""
        layer = init_reservoir(make_params(input_scaling=1.0))
        with self.assertRaises(NonFiniteStateError):
            layer.step(np.array([np.nan, 0.0]))


class ReservoirRunSequenceTestCase(SimpleTestCase):
    """Test cases for run_sequence and washout handling."""

    def setUp(self):
        self.params = make_params()
        self.inputs = np.random.default_rng(5).uniform(-1, 1, size=(5, 2))

    def test_no_washout_returns_every_state(self):
        """Test no washout returns every state."""
        states = init_reservoir(self.params).run_sequence(self.inputs, washout=0)
        self.assertEqual(states.shape, (5, 50))

    def test_washout_keeps_tail_of_full_run(self):
        """Test washout keeps tail of full run."""
        full = init_reservoir(self.params).run_sequence(self.inputs, washout=0)
        layer = init_reservoir(self.params)
        tail = layer.run_sequence(self.inputs, washout=4)
        self.assertEqual(tail.shape, (1, 50))
        np.testing.assert_array_equal(tail[0], full[4])
        np.testing.assert_array_equal(layer.state, full[4])

    def test_zero_inputs_give_zero_states(self):
        """Test zero inputs give zero states."""
        states = init_reservoir(self.params).run_sequence(np.zeros((5, 2)))
        self.assertFalse(np.any(states))

    def test_washout_not_shorter_than_sequence_raises(self):
        """Test washout not shorter than sequence raises."""
        with self.assertRaises(WashoutError):
            init_reservoir(self.params).run_sequence(self.inputs, washout=5)


class EchoStatePropertyTestCase(SimpleTestCase):
    """Stability properties under the sufficient condition σ̄(W_res) < 1."""

    def _pair(self, leak_rate):
        layer = scale_to_singular_value(init_reservoir(make_params(size=80, leak_rate=leak_rate)), 0.9)
        twin = layer.copy()
        rng = np.random.default_rng(21)
        layer.reset(rng.uniform(-1, 1, 80))
        twin.reset(rng.uniform(-1, 1, 80))
        inputs = rng.uniform(-1, 1, size=(1000, 2))
        return layer, twin, inputs

    def test_scaled_layer_has_requested_singular_value(self):
        """Test scaled layer has requested singular value."""
        layer = scale_to_singular_value(init_reservoir(make_params()), 0.9)
        self.assertAlmostEqual(largest_singular_value(layer.w_res), 0.9, places=10)

    def test_distinct_initial_states_converge(self):
        """Test distinct initial states converge."""
        layer, twin, inputs = self._pair(leak_rate=0.3)
        previous = np.linalg.norm(layer.state - twin.state)
        for u in inputs:
            distance = np.linalg.norm(layer.step(u) - twin.step(u))
            self.assertLessEqual(distance, previous + 1e-15)
            previous = distance
        self.assertLess(previous, 1e-6)

    def test_per_step_contraction_bound(self):
        """Test per step contraction bound."""
        layer, twin, inputs = self._pair(leak_rate=1.0)
        sigma = layer.max_singular_value
        previous = np.linalg.norm(layer.state - twin.state)
        for u in inputs[:200]:
            distance = np.linalg.norm(layer.step(u) - twin.step(u))
            self.assertLessEqual(distance, sigma * previous * (1 + 1e-12) + 1e-300)
            previous = distance

    def test_leaky_contraction_factor(self):
        """Test leaky contraction factor."""
        layer = scale_to_singular_value(init_reservoir(make_params(leak_rate=0.25)), 0.8)
        self.assertAlmostEqual(layer.contraction_factor, 0.75 + 0.25 * 0.8, places=10)
