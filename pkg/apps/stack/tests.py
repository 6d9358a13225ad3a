"""
Tests for the stack app.
"""

import json
import struct
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.datasets.services import Split, make_task
from apps.encoders.services import EncoderKind
from apps.reservoir.services import scale_to_singular_value
from apps.shared.exceptions import (
    ConfigurationError,
    CorruptModelFileError,
    DimensionMismatchError,
    ModelVersionError,
    SingularSystemError,
    WashoutError,
)
from .model_store import MAGIC, ModelStore
from .services import (
    SEGMENT_ENCODER,
    SEGMENT_INPUT,
    SEGMENT_RESERVOIR,
    DeepEsnConfig,
    DeepEsnModel,
    EchoStateNetwork,
    deepen,
    extend_hyperparameters,
    fit_readout,
)
from .training import evaluate_split, fit_task, predict_split

HYPERPARAMETERS = [
    {'input_scaling': 0.5, 'spectral_radius': 0.9, 'leak_rate': 0.5},
    {'input_scaling': 0.4, 'spectral_radius': 0.8, 'leak_rate': 0.6},
    {'input_scaling': 0.3, 'spectral_radius': 0.7, 'leak_rate': 0.7},
]


def sine_inputs(length, channels=1):
    t = np.arange(length)[:, None]
    return np.sin(0.2 * t + np.arange(channels)) + 0.5 * np.sin(0.031 * t)


def small_config(depth=3, **overrides):
    options = dict(input_dim=1, depth=depth, hyperparameters=HYPERPARAMETERS, reservoir_size=40,
                   encoder_size=10, washout=20, seed=3)
    options.update(overrides)
    return DeepEsnConfig.build(**options)


def trained_model(depth=3, **overrides):
    series = sine_inputs(401)
    model = DeepEsnModel.initialize(small_config(depth, **overrides))
    return model.fit(series[:-1], series[1:])


class ReadoutTestCase(SimpleTestCase):
    """Test cases for the ridge readout."""

    def test_scalar_exact_solve(self):
        """Test scalar exact solve."""
        np.testing.assert_allclose(fit_readout(np.array([[1.0]]), np.array([[2.0]]), 0.0), [[2.0]])

    def test_identity_system(self):
        """Test identity system."""
        np.testing.assert_allclose(fit_readout(np.eye(2), np.eye(2), 0.0), np.eye(2), atol=1e-14)

    def test_regularized_hand_value(self):
        """Test regularized hand value."""
        weights = fit_readout(np.array([[1.0, 1.0]]), np.array([[1.0, 1.0]]), 1.0)
        self.assertAlmostEqual(weights[0, 0], 2.0 / 3.0, places=14)

    def test_matches_dense_solution(self):
        """Test matches dense solution."""
        rng = np.random.default_rng(0)
        for _ in range(5):
            design = rng.normal(size=(50, 200))
            teachers = rng.normal(size=(2, 200))
            beta = 1e-5
            expected = teachers @ design.T @ np.linalg.inv(design @ design.T + beta * np.eye(50))
            actual = fit_readout(design, teachers, beta)
            error = np.linalg.norm(actual - expected) / np.linalg.norm(expected)
            self.assertLess(error, 1e-8)

    def test_rank_deficient_without_regularization(self):
        """Test rank deficient without regularization."""
        design = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
        with self.assertRaises(SingularSystemError):
            fit_readout(design, np.ones((1, 3)), 0.0)

    def test_training_error_grows_with_regularization(self):
        """Test training error grows with regularization."""
        model = DeepEsnModel.initialize(small_config(depth=1, reservoir_size=20))
        inputs = np.random.default_rng(5).uniform(-1.0, 1.0, size=(400, 1))
        collection, teachers = model.forward_collect(inputs[:-1], inputs[1:] ** 2)
        errors = []
        for beta in (0.0, 1e-5, 1e-2, 1.0):
            weights = fit_readout(collection, teachers, beta)
            residual = weights @ collection.matrix - teachers
            errors.append(np.sqrt(np.mean(residual ** 2)))
        for smaller, larger in zip(errors, errors[1:]):
            self.assertLessEqual(smaller, larger * (1 + 1e-9))


class ConfigTestCase(SimpleTestCase):
    """Test cases for DeepEsnConfig construction."""

    def test_readout_width_counts_every_segment(self):
        """Test readout width counts every segment."""
        config = DeepEsnConfig.build(input_dim=1, depth=3, hyperparameters=HYPERPARAMETERS,
                                     reservoir_size=300, encoder_size=30)
        self.assertEqual(config.readout_width, 361)

    def test_width_without_links_or_input(self):
        """Test width without links or input."""
        config = small_config(feature_links=False, direct_input=False)
        self.assertEqual(config.readout_width, 40)

    def test_mismatched_wiring_is_rejected(self):
        """Test mismatched wiring is rejected."""
        config = small_config(depth=2)
        bad_layer = replace(config.layers[1], input_dim=11)
        with self.assertRaises(ConfigurationError) as ctx:
            DeepEsnConfig(layers=(config.layers[0], bad_layer), encoders=config.encoders)
        self.assertIn('layers.1.input_dim', ctx.exception.details)

    def test_encoder_count_must_be_depth_minus_one(self):
        """Test encoder count must be depth minus one."""
        config = small_config(depth=2)
        with self.assertRaises(ConfigurationError):
            DeepEsnConfig(layers=config.layers, encoders=())

    def test_component_seeds_are_distinct_and_reproducible(self):
        """Test component seeds are distinct and reproducible."""
        first = small_config(depth=3)
        second = small_config(depth=3)
        seeds = [p.seed for p in first.layers] + [e.seed for e in first.encoders]
        self.assertEqual(len(set(seeds)), 5)
        self.assertEqual(first, second)

    def test_identity_encoders_keep_reservoir_width(self):
        """Test identity encoders keep reservoir width."""
        config = small_config(depth=2, encoder_kind=EncoderKind.IDENTITY, feature_links=False)
        self.assertEqual(config.encoders[0].output_dim, 40)
        self.assertEqual(config.layers[1].input_dim, 40)

    def test_dict_round_trip(self):
        """Test dict round trip."""
        config = small_config()
        self.assertEqual(DeepEsnConfig.from_dict(json.loads(json.dumps(config.to_dict()))), config)


class DeepeningTestCase(SimpleTestCase):
    """Test cases for the layer-copying rule."""

    def test_second_and_third_layers_alternate(self):
        """Test second and third layers alternate."""
        h1, h2, h3 = HYPERPARAMETERS
        self.assertEqual(extend_hyperparameters(HYPERPARAMETERS, 7), [h1, h2, h3, h2, h3, h2, h3])

    def test_short_lists_repeat_last_layer(self):
        """Test short lists repeat last layer."""
        h1, h2, _ = HYPERPARAMETERS
        self.assertEqual(extend_hyperparameters([h1, h2], 4), [h1, h2, h2, h2])

    def test_deepen_matches_building_at_full_depth(self):
        """Test deepen matches building at full depth."""
        self.assertEqual(deepen(small_config(depth=3), 6), small_config(depth=6))

    def test_deepen_can_truncate(self):
        """Test deepen can truncate."""
        self.assertEqual(deepen(small_config(depth=4), 2), small_config(depth=2))

    def test_single_layer_cannot_be_deepened(self):
        """Test single layer cannot be deepened."""
        with self.assertRaises(ConfigurationError):
            deepen(small_config(depth=1), 3)


class ForwardPassTestCase(SimpleTestCase):
    """Test cases for the layer-by-layer pass and design matrix."""

    def test_segment_layout_and_alignment(self):
        """Test segment layout and alignment."""
        model = DeepEsnModel.initialize(small_config(depth=3))
        series = sine_inputs(201)
        collection, teachers = model.forward_collect(series[:-1], series[1:])
        self.assertEqual(collection.width, 40 + 1 + 10 + 10)
        self.assertEqual(collection.steps, 200 - 3 * 20)
        self.assertEqual([s.role for s in collection.layout],
                         [SEGMENT_RESERVOIR, SEGMENT_INPUT, SEGMENT_ENCODER, SEGMENT_ENCODER])
        np.testing.assert_array_equal(collection.segment(SEGMENT_INPUT)[0], series[60:200, 0])
        np.testing.assert_array_equal(teachers[0], series[61:201, 0])

    def test_single_layer_without_extras_uses_only_reservoir_states(self):
        """Test single layer without extras uses only reservoir states."""
        model = DeepEsnModel.initialize(small_config(depth=1, feature_links=False, direct_input=False))
        series = sine_inputs(101)
        collection, _ = model.forward_collect(series[:-1], series[1:])
        self.assertEqual(collection.width, 40)
        self.assertEqual(len(collection.layout), 1)

    def test_feature_links_only_change_their_segments(self):
        """Test feature links only change their segments."""
        series = sine_inputs(201)
        with_links = DeepEsnModel.initialize(small_config(depth=3))
        without = DeepEsnModel.initialize(small_config(depth=3, feature_links=False))
        a, _ = with_links.forward_collect(series[:-1], series[1:])
        b, _ = without.forward_collect(series[:-1], series[1:])
        np.testing.assert_array_equal(a.segment(SEGMENT_RESERVOIR), b.segment(SEGMENT_RESERVOIR))
        np.testing.assert_array_equal(a.segment(SEGMENT_INPUT), b.segment(SEGMENT_INPUT))
        self.assertEqual(b.width, 41)

    def test_cumulative_washout_must_leave_steps(self):
        """Test cumulative washout must leave steps."""
        model = DeepEsnModel.initialize(small_config(depth=3))
        series = sine_inputs(60)
        with self.assertRaises(WashoutError):
            model.forward_collect(series, series)

    def test_channel_mismatch(self):
        """Test channel mismatch."""
        model = DeepEsnModel.initialize(small_config(depth=2))
        with self.assertRaises(DimensionMismatchError):
            model.forward_collect(sine_inputs(200, channels=2), sine_inputs(200))

    def test_collect_requires_fitted_encoders(self):
        """Test collect requires fitted encoders."""
        model = DeepEsnModel.initialize(small_config(depth=2))
        with self.assertRaises(ConfigurationError):
            model.collect(sine_inputs(200))

    def test_layers_converge_from_different_initial_states(self):
        """Test layers converge from different initial states."""
        model = trained_model(depth=3)
        model.reservoirs = [scale_to_singular_value(layer, 0.9) for layer in model.reservoirs]
        rng = np.random.default_rng(12)
        first = [rng.uniform(-1, 1, size=40) for _ in range(3)]
        second = [rng.uniform(-1, 1, size=40) for _ in range(3)]
        inputs = sine_inputs(1000)
        a = model.collect(inputs, washout=0, initial_states=first)
        b = model.collect(inputs, washout=0, initial_states=second)
        for layer_a, layer_b in zip(a.reservoir_states, b.reservoir_states):
            self.assertLess(np.linalg.norm(layer_a[-1] - layer_b[-1]), 1e-6)


class PredictionTestCase(SimpleTestCase):
    """Test cases for trained-model prediction."""

    def test_in_sample_fit_beats_zero_predictor(self):
        """Test in sample fit beats zero predictor."""
        series = sine_inputs(401)
        model = DeepEsnModel.initialize(small_config(depth=3)).fit(series[:-1], series[1:])
        predictions = model.predict(series[:-1])
        targets = series[61:]
        fitted = np.sqrt(np.mean((predictions - targets) ** 2))
        zero = np.sqrt(np.mean(targets ** 2))
        self.assertLessEqual(fitted, zero * 1.01)

    def test_zero_readout_predicts_zero(self):
        """Test zero readout predicts zero."""
        model = trained_model(depth=2)
        model.readout = np.zeros_like(model.readout)
        np.testing.assert_array_equal(model.predict(sine_inputs(200)), np.zeros((160, 1)))

    def test_prediction_is_deterministic_and_leaves_model_untouched(self):
        """Test prediction is deterministic and leaves model untouched."""
        model = trained_model(depth=3)
        before = [layer.state.copy() for layer in model.reservoirs]
        first = model.predict(sine_inputs(150))
        second = model.predict(sine_inputs(150))
        np.testing.assert_array_equal(first, second)
        for state, layer in zip(before, model.reservoirs):
            np.testing.assert_array_equal(state, layer.state)

    def test_single_layer_matches_standalone_esn(self):
        """Test single layer matches standalone ESN."""
        config = small_config(depth=1)
        series = sine_inputs(301)
        deep = DeepEsnModel.initialize(config).fit(series[:-1], series[1:])
        esn = EchoStateNetwork(config.layers[0], washout=20, ridge_beta=config.ridge_beta)
        esn.fit(series[:-1], series[1:])
        np.testing.assert_array_equal(deep.readout, esn.readout)
        np.testing.assert_array_equal(deep.predict(series[:-1]), esn.predict(series[:-1]))

    def test_untrained_model_cannot_predict(self):
        """Test untrained model cannot predict."""
        model = DeepEsnModel.initialize(small_config(depth=1))
        with self.assertRaises(ConfigurationError):
            model.predict(sine_inputs(100))


class ModelFileTestCase(SimpleTestCase):
    """Test cases for the binary model container."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / 'model.desn'

    def test_round_trip_gives_identical_predictions(self):
        """Test round trip gives identical predictions."""
        model = trained_model(depth=3)
        model.save(self.path)
        loaded = DeepEsnModel.load(self.path)
        inputs = sine_inputs(180)
        np.testing.assert_array_equal(loaded.predict(inputs), model.predict(inputs))
        self.assertEqual(loaded.config, model.config)

    def test_file_starts_with_magic(self):
        """Test file starts with magic."""
        ModelStore.save(trained_model(depth=1), self.path)
        self.assertEqual(self.path.read_bytes()[:4], MAGIC)

    def test_truncated_file_is_corrupt(self):
        """Test truncated file is corrupt."""
        blob = ModelStore.serialize(trained_model(depth=2))
        for cut in (3, 20, len(blob) - 8):
            self.path.write_bytes(blob[:cut])
            with self.assertRaises(CorruptModelFileError):
                ModelStore.load(self.path)

    def test_flipped_payload_byte_fails_checksum(self):
        """Test flipped payload byte fails checksum."""
        blob = bytearray(ModelStore.serialize(trained_model(depth=1)))
        blob[-1] ^= 0xFF
        self.path.write_bytes(bytes(blob))
        with self.assertRaises(CorruptModelFileError):
            ModelStore.load(self.path)

    def write_with_header(self, blob, header):
        (length,) = struct.unpack_from('<I', blob, 4)
        encoded = json.dumps(header).encode('utf-8')
        self.path.write_bytes(MAGIC + struct.pack('<I', len(encoded)) + encoded + blob[8 + length:])

    def test_header_that_is_not_an_object_is_corrupt(self):
        """Test that a JSON list in place of the header object is reported as corrupt."""
        blob = ModelStore.serialize(trained_model(depth=1))
        self.write_with_header(blob, [1, 2, 3])
        with self.assertRaises(CorruptModelFileError):
            ModelStore.load(self.path)

    def test_header_missing_keys_is_corrupt(self):
        """Test that a header without its array table is reported as corrupt."""
        blob = ModelStore.serialize(trained_model(depth=1))
        (length,) = struct.unpack_from('<I', blob, 4)
        header = json.loads(blob[8:8 + length])
        del header['arrays']
        self.write_with_header(blob, header)
        with self.assertRaises(CorruptModelFileError) as ctx:
            ModelStore.load(self.path)
        self.assertEqual(ctx.exception.details, {'missing': ['arrays']})

    def test_config_disagreeing_with_arrays_is_corrupt(self):
        """Test that an edited layer size with an intact payload is reported as corrupt."""
        blob = ModelStore.serialize(trained_model(depth=2))
        (length,) = struct.unpack_from('<I', blob, 4)
        header = json.loads(blob[8:8 + length])
        header['config']['layers'][0]['size'] += 1
        self.write_with_header(blob, header)
        with self.assertRaises(CorruptModelFileError):
            ModelStore.load(self.path)

    def test_unsupported_schema_version(self):
        """Test unsupported schema version."""
        blob = ModelStore.serialize(trained_model(depth=1))
        (length,) = struct.unpack_from('<I', blob, 4)
        header = json.loads(blob[8:8 + length])
        header['schema_version'] = 99
        encoded = json.dumps(header).encode('utf-8')
        self.path.write_bytes(MAGIC + struct.pack('<I', len(encoded)) + encoded + blob[8 + length:])
        with self.assertRaises(ModelVersionError):
            ModelStore.load(self.path)


class TrainingServiceTestCase(SimpleTestCase):
    """Test cases for fit_task / predict_split / evaluate_split."""

    def setUp(self):
        self.task = make_task(sine_inputs(700)[:, 0], horizon=1, split=Split(400, 150, 149))
        self.model = fit_task(self.task, small_config(depth=2))

    def test_split_predictions_cover_the_split(self):
        """Test split predictions cover the split."""
        targets, predictions = predict_split(self.model, self.task, 'test')
        self.assertEqual(targets.shape, (149, 1))
        self.assertEqual(predictions.shape, (149, 1))
        np.testing.assert_array_equal(targets, self.task.targets[550:699])

    def test_training_split_drops_the_washout(self):
        """Test training split drops the washout."""
        targets, _ = predict_split(self.model, self.task, 'train')
        self.assertEqual(targets.shape[0], 400 - 2 * 20)

    def test_smooth_signal_is_predicted_accurately(self):
        """Test smooth signal is predicted accurately."""
        report = evaluate_split(self.model, self.task, 'validate')
        self.assertEqual(report.n, 150)
        self.assertLess(report.nrmse, 0.1)

    def test_training_range_must_exceed_washout(self):
        """Test training range must exceed washout."""
        task = make_task(sine_inputs(200)[:, 0], horizon=1, split=Split(40, 50, 50))
        with self.assertRaises(WashoutError):
            fit_task(task, small_config(depth=2))
