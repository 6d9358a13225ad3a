"""
Tests for the encoders app.
"""

import warnings

import numpy as np
from django.test import SimpleTestCase
from scipy.stats import ortho_group

from apps.shared.exceptions import ConfigurationError, DimensionMismatchError, RankDeficiencyWarning
from .services import EncoderKind, EncoderSpec, FittedEncoder, fit_encoder


class EncoderSpecTestCase(SimpleTestCase):
    """Test cases for EncoderSpec validation."""

    def test_pca_cannot_expand(self):
        """Test PCA cannot expand."""
        with self.assertRaises(ConfigurationError):
            EncoderSpec(EncoderKind.PCA, input_dim=5, output_dim=6)

    def test_identity_requires_equal_dims(self):
        """Test identity requires equal dims."""
        with self.assertRaises(ConfigurationError):
            EncoderSpec(EncoderKind.IDENTITY, input_dim=5, output_dim=4)

    def test_round_trip_through_dict(self):
        """Test round trip through dict."""
        spec = EncoderSpec('elm_ae', input_dim=30, output_dim=10, regularization=1e-3, seed=4)
        self.assertEqual(EncoderSpec.from_dict(spec.to_dict()), spec)


class PcaEncoderTestCase(SimpleTestCase):
    """Test cases for the PCA encoder."""

    def setUp(self):
        rng = np.random.default_rng(0)
        self.states = rng.normal(size=(200, 10)) @ rng.normal(size=(10, 10))

    def test_line_data_gives_diagonal_component(self):
        """Test line data gives diagonal component."""
        t = np.linspace(-1, 1, 21)
        encoder = fit_encoder(EncoderSpec(EncoderKind.PCA, 2, 1), np.column_stack([t, t]))
        np.testing.assert_allclose(encoder.weights[0], [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-12)
        np.testing.assert_allclose(encoder.encode(np.array([2.0, 2.0])), [2 * np.sqrt(2)], atol=1e-12)

    def test_encoding_the_mean_gives_zero(self):
        """Test encoding the mean gives zero."""
        encoder = fit_encoder(EncoderSpec(EncoderKind.PCA, 10, 4), self.states)
        np.testing.assert_allclose(encoder.encode(encoder.mean), np.zeros(4), atol=1e-12)

    def test_rows_are_orthonormal(self):
        """Test rows are orthonormal."""
        encoder = fit_encoder(EncoderSpec(EncoderKind.PCA, 10, 6), self.states)
        np.testing.assert_allclose(encoder.weights @ encoder.weights.T, np.eye(6), atol=1e-8)

    def test_encoded_training_data_is_decorrelated(self):
        """Test encoded training data is decorrelated."""
        encoder = fit_encoder(EncoderSpec(EncoderKind.PCA, 10, 5), self.states)
        encoded = encoder.encode(self.states)
        covariance = np.cov(encoded, rowvar=False)
        off_diagonal = covariance - np.diag(np.diag(covariance))
        self.assertLess(np.max(np.abs(off_diagonal)), 1e-6)

    def test_components_ordered_by_variance(self):
        """Test components ordered by variance."""
        encoder = fit_encoder(EncoderSpec(EncoderKind.PCA, 10, 5), self.states)
        variances = np.var(encoder.encode(self.states), axis=0)
        self.assertTrue(np.all(np.diff(variances) <= 1e-9))

    def test_reconstruction_beats_random_subspaces(self):
        """Test reconstruction beats random subspaces."""
        rng = np.random.default_rng(1)
        states = rng.normal(size=(200, 10)) * np.linspace(3, 0.2, 10)
        m = 3
        encoder = fit_encoder(EncoderSpec(EncoderKind.PCA, 10, m), states)
        centered = states - encoder.mean

        def reconstruction_error(basis):
            projected = centered @ basis.T @ basis
            return float(np.sum((centered - projected) ** 2))

        best = reconstruction_error(encoder.weights)
        for seed in range(100):
            basis = ortho_group.rvs(10, random_state=seed)[:m]
            self.assertLessEqual(best, reconstruction_error(basis) + 1e-9)

    def test_sign_normalization_makes_largest_entry_positive(self):
        """Test sign normalization makes largest entry positive."""
        encoder = fit_encoder(EncoderSpec(EncoderKind.PCA, 10, 4), self.states)
        for row in encoder.weights:
            self.assertGreater(row[np.argmax(np.abs(row))], 0)

    def test_rank_deficiency_warns_and_fills_zero_rows(self):
        """Test rank deficiency warns and fills zero rows."""
        t = np.linspace(-1, 1, 30)
        states = np.column_stack([t, 2 * t, np.zeros_like(t)])
        with self.assertWarns(RankDeficiencyWarning):
            encoder = fit_encoder(EncoderSpec(EncoderKind.PCA, 3, 2), states)
        np.testing.assert_array_equal(encoder.weights[1], np.zeros(3))

    def test_ill_conditioned_states_keep_every_component(self):
        """Test that singular values spanning seven decades all survive the fit."""
        rng = np.random.default_rng(2)
        raw = rng.normal(size=(200, 20))
        basis, _ = np.linalg.qr(raw - raw.mean(axis=0))
        directions = ortho_group.rvs(30, random_state=4)[:20]
        states = basis @ np.diag(np.logspace(0, -7, 20)) @ directions + 5.0

        with warnings.catch_warnings():
            warnings.simplefilter('error', RankDeficiencyWarning)
            encoder = fit_encoder(EncoderSpec(EncoderKind.PCA, 30, 20), states)

        self.assertTrue(np.all(np.linalg.norm(encoder.weights, axis=1) > 0.5))
        np.testing.assert_allclose(encoder.weights @ encoder.weights.T, np.eye(20), atol=1e-8)
        self.assertGreater(abs(float(encoder.weights[-1] @ directions[-1])), 0.99)

    def test_fit_is_deterministic(self):
        """Test fit is deterministic."""
        first = fit_encoder(EncoderSpec(EncoderKind.PCA, 10, 4), self.states)
        second = fit_encoder(EncoderSpec(EncoderKind.PCA, 10, 4), self.states)
        np.testing.assert_array_equal(first.weights, second.weights)

    def test_single_sample_is_rejected(self):
        """Test single sample is rejected."""
        with self.assertRaises(DimensionMismatchError):
            fit_encoder(EncoderSpec(EncoderKind.PCA, 10, 4), self.states[:1])


class ElmAutoencoderTestCase(SimpleTestCase):
    """Test cases for the ELM autoencoder."""

    def test_matches_dense_ridge_oracle(self):
        """Test matches dense ridge oracle."""
        rng = np.random.default_rng(2)
        states = rng.normal(size=(150, 12))
        spec = EncoderSpec(EncoderKind.ELM_AE, 12, 5, regularization=1e-3, seed=9)
        encoder = fit_encoder(spec, states)

        # Rebuild the hidden layer with the same generator draws
        oracle_rng = np.random.default_rng(9)
        w0 = oracle_rng.uniform(-1, 1, size=(5, 12))
        b0 = oracle_rng.uniform(-1, 1, size=5)
        x = states.T
        h = np.tanh(w0 @ x + b0[:, None])
        w_star = x @ h.T @ np.linalg.inv(h @ h.T + 1e-3 * np.eye(5))
        np.testing.assert_allclose(encoder.weights, w_star.T, rtol=0, atol=1e-6)

    def test_encode_is_linear_without_centering(self):
        """Test encode is linear without centering."""
        rng = np.random.default_rng(3)
        encoder = fit_encoder(EncoderSpec(EncoderKind.ELM_AE, 8, 3, seed=1), rng.normal(size=(50, 8)))
        state = rng.normal(size=8)
        np.testing.assert_allclose(encoder.encode(state), encoder.weights @ state)
        np.testing.assert_array_equal(encoder.mean, np.zeros(8))


class RandomProjectionTestCase(SimpleTestCase):
    """Test cases for the Achlioptas random projection."""

    def test_entries_are_three_valued(self):
        """Test entries are three valued."""
        encoder = fit_encoder(EncoderSpec(EncoderKind.RP, 40, 20, seed=1), None)
        self.assertTrue(np.all(np.isin(encoder.weights / np.sqrt(3), [-1.0, 0.0, 1.0])))

    def test_empirical_frequencies(self):
        """Test empirical frequencies."""
        encoder = fit_encoder(EncoderSpec(EncoderKind.RP, 300, 200, seed=5), None)
        values = np.round(encoder.weights.ravel() / np.sqrt(3))
        self.assertEqual(values.size, 60000)
        self.assertAlmostEqual(np.mean(values == 1), 1 / 6, delta=0.01)
        self.assertAlmostEqual(np.mean(values == 0), 2 / 3, delta=0.01)
        self.assertAlmostEqual(np.mean(values == -1), 1 / 6, delta=0.01)

    def test_zero_state_maps_to_zero(self):
        """Test zero state maps to zero."""
        encoder = fit_encoder(EncoderSpec(EncoderKind.RP, 30, 10), None)
        np.testing.assert_array_equal(encoder.encode(np.zeros(30)), np.zeros(10))

    def test_ignores_training_data(self):
        """Test ignores training data."""
        spec = EncoderSpec(EncoderKind.RP, 30, 10, seed=8)
        rng = np.random.default_rng(0)
        with_data = fit_encoder(spec, rng.normal(size=(40, 30)))
        without_data = fit_encoder(spec, None)
        np.testing.assert_array_equal(with_data.weights, without_data.weights)

    def test_squared_distances_roughly_preserved(self):
        """Test squared distances roughly preserved."""
        # Unit-variance entries scale squared norms by M; compare on the per-row average
        n, m = 300, 150
        encoder = fit_encoder(EncoderSpec(EncoderKind.RP, n, m, seed=3), None)
        rng = np.random.default_rng(4)
        ratios = []
        for _ in range(100):
            a, b = rng.normal(size=n), rng.normal(size=n)
            projected = np.sum((encoder.encode(a) - encoder.encode(b)) ** 2) / m
            ratios.append(projected / np.sum((a - b) ** 2))
        self.assertTrue(0.8 <= np.mean(ratios) <= 1.2)


class IdentityEncoderTestCase(SimpleTestCase):
    """Test cases for the identity pass-through."""

    def test_encode_returns_input(self):
        """Test encode returns input."""
        encoder = fit_encoder(EncoderSpec(EncoderKind.IDENTITY, 4, 4), np.ones((3, 4)))
        state = np.array([0.1, -2.0, 3.5, 0.0])
        np.testing.assert_array_equal(encoder.encode(state), state)

    def test_wrong_length_raises(self):
        """Test wrong length raises."""
        encoder = fit_encoder(EncoderSpec(EncoderKind.IDENTITY, 4, 4), np.ones((3, 4)))
        with self.assertRaises(DimensionMismatchError):
            encoder.encode(np.zeros(5))

    def test_fitted_encoder_is_read_only(self):
        """Test fitted encoder is read only."""
        encoder = FittedEncoder(EncoderSpec(EncoderKind.IDENTITY, 2, 2), np.eye(2))
        with self.assertRaises(ValueError):
            encoder.weights[0, 0] = 5.0
