"""
Tests for the optimizer app.
"""

import json
import math
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, override_settings

from apps.datasets.services import Split, make_task
from apps.shared.exceptions import ConfigurationError, SingularSystemError
from apps.stack.services import DeepEsnConfig
from apps.stack.training import fit_task
from .services import (
    GaConfig,
    apply_genes,
    evolve,
    resize_encoders,
    resize_reservoirs,
    sweep,
    sweep_grid,
)

HYPERPARAMETERS = [{'input_scaling': 0.5, 'spectral_radius': 0.9, 'leak_rate': 0.5}]


def surrogate(genes):
    return float(np.sum((genes - 0.5) ** 2))


def small_template(depth=2, **overrides):
    options = dict(input_dim=1, depth=depth, hyperparameters=HYPERPARAMETERS, reservoir_size=30,
                   encoder_size=8, washout=10, seed=1)
    options.update(overrides)
    return DeepEsnConfig.build(**options)


def small_task():
    t = np.arange(400)
    series = np.sin(0.2 * t) + 0.5 * np.sin(0.031 * t)
    return make_task(series, horizon=1, split=Split(250, 80, 69))


class GaConfigTestCase(SimpleTestCase):

    def test_full_profile_defaults(self):
        """Test full profile defaults."""
        ga = GaConfig.profile('full')
        self.assertEqual((ga.population, ga.generations), (40, 80))
        self.assertEqual(ga.tournament_size, 3)
        self.assertEqual(ga.elitism, 2)

    def test_desk_profile_with_override(self):
        """Test desk profile with override."""
        ga = GaConfig.profile('desk', seed=4)
        self.assertEqual((ga.population, ga.generations, ga.seed), (10, 10, 4))

    def test_invalid_values_listed(self):
        """Test invalid values listed."""
        with self.assertRaises(ConfigurationError) as ctx:
            GaConfig(population=2, elitism=3, crossover_rate=1.5)
        self.assertIn('elitism', ctx.exception.details)
        self.assertIn('crossover_rate', ctx.exception.details)

    def test_unknown_profile(self):
        """Test unknown profile."""
        with self.assertRaises(ConfigurationError):
            GaConfig.profile('huge')


class ApplyGenesTestCase(SimpleTestCase):

    def test_lower_bounds_are_kept_valid(self):
        """Test lower bounds are kept valid."""
        config = apply_genes(small_template(), np.zeros(6))
        epsilon = settings.DEEP_ESN['SPECTRAL_RADIUS_EPSILON']
        for layer in config.layers:
            self.assertEqual(layer.input_scaling, 0.0)
            self.assertAlmostEqual(layer.spectral_radius, epsilon)
            self.assertAlmostEqual(layer.leak_rate, epsilon)

    def test_upper_bounds_are_kept_valid(self):
        """Test upper bounds are kept valid."""
        config = apply_genes(small_template(), np.ones(6))
        for layer in config.layers:
            self.assertLess(layer.spectral_radius, 1.0)
            self.assertEqual(layer.leak_rate, 1.0)

    def test_genes_are_per_layer(self):
        """Test genes are per layer."""
        config = apply_genes(small_template(), [0.1, 0.5, 0.2, 0.3, 0.5, 0.4])
        self.assertAlmostEqual(config.layers[0].input_scaling, 0.1)
        self.assertAlmostEqual(config.layers[1].leak_rate, 0.4)
        self.assertAlmostEqual(config.layers[1].spectral_radius, 0.5)
        self.assertEqual(config.layers[1].seed, small_template().layers[1].seed)

    def test_wrong_genome_length(self):
        """Test wrong genome length."""
        with self.assertRaises(ConfigurationError):
            apply_genes(small_template(), np.zeros(4))


@override_settings(DEEP_ESN={**settings.DEEP_ESN, 'MAX_WORKERS': 1})
class EvolveTestCase(SimpleTestCase):
    """Test cases for the genetic search."""

    def test_degenerate_search_returns_its_only_individual(self):
        """Test degenerate search returns its only individual."""
        ga = GaConfig(population=1, generations=1, elitism=1, seed=3)
        result = evolve(ga, fitness=surrogate, gene_count=3)
        expected = np.random.default_rng(3).uniform(0.0, 1.0, size=(1, 3))[0]
        np.testing.assert_array_equal(result.best.genes, expected)
        self.assertEqual(result.best.fitness, surrogate(expected))
        self.assertEqual(result.generations_run, 1)

    def test_surrogate_converges_with_monotone_best(self):
        """Test surrogate converges with monotone best."""
        ga = GaConfig(population=20, generations=30, seed=0)
        result = evolve(ga, fitness=surrogate, gene_count=3)
        best = [entry['best_fitness'] for entry in result.history]
        for earlier, later in zip(best, best[1:]):
            self.assertLessEqual(later, earlier)
        self.assertLess(result.best.fitness, 1e-2)

    def test_fixed_seed_gives_identical_trajectory(self):
        """Test fixed seed gives identical trajectory."""
        ga = GaConfig(population=8, generations=6, seed=5)
        first = evolve(ga, fitness=surrogate, gene_count=4)
        second = evolve(ga, fitness=surrogate, gene_count=4)
        self.assertEqual(first.history, second.history)
        np.testing.assert_array_equal(first.best.genes, second.best.genes)

    def test_genes_stay_in_unit_cube(self):
        """Test genes stay in unit cube."""
        seen = []

        def recording(genes):
            seen.append(np.array(genes))
            return surrogate(genes)

        evolve(GaConfig(population=10, generations=8, mutation_rate=0.8, mutation_sigma=0.5, seed=2),
               fitness=recording, gene_count=6)
        genes = np.array(seen)
        self.assertTrue(np.all(genes >= 0.0))
        self.assertTrue(np.all(genes <= 1.0))

    def test_failed_individual_gets_infinite_fitness(self):
        """Test failed individual gets infinite fitness."""
        def fragile(genes):
            if genes[0] > 0.5:
                raise SingularSystemError('normal matrix is not positive definite')
            return surrogate(genes)

        with self.assertLogs('apps.optimizer.services', level='WARNING'):
            result = evolve(GaConfig(population=10, generations=3, seed=1), fitness=fragile, gene_count=2)
        self.assertTrue(math.isfinite(result.best.fitness))
        self.assertLessEqual(result.best.genes[0], 0.5)

    def test_parallel_evaluation_matches_serial(self):
        """Test parallel evaluation matches serial."""
        ga = GaConfig(population=8, generations=4, seed=9)
        serial = evolve(ga, fitness=surrogate, gene_count=3, max_workers=1)
        parallel = evolve(ga, fitness=surrogate, gene_count=3, max_workers=4)
        self.assertEqual(serial.history, parallel.history)

    def test_resume_continues_the_same_trajectory(self):
        """Test resume continues the same trajectory."""
        with tempfile.TemporaryDirectory() as tmp:
            checkpoint = Path(tmp) / 'ga_checkpoint.json'
            evolve(GaConfig(population=8, generations=4, seed=6), fitness=surrogate, gene_count=3,
                   checkpoint_path=checkpoint)
            state = json.loads(checkpoint.read_text())
            self.assertEqual(state['generation'], 3)
            self.assertEqual(len(state['population']), 8)

            resumed = evolve(GaConfig(population=8, generations=8, seed=6), fitness=surrogate,
                             gene_count=3, resume_from=checkpoint)
        straight = evolve(GaConfig(population=8, generations=8, seed=6), fitness=surrogate, gene_count=3)
        self.assertEqual(resumed.history, straight.history)

    def test_search_on_a_task(self):
        """Test search on a task."""
        template = small_template(depth=2)
        result = evolve(GaConfig(population=3, generations=2, seed=0), task=small_task(), template=template)
        self.assertEqual(result.best.genes.shape, (6,))
        self.assertTrue(math.isfinite(result.best.fitness))

    def test_task_without_validation_split(self):
        """Test task without validation split."""
        task = make_task(np.sin(np.arange(300.0)), horizon=1, split=Split(200, 0, 50))
        with self.assertRaises(ConfigurationError):
            evolve(GaConfig(population=2, generations=1), task=task, template=small_template())


class SweepTestCase(SimpleTestCase):
    """Test cases for grid sweeps."""

    def test_default_grids(self):
        """Test default grids."""
        self.assertEqual(sweep_grid('depth'), [2, 3, 4, 5, 6, 7, 8])
        encoder_sizes = sweep_grid('encoder_size')
        self.assertEqual(len(encoder_sizes), 30)
        self.assertEqual((encoder_sizes[0], encoder_sizes[-1]), (10, 300))
        reservoir_sizes = sweep_grid('reservoir_size')
        self.assertEqual((reservoir_sizes[0], reservoir_sizes[-1], len(reservoir_sizes)), (100, 1000, 10))

    def test_singleton_range(self):
        """Test singleton range."""
        self.assertEqual(sweep_grid('depth', 2, 2), [2])

    def test_unknown_axis(self):
        """Test unknown axis."""
        with self.assertRaises(ConfigurationError):
            sweep_grid('leak_rate')

    def test_resizing_keeps_wiring_consistent(self):
        """Test resizing keeps wiring consistent."""
        config = resize_encoders(small_template(depth=3), 12)
        self.assertEqual([layer.input_dim for layer in config.layers], [1, 12, 12])
        config = resize_reservoirs(small_template(depth=3), 50)
        self.assertEqual([spec.input_dim for spec in config.encoders], [50, 50])

    def test_depth_sweep_single_row(self):
        """Test depth sweep single row."""
        table = sweep(small_task(), small_template(depth=2), 'depth', values=[2], max_workers=1)
        self.assertEqual(len(table), 1)
        self.assertEqual(table.loc[0, 'status'], 'ok')
        self.assertGreater(table.loc[0, 'rmse'], 0.0)

    def test_failed_points_are_recorded(self):
        """Test failed points are recorded."""
        with self.assertLogs('apps.optimizer.services', level='WARNING'):
            table = sweep(small_task(), small_template(depth=2), 'encoder_size', values=[10, 40], max_workers=1)
        self.assertEqual(list(table['status']), ['ok', 'failed'])
        self.assertIn('PCA', table.loc[1, 'error'])

    def test_numerical_failures_are_recorded(self):
        """Test that a LinAlgError at one grid point becomes a failed row."""
        def fit_or_fail(task, config):
            if config.depth == 3:
                raise np.linalg.LinAlgError('Matrix is not positive definite')
            return fit_task(task, config)

        with mock.patch('apps.optimizer.services.fit_task', side_effect=fit_or_fail):
            table = sweep(small_task(), small_template(depth=2), 'depth', values=[2, 3], max_workers=1)
        self.assertEqual(list(table['status']), ['ok', 'failed'])
        self.assertIn('LinAlgError', table.loc[1, 'error'])
