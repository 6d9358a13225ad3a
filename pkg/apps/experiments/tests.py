"""
Tests for the experiments app: config loading, the management commands
and the end-to-end acceptance runs (slow, opt-in).
"""

import copy
import json
import tempfile
import unittest
from unittest import mock
from io import StringIO
from pathlib import Path

import numpy as np
from decouple import config as env
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.diagnostics.services import condition_analysis
from apps.metrics.services import rmse
from apps.shared.exceptions import EXIT_CONFIG_ERROR, EXIT_RUNTIME_ERROR, ConfigurationError
from apps.stack.model_store import ModelStore
from apps.stack.services import EchoStateNetwork
from apps.stack.training import fit_task
from .services import (
    ExperimentConfigLoader,
    ExperimentService,
    apply_overrides,
    format_table,
    load_hyperparameters,
    parse_override,
)

CONFIG_DIR = Path(settings.BASE_DIR) / 'configs'
RUN_SLOW = env('DEEP_ESN_RUN_SLOW', default=False, cast=bool)

TINY_CONFIG = {
    'name': 'tiny',
    'dataset': {
        'source': 'narma10',
        'horizon': 1,
        'split': {'train': 300, 'validate': 100, 'test': 100},
    },
    'architecture': {
        'depth': 2,
        'reservoir_size': 30,
        'encoder': 'pca',
        'encoder_size': 8,
        'washout': 10,
    },
    'hyperparameters': [
        {'input_scaling': 0.5, 'spectral_radius': 0.9, 'leak_rate': 0.5},
    ],
    'optimizer': {'profile': 'desk', 'population': 3, 'generations': 2},
    'diagnostics': {'perturb_step': 100, 'horizon': 200},
    'run': {'repetitions': 2, 'base_seed': 3},
}


class ExperimentCommandTestCase(SimpleTestCase):
    """Shared temp directory and tiny config file"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.output = self.root / 'out'
        self.config_path = self.write_config(TINY_CONFIG)

    def write_config(self, document, name='tiny.json'):
        path = self.root / name
        path.write_text(json.dumps(document))
        return path

    def run_command(self, name, *args, config_path=None):
        out = StringIO()
        call_command(name, str(config_path or self.config_path), '--output-dir', str(self.output),
                     *args, stdout=out)
        return out.getvalue()

    def trained_model(self):
        self.run_command('train', '--repetitions', '1')
        return self.output / 'model_r00.desn'


class OverrideTestCase(SimpleTestCase):

    def test_parse_json_and_plain_values(self):
        """Test parse JSON and plain values."""
        self.assertEqual(parse_override('architecture.depth=4'), (['architecture', 'depth'], 4))
        self.assertEqual(parse_override('dataset.path=data/x.csv'), (['dataset', 'path'], 'data/x.csv'))
        self.assertEqual(parse_override('architecture.feature_links=false'),
                         (['architecture', 'feature_links'], False))

    def test_malformed_override(self):
        """Test malformed override."""
        with self.assertRaises(ConfigurationError):
            parse_override('architecture.depth')
        with self.assertRaises(ConfigurationError):
            parse_override('=3')

    def test_overrides_do_not_touch_the_original(self):
        """Test overrides do not touch the original."""
        document = copy.deepcopy(TINY_CONFIG)
        result = apply_overrides(document, ['run.repetitions=5', 'output.directory=/tmp/x'])
        self.assertEqual(result['run']['repetitions'], 5)
        self.assertEqual(result['output']['directory'], '/tmp/x')
        self.assertEqual(document['run']['repetitions'], 2)

    def test_list_index_override(self):
        """Test list index override."""
        result = apply_overrides(TINY_CONFIG, ['hyperparameters.0.leak_rate=0.25'])
        self.assertEqual(result['hyperparameters'][0]['leak_rate'], 0.25)

    def test_list_index_out_of_range(self):
        """Test list index out of range."""
        with self.assertRaises(ConfigurationError):
            apply_overrides(TINY_CONFIG, ['hyperparameters.4.leak_rate=0.25'])


class ConfigLoaderTestCase(SimpleTestCase):
    """Test cases for config validation."""

    def test_defaults_are_filled(self):
        """Test defaults are filled."""
        config = ExperimentConfigLoader.validate(TINY_CONFIG)
        self.assertEqual(config['architecture']['sparsity'], 0.1)
        self.assertTrue(config['architecture']['feature_links'])
        self.assertEqual(config['run']['evaluate_split'], 'test')
        self.assertEqual(config['sweep']['axis'], 'depth')
        self.assertEqual(config['dataset']['mape_offset'], 0.0)

    def test_every_invalid_field_is_reported(self):
        """Test every invalid field is reported."""
        document = apply_overrides(TINY_CONFIG, [
            'architecture.sparsity=0',
            'hyperparameters.0.spectral_radius=1.0',
            'dataset.smoothing_window=4',
        ])
        with self.assertRaises(ConfigurationError) as ctx:
            ExperimentConfigLoader.validate(document)
        details = ctx.exception.details
        self.assertIn('architecture.sparsity', details)
        self.assertIn('hyperparameters.0.spectral_radius', details)
        self.assertIn('dataset.smoothing_window', details)

    def test_washout_must_fit_the_training_split(self):
        """Test washout must fit the training split."""
        document = apply_overrides(TINY_CONFIG, ['architecture.washout=150'])
        with self.assertRaises(ConfigurationError) as ctx:
            ExperimentConfigLoader.validate(document)
        self.assertIn('architecture.washout', ctx.exception.details)

    def test_csv_source_needs_a_path(self):
        """Test CSV source needs a path."""
        document = apply_overrides(TINY_CONFIG, ['dataset.source=csv'])
        with self.assertRaises(ConfigurationError) as ctx:
            ExperimentConfigLoader.validate(document)
        self.assertIn('dataset.path', ctx.exception.details)

    def test_pca_encoder_wider_than_reservoir(self):
        """Test PCA encoder wider than reservoir."""
        document = apply_overrides(TINY_CONFIG, ['architecture.encoder_size=40'])
        with self.assertRaises(ConfigurationError) as ctx:
            ExperimentConfigLoader.validate(document)
        self.assertIn('architecture.encoder_size', ctx.exception.details)

    def test_load_applies_overrides_before_validation(self):
        """Test load applies overrides before validation."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'c.json'
            path.write_text(json.dumps(TINY_CONFIG))
            config = ExperimentConfigLoader.load(path, ['architecture.depth=3'])
        self.assertEqual(config['architecture']['depth'], 3)

    def test_invalid_json(self):
        """Test invalid JSON."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'c.json'
            path.write_text('{"name": ')
            with self.assertRaises(ConfigurationError):
                ExperimentConfigLoader.load(path)

    def test_checked_in_configs_validate(self):
        """Test that every checked-in config validates."""
        paths = sorted(CONFIG_DIR.glob('*.json'))
        self.assertGreaterEqual(len(paths), 6)
        for path in paths:
            with self.subTest(config=path.name):
                config = ExperimentConfigLoader.load(path)
                self.assertEqual(config['name'], path.stem)


class FormatTableTestCase(SimpleTestCase):

    def test_columns_are_aligned(self):
        """Test columns are aligned."""
        text = format_table([{'metric': 'rmse', 'mean': 0.5}, {'metric': 'nrmse', 'mean': float('nan')}],
                            ['metric', 'mean'])
        lines = text.splitlines()
        self.assertEqual(len(lines), 4)
        self.assertTrue(lines[0].startswith('metric'))
        self.assertIn('5.0000e-01', lines[2])
        self.assertIn('nan', lines[3])
        self.assertEqual(lines[0].index('mean'), lines[2].index('5.0000e-01'))


class TrainCommandTestCase(ExperimentCommandTestCase):
    """Test cases for the train and eval commands."""

    def test_train_writes_report_models_and_provenance(self):
        """Test train writes report models and provenance."""
        output = self.run_command('train')
        self.assertIn('rmse', output)

        report = json.loads((self.output / 'report.json').read_text())
        self.assertEqual(report['failures'], 0)
        self.assertEqual(report['summary']['n_runs'], 2)
        self.assertEqual([row['seed'] for row in report['repetitions']], [3, 4])
        self.assertTrue((self.output / 'model_r00.desn').exists())
        self.assertTrue((self.output / 'model_r01.desn').exists())

        provenance = json.loads((self.output / 'resolved_config.json').read_text())
        self.assertEqual(provenance['command'], 'train')
        self.assertEqual(provenance['config']['architecture']['depth'], 2)

    def test_repetitions_differ_only_by_seed(self):
        """Test repetitions differ only by seed."""
        self.run_command('train')
        rows = json.loads((self.output / 'report.json').read_text())['repetitions']
        self.assertNotEqual(rows[0]['rmse'], rows[1]['rmse'])

    def test_depth_one_matches_standalone_esn(self):
        """Test depth one matches standalone ESN."""
        self.run_command('train', '--set', 'architecture.depth=1', '--repetitions', '1')
        report = json.loads((self.output / 'report.json').read_text())

        service = ExperimentService(ExperimentConfigLoader.load(self.config_path, ['architecture.depth=1']),
                                    output_dir=self.output)
        task = service.build_task()
        layer = service.architecture(task, 3, service.hyperparameters()).layers[0]
        inputs, targets = task.segment('train')
        esn = EchoStateNetwork(layer, washout=10).fit(inputs, targets)
        start, stop = task.split.bounds('test')
        predictions = esn.predict(task.inputs[:stop])[-(stop - start):]

        self.assertEqual(report['repetitions'][0]['rmse'], rmse(task.targets[start:stop], predictions))

    def test_numerical_failure_excludes_only_that_repetition(self):
        """Test that a LinAlgError in one repetition is recorded and the run finishes."""
        def fit_or_fail(task, config):
            if config.seed == 4:
                raise np.linalg.LinAlgError('Matrix is not positive definite')
            return fit_task(task, config)

        with mock.patch('apps.experiments.services.fit_task', side_effect=fit_or_fail):
            self.run_command('train')
        report = json.loads((self.output / 'report.json').read_text())
        self.assertEqual(report['failures'], 1)
        self.assertEqual(report['summary']['n_runs'], 1)
        self.assertEqual([row['status'] for row in report['repetitions']], ['ok', 'failed'])
        self.assertIn('LinAlgError', report['repetitions'][1]['error'])

    def test_hyperparameter_file_overrides_config(self):
        """Test hyperparameter file overrides config."""
        path = self.root / 'best.json'
        path.write_text(json.dumps({'hyperparameters': [
            {'input_scaling': 0.2, 'spectral_radius': 0.5, 'leak_rate': 0.9},
        ]}))
        self.run_command('train', '--hyperparameters', str(path), '--repetitions', '1')
        report = json.loads((self.output / 'report.json').read_text())
        self.assertEqual(report['hyperparameters'][0]['leak_rate'], 0.9)

    def test_eval_is_deterministic(self):
        """Test eval is deterministic."""
        model = self.trained_model()
        first = self.run_command('eval', '--model', str(model), '--json')
        second = self.run_command('eval', '--model', str(model), '--json')
        self.assertEqual(first, second)
        report = json.loads(first)
        self.assertEqual(report['split'], 'test')
        self.assertEqual(report['n'], 100)

    def test_eval_reproduces_the_training_report(self):
        """Test eval reproduces the training report."""
        model = self.trained_model()
        report = json.loads((self.output / 'report.json').read_text())
        scored = json.loads(self.run_command('eval', '--model', str(model), '--json'))
        self.assertEqual(scored['rmse'], report['repetitions'][0]['rmse'])

    def test_eval_on_train_split_drops_the_washout(self):
        """Test eval on train split drops the washout."""
        model = self.trained_model()
        scored = json.loads(self.run_command('eval', '--model', str(model), '--split', 'train', '--json'))
        self.assertEqual(scored['n'], 300 - 2 * 10)


class ExitCodeTestCase(ExperimentCommandTestCase):
    """Configuration errors exit with 2, runtime and file errors with 3"""

    def test_invalid_config(self):
        """Test invalid config."""
        with self.assertRaises(CommandError) as ctx:
            self.run_command('train', '--set', 'architecture.depth=0')
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG_ERROR)
        self.assertIn('architecture.depth', str(ctx.exception))

    def test_missing_hyperparameters(self):
        """Test missing hyperparameters."""
        document = {key: value for key, value in TINY_CONFIG.items() if key != 'hyperparameters'}
        path = self.write_config(document, 'nohp.json')
        with self.assertRaises(CommandError) as ctx:
            self.run_command('train', config_path=path)
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG_ERROR)

    def test_missing_model(self):
        """Test missing model."""
        with self.assertRaises(CommandError) as ctx:
            self.run_command('eval', '--model', str(self.root / 'absent.desn'))
        self.assertEqual(ctx.exception.returncode, EXIT_RUNTIME_ERROR)

    def test_corrupt_model(self):
        """Test corrupt model."""
        model = self.trained_model()
        payload = model.read_bytes()
        model.write_bytes(payload[:len(payload) // 2])
        with self.assertRaises(CommandError) as ctx:
            self.run_command('eval', '--model', str(model))
        self.assertEqual(ctx.exception.returncode, EXIT_RUNTIME_ERROR)
        self.assertIn('MODEL_FILE_CORRUPT', str(ctx.exception))

    def test_unexpected_numerical_error_exits_as_runtime_failure(self):
        """Test that a bare ValueError escaping a command maps to exit code 3."""
        with mock.patch.object(ExperimentService, 'build_task', side_effect=ValueError('array must not contain infs')):
            with self.assertRaises(CommandError) as ctx:
                self.run_command('train')
        self.assertEqual(ctx.exception.returncode, EXIT_RUNTIME_ERROR)
        self.assertIn('ValueError', str(ctx.exception))

    def test_undecodable_csv_exits_as_runtime_failure(self):
        """Test that a CSV source with invalid UTF-8 maps to exit code 3 and names the line."""
        series = self.root / 'latin.csv'
        series.write_bytes(b'1.0\n2.0\n\xe9\n')
        document = copy.deepcopy(TINY_CONFIG)
        document['dataset'] = {
            'source': 'csv', 'path': str(series), 'split': {'train': 300, 'validate': 100, 'test': 100},
        }
        with self.assertRaises(CommandError) as ctx:
            self.run_command('dataset', config_path=self.write_config(document, 'csv.json'))
        self.assertEqual(ctx.exception.returncode, EXIT_RUNTIME_ERROR)
        self.assertIn('SERIES_PARSE_ERROR', str(ctx.exception))
        self.assertIn("'line': 3", str(ctx.exception))

    def test_resume_without_checkpoint(self):
        """Test resume without checkpoint."""
        with self.assertRaises(CommandError) as ctx:
            self.run_command('optimize', '--resume')
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG_ERROR)


class OptimizeCommandTestCase(ExperimentCommandTestCase):

    def test_optimize_writes_best_and_checkpoint(self):
        """Test optimize writes best and checkpoint."""
        output = self.run_command('optimize')
        self.assertIn('layer 2', output)

        best = json.loads((self.output / 'best_hyperparameters.json').read_text())
        self.assertEqual(len(best['hyperparameters']), 2)
        self.assertEqual(len(best['genes']), 6)
        self.assertEqual(best['generations_run'], 2)
        self.assertTrue((self.output / 'ga_checkpoint.json').exists())
        self.assertTrue((self.output / 'ga_history.csv').exists())

        for layer in best['hyperparameters']:
            self.assertGreater(layer['spectral_radius'], 0.0)
            self.assertLess(layer['spectral_radius'], 1.0)

    def test_best_hyperparameters_feed_train(self):
        """Test best hyperparameters feed train."""
        self.run_command('optimize')
        layers = load_hyperparameters(self.output / 'best_hyperparameters.json')
        self.assertEqual(len(layers), 2)
        self.run_command('train', '--hyperparameters', str(self.output / 'best_hyperparameters.json'),
                         '--repetitions', '1')
        report = json.loads((self.output / 'report.json').read_text())
        self.assertEqual(report['hyperparameters'], layers)

    def test_resume_continues_the_history(self):
        """Test resume continues the history."""
        self.run_command('optimize')
        first = json.loads((self.output / 'best_hyperparameters.json').read_text())
        self.run_command('optimize', '--resume', '--set', 'optimizer.generations=3')
        resumed = json.loads((self.output / 'best_hyperparameters.json').read_text())
        self.assertEqual(resumed['generations_run'], 3)
        self.assertLessEqual(resumed['fitness'], first['fitness'])


class SweepCommandTestCase(ExperimentCommandTestCase):

    def test_depth_sweep(self):
        """Test depth sweep."""
        self.run_command('sweep', '--axis', 'depth', '--start', '2', '--stop', '3')
        table = (self.output / 'sweep_depth.csv').read_text().splitlines()
        self.assertEqual(table[0].split(',')[:3], ['depth', 'status', 'rmse'])
        self.assertEqual(len(table), 3)
        self.assertTrue(table[1].startswith('2,ok'))
        self.assertTrue(table[2].startswith('3,ok'))

    def test_failed_points_are_reported_not_fatal(self):
        """Test failed points are reported not fatal."""
        output = self.run_command('sweep', '--axis', 'encoder_size', '--start', '20', '--stop', '40', '--step', '20')
        self.assertIn('1 grid point(s) failed', output)
        table = (self.output / 'sweep_encoder_size.csv').read_text()
        self.assertIn('failed', table)


class DiagnoseCommandTestCase(ExperimentCommandTestCase):

    def test_every_kind_writes_a_csv(self):
        """Test every kind writes a CSV."""
        model = self.trained_model()
        for kind in ('condition', 'esp', 'perturbation', 'convergence'):
            with self.subTest(kind=kind):
                self.run_command('diagnose', '--model', str(model), '--kind', kind)
                path = self.output / f'{kind}.csv'
                self.assertTrue(path.exists())
                self.assertGreater(len(path.read_text().splitlines()), 1)

    def test_condition_rows_follow_the_stack(self):
        """Test condition rows follow the stack."""
        model = self.trained_model()
        self.run_command('diagnose', '--model', str(model), '--kind', 'condition')
        rows = (self.output / 'condition.csv').read_text().splitlines()
        self.assertEqual([row.split(',')[0] for row in rows[1:]], ['R1', 'E1', 'R2'])


class DatasetCommandTestCase(ExperimentCommandTestCase):

    def test_dataset_export(self):
        """Test dataset export."""
        self.run_command('dataset')
        series = (self.output / 'narma10.csv').read_text().splitlines()
        meta = json.loads((self.output / 'narma10.meta.json').read_text())
        task = (self.output / 'task.csv').read_text().splitlines()

        self.assertEqual(meta['seed'], 3)
        self.assertEqual(meta['length'], len(series) - 1)
        self.assertEqual(task[0], 'input,target,split')
        self.assertEqual(len(task), 501)
        self.assertTrue(task[1].endswith(',train'))
        self.assertTrue(task[-1].endswith(',test'))

    def test_export_is_reproducible(self):
        """Test export is reproducible."""
        self.run_command('dataset')
        first = (self.output / 'task.csv').read_bytes()
        self.run_command('dataset')
        self.assertEqual(first, (self.output / 'task.csv').read_bytes())


@unittest.skipUnless(RUN_SLOW, 'set DEEP_ESN_RUN_SLOW=true to run the full-size experiments')
class AcceptanceTestCase(SimpleTestCase):
    """Full-size runs over the checked-in configs"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def service(self, name, *overrides):
        config = ExperimentConfigLoader.load(CONFIG_DIR / f'{name}.json', list(overrides))
        return ExperimentService(config, output_dir=Path(self.tmp.name) / name)

    def mean(self, name, metric, *overrides):
        return self.service(name, *overrides).train()['summary'][f'{metric}_mean']

    def test_mackey_glass_deep_stack_beats_single_reservoir(self):
        """Test Mackey-Glass deep stack beats single reservoir."""
        deep = self.mean('mgs84', 'rmse')
        shallow = self.mean('esn_mgs84', 'rmse')
        self.assertLessEqual(deep, 5e-3)
        self.assertLessEqual(5 * deep, shallow)

    def test_feature_links_help(self):
        """Test feature links help."""
        with_links = self.mean('mgs84', 'rmse')
        without_links = self.mean('mgs84', 'rmse', 'architecture.feature_links=false')
        self.assertLess(with_links, without_links)

    def test_narma_deep_stack_beats_single_reservoir(self):
        """Test NARMA deep stack beats single reservoir."""
        deep = self.mean('narma10', 'nrmse')
        shallow = self.mean('narma10', 'nrmse', 'architecture.depth=1')
        self.assertLessEqual(deep, 0.16)
        self.assertLess(deep, shallow)

    @unittest.skipUnless((Path(settings.BASE_DIR) / 'data' / 'SN_ms_tot_V2.0.csv').exists(), 'sunspot data missing')
    def test_sunspot_deep_stack_not_worse(self):
        """Test sunspot deep stack not worse."""
        deep = self.mean('sunspot', 'rmse')
        shallow = self.mean('sunspot', 'rmse', 'architecture.depth=1')
        self.assertLessEqual(deep, shallow)

    def test_depth_trend(self):
        """Test that depth helps on Mackey-Glass and a shallow stack wins on NARMA."""
        table = self.service('mgs84', 'run.repetitions=1').sweep('depth', 2, 8, 6)
        by_depth = dict(zip(table['depth'], table['rmse']))
        self.assertLess(by_depth[8], by_depth[2])

        table = self.service('narma10', 'run.repetitions=1').sweep('depth', 1, 8, 1)
        best = int(table.loc[table['rmse'].idxmin(), 'depth'])
        self.assertIn(best, (2, 3, 4))

    def test_encoders_are_better_conditioned_than_reservoirs(self):
        """Test encoders are better conditioned than reservoirs."""
        service = self.service('mgs84', 'run.repetitions=1')
        service.train()
        model = ModelStore.load(service.output_dir / 'model_r00.desn')
        service.diagnose(service.output_dir / 'model_r00.desn', 'condition')
        task = service.build_task()
        conds = condition_analysis(model, task.segment('train')[0]).by_label()
        depth = model.config.depth
        for j in range(1, depth):
            self.assertLess(conds[f'E{j}'], conds[f'R{j}'])
        reservoirs = [conds[f'R{j}'] for j in range(1, depth + 1)]
        self.assertEqual(np.argmax(reservoirs), 0)
