"""
Experiment orchestration: config loading with dotted overrides, repeated
training runs, evaluation, hyperparameter search, sweeps and diagnostics
"""
import copy
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
from django.conf import settings

from apps.datasets.services import DatasetService, SeriesTask, export_csv
from apps.diagnostics.services import (
    check_esp,
    condition_analysis,
    perturbation_trace,
    state_convergence,
    write_condition_csv,
    write_convergence_csv,
    write_esp_csv,
    write_trace_csv,
)
from apps.metrics.services import METRIC_NAMES, MetricReport, aggregate
from apps.optimizer.services import GaConfig, apply_genes, evolve, sweep, sweep_grid
from apps.shared.exceptions import RECOVERABLE_ERRORS, ConfigurationError, describe_error
from apps.stack.model_store import ModelStore
from apps.stack.services import DeepEsnConfig
from apps.stack.training import evaluate_split, fit_task
from deep_esn.utils.file_io import AtomicFileWriter, OutputDirectory

from .serializers import DIAGNOSTIC_KINDS, ExperimentConfigSerializer, HyperparameterSerializer

logger = logging.getLogger(__name__)

OPTIONAL_SECTIONS = ('optimizer', 'sweep', 'diagnostics', 'run', 'output')

# Starting point for the GA template when a config fixes no hyperparameters
NEUTRAL_HYPERPARAMETERS = [{'input_scaling': 0.5, 'spectral_radius': 0.5, 'leak_rate': 0.5}]


def parse_override(assignment: str):
    """'a.b.c=value' -> (['a', 'b', 'c'], value); values are JSON when they parse as JSON"""
    if '=' not in assignment:
        raise ConfigurationError(f"override '{assignment}' is not of the form key.path=value")
    path, raw = assignment.split('=', 1)
    keys = [key for key in path.strip().split('.') if key]
    if not keys:
        raise ConfigurationError(f"override '{assignment}' has an empty key path")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return keys, value


def apply_overrides(document: Dict[str, Any], assignments: Iterable[str]) -> Dict[str, Any]:
    result = copy.deepcopy(document)
    for assignment in assignments or ():
        keys, value = parse_override(assignment)
        node = result
        for position, key in enumerate(keys[:-1]):
            if isinstance(node, list):
                try:
                    node = node[int(key)]
                except (ValueError, IndexError) as e:
                    raise ConfigurationError(f"override path '{'.'.join(keys[:position + 1])}' is invalid") from e
                continue
            node = node.setdefault(key, {})
        if isinstance(node, list):
            try:
                node[int(keys[-1])] = value
            except (ValueError, IndexError) as e:
                raise ConfigurationError(f"override path '{'.'.join(keys)}' is invalid") from e
        else:
            node[keys[-1]] = value
    return result


def flatten_errors(errors, prefix: str = '') -> Dict[str, str]:
    """Serializer error tree -> {'dotted.path': 'message; message'}"""
    flat = {}
    if isinstance(errors, dict):
        for key, value in errors.items():
            name = prefix if key == 'non_field_errors' else (f'{prefix}.{key}' if prefix else str(key))
            flat.update(flatten_errors(value, name))
    elif isinstance(errors, list):
        if errors and all(isinstance(item, str) for item in errors):
            flat[prefix or 'config'] = '; '.join(str(item) for item in errors)
        else:
            for index, item in enumerate(errors):
                if item:
                    flat.update(flatten_errors(item, f'{prefix}.{index}' if prefix else str(index)))
    else:
        flat[prefix or 'config'] = str(errors)
    return flat


class ExperimentConfigLoader:
    """Read, override and validate experiment config documents"""

    @staticmethod
    def validate(document: Dict[str, Any]) -> Dict[str, Any]:
        if not isinstance(document, dict):
            raise ConfigurationError('experiment config must be a JSON object')
        document = copy.deepcopy(document)
        for section in OPTIONAL_SECTIONS:
            document.setdefault(section, {})
        serializer = ExperimentConfigSerializer(data=document)
        if not serializer.is_valid():
            details = flatten_errors(serializer.errors)
            raise ConfigurationError(f"experiment config has {len(details)} invalid field(s)", details=details)
        # plain dicts and lists from here on
        return json.loads(json.dumps(serializer.validated_data))

    @staticmethod
    def load(path, overrides: Optional[Iterable[str]] = None) -> Dict[str, Any]:
        try:
            document = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path} is not valid JSON: {str(e)}") from e
        config = ExperimentConfigLoader.validate(apply_overrides(document, overrides))
        logger.debug(f"Loaded experiment config '{config['name']}' from {path}")
        return config


def load_hyperparameters(path) -> List[Dict[str, float]]:
    """Per-layer hyperparameters from a best_hyperparameters.json or a bare list"""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path} is not valid JSON: {str(e)}") from e
    layers = data.get('hyperparameters') if isinstance(data, dict) else data
    if not isinstance(layers, list) or not layers:
        raise ConfigurationError(f"{path} holds no list of hyperparameters")
    serializer = HyperparameterSerializer(data=layers, many=True)
    if not serializer.is_valid():
        raise ConfigurationError(
            f"invalid hyperparameter file {path}", details=flatten_errors(serializer.errors, 'hyperparameters')
        )
    return json.loads(json.dumps(serializer.validated_data))


def format_table(rows: List[Dict[str, Any]], columns: List[str]) -> str:
    """Fixed-width text table for terminal output"""
    def cell(value):
        if isinstance(value, float):
            return 'nan' if math.isnan(value) else f'{value:.4e}'
        return '' if value is None else str(value)

    cells = [[cell(row.get(column)) for column in columns] for row in rows]
    widths = [max([len(column)] + [len(line[i]) for line in cells]) for i, column in enumerate(columns)]
    lines = ['  '.join(column.ljust(widths[i]) for i, column in enumerate(columns))]
    lines.append('  '.join('-' * width for width in widths))
    lines.extend('  '.join(value.ljust(widths[i]) for i, value in enumerate(line)) for line in cells)
    return '\n'.join(lines)


class ExperimentService:
    """Run the commands of one validated experiment config"""

    def __init__(self, config: Dict[str, Any], output_dir=None, max_workers: Optional[int] = None):
        self.config = config
        directory = output_dir or config.get('output', {}).get('directory')
        self.output_dir = OutputDirectory.resolve(directory)
        self.max_workers = max_workers or settings.DEEP_ESN['MAX_WORKERS']

    @property
    def base_seed(self) -> int:
        return self.config['run']['base_seed']

    def build_task(self) -> SeriesTask:
        """The dataset is drawn once from the base seed and shared by every repetition"""
        return DatasetService.build_task(self.config['dataset'], seed=self.base_seed)

    def hyperparameters(self, override: Optional[List[Dict[str, float]]] = None, required: bool = True):
        layers = override or self.config.get('hyperparameters')
        if not layers:
            if required:
                raise ConfigurationError(
                    'no hyperparameters: add a "hyperparameters" section or pass --hyperparameters',
                    details={'hyperparameters': 'required for this command'},
                )
            return NEUTRAL_HYPERPARAMETERS
        return layers

    def architecture(self, task: SeriesTask, seed: int, hyperparameters) -> DeepEsnConfig:
        arch = self.config['architecture']
        return DeepEsnConfig.build(
            input_dim=task.input_dim,
            depth=arch['depth'],
            hyperparameters=hyperparameters,
            reservoir_size=arch['reservoir_size'],
            encoder_kind=arch['encoder'],
            encoder_size=arch['encoder_size'],
            sparsity=arch['sparsity'],
            seed=seed,
            feature_links=arch['feature_links'],
            direct_input=arch['direct_input'],
            ridge_beta=arch.get('ridge_beta'),
            washout=arch['washout'],
            encoder_regularization=arch.get('encoder_regularization'),
        )

    def _provenance(self, command: str) -> None:
        OutputDirectory.write_provenance(self.output_dir, self.config, command)

    def export_dataset(self) -> Dict[str, Path]:
        spec = self.config['dataset']
        columns = DatasetService.generate(spec, seed=self.base_seed)
        metadata = {
            'name': self.config['name'],
            'source': spec['source'],
            'params': spec.get('params') or {},
            'length': len(next(iter(columns.values()))),
            'seed': self.base_seed,
        }
        csv_path, meta_path = export_csv(self.output_dir / f"{spec.get('name', spec['source'])}.csv", columns, metadata)
        task = self.build_task()
        frame = pd.DataFrame({
            'input': task.inputs[:, 0],
            'target': task.targets[:, 0],
            'split': np.repeat(['train', 'validate', 'test'],
                               [task.split.train, task.split.validate, task.split.test]),
        })
        task_path = AtomicFileWriter.write_csv(self.output_dir / 'task.csv', frame)
        self._provenance('dataset')
        return {'series': csv_path, 'metadata': meta_path, 'task': task_path}

    def _repetition(self, task: SeriesTask, repetition: int, hyperparameters) -> Dict[str, Any]:
        seed = self.base_seed + repetition
        split = self.config['run']['evaluate_split']
        row = {'repetition': repetition, 'seed': seed, 'status': 'ok', 'error': ''}
        try:
            model = fit_task(task, self.architecture(task, seed, hyperparameters))
            report = evaluate_split(model, task, split)
            model_path = ModelStore.save(model, self.output_dir / f'model_r{repetition:02d}.desn')
        except RECOVERABLE_ERRORS as e:
            logger.warning(f"Repetition {repetition} (seed {seed}) failed and is excluded: {describe_error(e)}")
            row.update(status='failed', error=describe_error(e))
            return row
        row.update(report.to_dict())
        row['model'] = model_path.name
        logger.info(f"Repetition {repetition} (seed {seed}): rmse={report.rmse:.4e}")
        return row

    def train(self, hyperparameters: Optional[List[Dict[str, float]]] = None) -> Dict[str, Any]:
        """R independent repetitions with seeds base_seed + r; failures are excluded from the aggregate"""
        layers = self.hyperparameters(hyperparameters)
        task = self.build_task()
        repetitions = range(self.config['run']['repetitions'])

        if self.max_workers > 1 and len(repetitions) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                rows = list(executor.map(lambda r: self._repetition(task, r, layers), repetitions))
        else:
            rows = [self._repetition(task, r, layers) for r in repetitions]

        succeeded = [
            MetricReport(**{key: row[key] for key in ('rmse', 'nrmse', 'mape', 'n', 'offset_applied')})
            for row in rows if row['status'] == 'ok'
        ]
        failures = [row for row in rows if row['status'] != 'ok']
        report = {
            'name': self.config['name'],
            'split': self.config['run']['evaluate_split'],
            'hyperparameters': layers,
            'repetitions': rows,
            'failures': len(failures),
            'summary': aggregate(succeeded),
        }
        if failures:
            logger.warning(f"{len(failures)} of {len(rows)} repetitions failed")
        AtomicFileWriter.write_json(self.output_dir / 'report.json', report)
        self._provenance('train')
        return report

    def evaluate(self, model_path, split: Optional[str] = None) -> Dict[str, Any]:
        model = ModelStore.load(model_path)
        task = self.build_task()
        split = split or self.config['run']['evaluate_split']
        report = evaluate_split(model, task, split)
        return {'model': str(model_path), 'split': split, **report.to_dict()}

    def ga_config(self) -> GaConfig:
        section = dict(self.config['optimizer'])
        profile = section.pop('profile', 'desk')
        section.setdefault('seed', self.base_seed)
        return GaConfig.profile(profile, **section)

    def optimize(self, resume: bool = False) -> Dict[str, Any]:
        task = self.build_task()
        template = self.architecture(task, self.base_seed, self.hyperparameters(required=False))
        checkpoint = self.output_dir / 'ga_checkpoint.json'
        if resume and not checkpoint.exists():
            raise ConfigurationError(f"no checkpoint to resume at {checkpoint}")

        ga = self.ga_config()
        result = evolve(
            ga,
            task=task,
            template=template,
            checkpoint_path=checkpoint,
            resume_from=checkpoint if resume else None,
            max_workers=self.max_workers,
        )
        best_config = apply_genes(template, result.best.genes)
        AtomicFileWriter.write_csv(self.output_dir / 'ga_history.csv', pd.DataFrame(result.history))
        best = {
            'name': self.config['name'],
            'fitness': result.best.fitness,
            'genes': result.best.genes.tolist(),
            'hyperparameters': best_config.hyperparameters,
            'generations_run': result.generations_run,
            'stopped_early': result.stopped_early,
            'ga': ga.to_dict(),
        }
        AtomicFileWriter.write_json(self.output_dir / 'best_hyperparameters.json', best)
        self._provenance('optimize')
        return best

    def sweep(self, axis: Optional[str] = None, start: Optional[int] = None, stop: Optional[int] = None,
              step: Optional[int] = None, hyperparameters=None) -> pd.DataFrame:
        section = self.config['sweep']
        axis = axis or section['axis']
        values = sweep_grid(
            axis,
            start if start is not None else section.get('start'),
            stop if stop is not None else section.get('stop'),
            step if step is not None else section.get('step'),
        )
        task = self.build_task()
        base = self.architecture(task, self.base_seed, self.hyperparameters(hyperparameters))
        table = sweep(task, base, axis, values=values, split=section['split'], max_workers=self.max_workers)
        AtomicFileWriter.write_csv(self.output_dir / f'sweep_{axis}.csv', table)
        self._provenance('sweep')
        return table

    def diagnose(self, model_path, kind: str) -> Path:
        if kind not in DIAGNOSTIC_KINDS:
            raise ConfigurationError(f"unknown diagnostic '{kind}'", details={'kind': list(DIAGNOSTIC_KINDS)})
        model = ModelStore.load(model_path)
        task = self.build_task()
        section = self.config['diagnostics']
        path = self.output_dir / f'{kind}.csv'

        if kind == 'condition':
            inputs, _ = task.segment('train')
            write_condition_csv(condition_analysis(model, inputs), path)
        elif kind == 'esp':
            write_esp_csv(check_esp(model), path)
        elif kind == 'perturbation':
            trace = perturbation_trace(
                model,
                task.inputs,
                perturb_step=section['perturb_step'],
                magnitude=section.get('magnitude'),
                horizon=section['horizon'],
            )
            write_trace_csv(trace, path, full=section['full_trace'])
        else:
            inputs, _ = task.segment('train')
            write_convergence_csv(state_convergence(model, inputs, seed=self.base_seed), path)

        self._provenance(f'diagnose {kind}')
        return path


def summary_rows(report: Dict[str, Any]) -> List[Dict[str, Any]]:
    summary = report['summary']
    return [
        {'metric': name, 'mean': summary[f'{name}_mean'], 'std': summary[f'{name}_std'], 'runs': summary['n_runs']}
        for name in METRIC_NAMES
    ]
