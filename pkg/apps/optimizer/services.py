"""
Genetic search over the cascaded per-layer (IS, SR, γ) genome, with
validation RMSE as fitness, and one-axis grid sweeps
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from django.conf import settings

from apps.datasets.services import SeriesTask
from apps.encoders.services import EncoderKind
from apps.shared.exceptions import RECOVERABLE_ERRORS, ConfigurationError, describe_error
from apps.stack.services import DeepEsnConfig, deepen
from apps.stack.training import evaluate_split, fit_task
from deep_esn.utils.file_io import AtomicFileWriter

logger = logging.getLogger(__name__)

GENES_PER_LAYER = 3

GA_PROFILES = {
    'full': {'population': 40, 'generations': 80},
    'desk': {'population': 10, 'generations': 10},
}

# (start, stop, step), stop inclusive
SWEEP_AXES = {
    'depth': (2, 8, 1),
    'encoder_size': (10, 300, 10),
    'reservoir_size': (100, 1000, 100),
}

FitnessFunction = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class GaConfig:
    population: int = 40
    generations: int = 80
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.1
    elitism: int = 2
    tournament_size: int = 3
    seed: int = 0

    def __post_init__(self):
        errors = {}
        if self.population < 1:
            errors['population'] = 'must be at least 1'
        if self.generations < 1:
            errors['generations'] = 'must be at least 1'
        if not 0.0 <= self.crossover_rate <= 1.0:
            errors['crossover_rate'] = 'must lie in [0, 1]'
        if not 0.0 <= self.mutation_rate <= 1.0:
            errors['mutation_rate'] = 'must lie in [0, 1]'
        if self.mutation_sigma <= 0.0:
            errors['mutation_sigma'] = 'must be positive'
        if not 0 <= self.elitism <= self.population:
            errors['elitism'] = 'must lie in [0, population]'
        if self.tournament_size < 1:
            errors['tournament_size'] = 'must be at least 1'
        if errors:
            raise ConfigurationError('invalid GA configuration', details=errors)

    @classmethod
    def profile(cls, name: str, **overrides) -> 'GaConfig':
        if name not in GA_PROFILES:
            raise ConfigurationError(f"unknown GA profile '{name}'", details={'profile': sorted(GA_PROFILES)})
        values = dict(GA_PROFILES[name])
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'population': self.population,
            'generations': self.generations,
            'crossover_rate': self.crossover_rate,
            'mutation_rate': self.mutation_rate,
            'mutation_sigma': self.mutation_sigma,
            'elitism': self.elitism,
            'tournament_size': self.tournament_size,
            'seed': self.seed,
        }


@dataclass
class Individual:
    genes: np.ndarray
    fitness: float = math.inf

    def to_dict(self) -> Dict[str, Any]:
        return {'genes': self.genes.tolist(), 'fitness': self.fitness}


@dataclass
class GaResult:
    best: Individual
    history: List[Dict[str, float]] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def generations_run(self) -> int:
        return len(self.history)


def apply_genes(template: DeepEsnConfig, genes: Sequence[float]) -> DeepEsnConfig:
    """
    Map a [0,1]^{3K} genome onto the template's layers: IS as is, SR into
    (ε, 1−ε), γ floored at ε
    """
    genes = np.asarray(genes, dtype=np.float64)
    if genes.shape != (GENES_PER_LAYER * template.depth,):
        raise ConfigurationError(f"expected {GENES_PER_LAYER * template.depth} genes, got {genes.size}")
    epsilon = settings.DEEP_ESN['SPECTRAL_RADIUS_EPSILON']
    genes = np.clip(genes, 0.0, 1.0)
    hyperparameters = []
    for i in range(template.depth):
        input_scaling, radius, leak = genes[GENES_PER_LAYER * i:GENES_PER_LAYER * (i + 1)]
        hyperparameters.append({
            'input_scaling': float(input_scaling),
            'spectral_radius': float(epsilon + radius * (1.0 - 2.0 * epsilon)),
            'leak_rate': float(max(leak, epsilon)),
        })
    return template.with_hyperparameters(hyperparameters)


def validation_fitness(task: SeriesTask, template: DeepEsnConfig) -> FitnessFunction:
    """Validation RMSE of a model trained on the training split with the individual's hyperparameters"""
    if task.split.validate < 1:
        raise ConfigurationError('the GA needs a nonempty validation split')

    def fitness(genes: np.ndarray) -> float:
        model = fit_task(task, apply_genes(template, genes))
        return evaluate_split(model, task, 'validate').rmse

    return fitness


class GeneticOptimizer:
    """Tournament selection, uniform crossover, clamped Gaussian mutation and elitism"""

    def __init__(self, fitness: FitnessFunction, gene_count: int, ga: GaConfig,
                 max_workers: Optional[int] = None, checkpoint_path: Optional[Path] = None):
        if gene_count < 1:
            raise ConfigurationError('gene_count must be at least 1')
        self.fitness = fitness
        self.gene_count = gene_count
        self.ga = ga
        self.max_workers = max_workers or settings.DEEP_ESN['MAX_WORKERS']
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.rng = np.random.default_rng(ga.seed)
        self.population = None
        self.scores = None
        self.history: List[Dict[str, float]] = []

    def _score(self, genes: np.ndarray) -> float:
        try:
            value = float(self.fitness(genes))
        except RECOVERABLE_ERRORS as e:
            logger.warning(f"Individual failed ({str(e)}); fitness set to +inf")
            return math.inf
        return value if math.isfinite(value) else math.inf

    def evaluate(self, population: np.ndarray) -> np.ndarray:
        """Fitness per row, collected in row order whatever the worker count"""
        if self.max_workers > 1 and len(population) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                scores = list(executor.map(self._score, population))
        else:
            scores = [self._score(genes) for genes in population]
        return np.array(scores, dtype=np.float64)

    def _tournament(self) -> np.ndarray:
        contenders = self.rng.integers(0, len(self.population), size=self.ga.tournament_size)
        winner = contenders[np.argmin(self.scores[contenders])]
        return self.population[winner]

    def _offspring(self) -> np.ndarray:
        first = self._tournament()
        second = self._tournament()
        if self.rng.random() < self.ga.crossover_rate:
            child = np.where(self.rng.random(self.gene_count) < 0.5, first, second)
        else:
            child = first.copy()
        mutate = self.rng.random(self.gene_count) < self.ga.mutation_rate
        child[mutate] += self.rng.normal(0.0, self.ga.mutation_sigma, size=int(mutate.sum()))
        return np.clip(child, 0.0, 1.0)

    def _record(self) -> None:
        finite = self.scores[np.isfinite(self.scores)]
        entry = {
            'generation': len(self.history),
            'best_fitness': float(self.scores.min()),
            'mean_fitness': float(finite.mean()) if finite.size else math.inf,
            'failed': int(self.scores.size - finite.size),
        }
        self.history.append(entry)
        logger.info(
            f"Generation {entry['generation']}: best={entry['best_fitness']:.6e} mean={entry['mean_fitness']:.6e}"
        )

    def _stagnated(self) -> bool:
        window = settings.DEEP_ESN['GA_STAGNATION_GENERATIONS']
        if len(self.history) <= window:
            return False
        improvement = self.history[-1 - window]['best_fitness'] - self.history[-1]['best_fitness']
        return improvement < settings.DEEP_ESN['GA_STAGNATION_TOLERANCE']

    def best(self) -> Individual:
        index = int(np.argmin(self.scores))
        return Individual(genes=self.population[index].copy(), fitness=float(self.scores[index]))

    def checkpoint(self) -> Dict[str, Any]:
        best = self.best()
        return {
            'generation': len(self.history) - 1,
            'gene_count': self.gene_count,
            'ga': self.ga.to_dict(),
            'population': self.population.tolist(),
            'fitness': self.scores.tolist(),
            'rng_state': self.rng.bit_generator.state,
            'best_genes': best.genes.tolist(),
            'best_fitness': best.fitness,
            'history': self.history,
        }

    def restore(self, state: Dict[str, Any]) -> None:
        if state.get('gene_count') != self.gene_count:
            raise ConfigurationError(
                f"checkpoint has {state.get('gene_count')} genes, the search needs {self.gene_count}"
            )
        self.population = np.array(state['population'], dtype=np.float64)
        self.scores = np.array([math.inf if v is None else v for v in state['fitness']], dtype=np.float64)
        self.rng.bit_generator.state = state['rng_state']
        self.history = [
            {**entry, 'best_fitness': math.inf if entry['best_fitness'] is None else entry['best_fitness'],
             'mean_fitness': math.inf if entry['mean_fitness'] is None else entry['mean_fitness']}
            for entry in state['history']
        ]
        logger.info(f"Resumed GA after generation {state['generation']}")

    def _save_checkpoint(self) -> None:
        if self.checkpoint_path is not None:
            AtomicFileWriter.write_json(self.checkpoint_path, self.checkpoint())

    def run(self, resume: Optional[Dict[str, Any]] = None) -> GaResult:
        if resume is not None:
            self.restore(resume)
        else:
            self.population = self.rng.uniform(0.0, 1.0, size=(self.ga.population, self.gene_count))
            self.scores = self.evaluate(self.population)
            self._record()
            self._save_checkpoint()

        stopped_early = False
        elites = self.ga.elitism
        while len(self.history) < self.ga.generations:
            if self._stagnated():
                stopped_early = True
                logger.info(f"Best fitness stagnated; stopping after {len(self.history)} generations")
                break
            order = np.argsort(self.scores, kind='stable')
            elite_genes = self.population[order[:elites]].copy()
            elite_scores = self.scores[order[:elites]].copy()
            children = np.array([self._offspring() for _ in range(self.ga.population - elites)])
            children = children.reshape(-1, self.gene_count)
            child_scores = self.evaluate(children)
            self.population = np.vstack([elite_genes, children])
            self.scores = np.concatenate([elite_scores, child_scores])
            self._record()
            self._save_checkpoint()

        return GaResult(best=self.best(), history=list(self.history), stopped_early=stopped_early)


def evolve(
    ga: GaConfig,
    task: Optional[SeriesTask] = None,
    template: Optional[DeepEsnConfig] = None,
    fitness: Optional[FitnessFunction] = None,
    gene_count: Optional[int] = None,
    checkpoint_path: Optional[Path] = None,
    resume_from: Optional[Path] = None,
    max_workers: Optional[int] = None,
) -> GaResult:
    """Run a search on a task and architecture template, or on an injected fitness function"""
    if fitness is None:
        if task is None or template is None:
            raise ConfigurationError('evolve needs either a fitness function or a task and template')
        fitness = validation_fitness(task, template)
    if gene_count is None:
        if template is None:
            raise ConfigurationError('gene_count is required with an injected fitness function')
        gene_count = GENES_PER_LAYER * template.depth

    optimizer = GeneticOptimizer(fitness, gene_count, ga, max_workers=max_workers, checkpoint_path=checkpoint_path)
    resume = None
    if resume_from is not None:
        try:
            resume = json.loads(Path(resume_from).read_text())
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"checkpoint {resume_from} is not valid JSON: {str(e)}") from e
    result = optimizer.run(resume)
    logger.info(f"GA finished after {result.generations_run} generations, best fitness {result.best.fitness:.6e}")
    return result


def sweep_grid(axis: str, start: Optional[int] = None, stop: Optional[int] = None,
               step: Optional[int] = None) -> List[int]:
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis '{axis}'", details={'axis': sorted(SWEEP_AXES)})
    default_start, default_stop, default_step = SWEEP_AXES[axis]
    start = default_start if start is None else start
    stop = default_stop if stop is None else stop
    step = default_step if step is None else step
    if step < 1 or start < 1 or stop < start:
        raise ConfigurationError('sweep range must satisfy 1 <= start <= stop and step >= 1',
                                 details={'start': start, 'stop': stop, 'step': step})
    return list(range(start, stop + 1, step))


def resize_encoders(config: DeepEsnConfig, size: int) -> DeepEsnConfig:
    """Every encoder emits `size` features; downstream reservoirs follow"""
    if any(spec.kind is EncoderKind.IDENTITY for spec in config.encoders):
        raise ConfigurationError('identity encoders cannot be resized')
    encoders = tuple(replace(spec, output_dim=size) for spec in config.encoders)
    layers = (config.layers[0],) + tuple(replace(p, input_dim=size) for p in config.layers[1:])
    return replace(config, layers=layers, encoders=encoders)


def resize_reservoirs(config: DeepEsnConfig, size: int) -> DeepEsnConfig:
    """Every reservoir gets `size` units; identity encoders keep matching widths"""
    layers = [replace(p, size=size) for p in config.layers]
    encoders = []
    for j, spec in enumerate(config.encoders):
        if spec.kind is EncoderKind.IDENTITY:
            encoders.append(replace(spec, input_dim=size, output_dim=size))
            layers[j + 1] = replace(layers[j + 1], input_dim=size)
        else:
            encoders.append(replace(spec, input_dim=size))
    return replace(config, layers=tuple(layers), encoders=tuple(encoders))


AXIS_BUILDERS = {
    'depth': deepen,
    'encoder_size': resize_encoders,
    'reservoir_size': resize_reservoirs,
}


def _sweep_point(task: SeriesTask, base: DeepEsnConfig, axis: str, value: int, split: str) -> Dict[str, Any]:
    row = {axis: value, 'status': 'ok', 'rmse': None, 'nrmse': None, 'mape': None, 'n': None, 'error': ''}
    try:
        config = AXIS_BUILDERS[axis](base, value)
        model = fit_task(task, config)
        report = evaluate_split(model, task, split)
    except RECOVERABLE_ERRORS as e:
        logger.warning(f"Sweep point {axis}={value} failed: {describe_error(e)}")
        row.update(status='failed', error=describe_error(e))
        return row
    row.update(report.to_dict())
    row.pop('offset_applied', None)
    logger.info(f"Sweep point {axis}={value}: rmse={report.rmse:.4e}")
    return row


def sweep(task: SeriesTask, base: DeepEsnConfig, axis: str, values: Optional[Sequence[int]] = None,
          split: str = 'test', max_workers: Optional[int] = None) -> pd.DataFrame:
    """One trained and scored model per grid point; failed points are kept as rows"""
    values = sweep_grid(axis) if values is None else list(values)
    workers = max_workers or settings.DEEP_ESN['MAX_WORKERS']

    def run(value):
        return _sweep_point(task, base, axis, value, split)

    if workers > 1 and len(values) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(run, values))
    else:
        rows = [run(value) for value in values]
    return pd.DataFrame(rows, columns=[axis, 'status', 'rmse', 'nrmse', 'mape', 'n', 'error'])
