"""
Condition numbers of layer state matrices, echo-state-property checks and
perturbation traces of a trained Deep-ESN
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from django.conf import settings
from scipy import linalg

from apps.reservoir.services import ReservoirLayer
from apps.shared.exceptions import ConfigurationError, DimensionMismatchError
from apps.shared.linalg import as_matrix
from apps.stack.services import DeepEsnModel, EchoStateNetwork, derive_seed
from deep_esn.utils.file_io import AtomicFileWriter

logger = logging.getLogger(__name__)

SEED_ROLE_REFERENCE = 2
REFERENCE_LABEL = 'ESN'


def reservoir_label(index: int) -> str:
    return f'R{index + 1}'


def encoder_label(index: int) -> str:
    return f'E{index + 1}'


def condition_number(matrix: np.ndarray) -> float:
    """σ_max/σ_min, +inf when σ_min falls below the cut-off relative to σ_max"""
    values = np.asarray(matrix, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise DimensionMismatchError(f"condition number needs a nonempty 2-D matrix, got shape {values.shape}")
    singular = linalg.svdvals(values)
    sigma_max = float(singular[0])
    sigma_min = float(singular[-1])
    if sigma_max == 0.0 or sigma_min < settings.DEEP_ESN['CONDITION_CUTOFF'] * sigma_max:
        return math.inf
    return sigma_max / sigma_min


@dataclass(frozen=True)
class ConditionEntry:
    label: str
    cond: float
    sigma_max: float
    sigma_min: float

    @property
    def log10(self) -> float:
        return math.inf if math.isinf(self.cond) else math.log10(self.cond)


@dataclass(frozen=True)
class CondReport:
    entries: List[ConditionEntry]

    def by_label(self) -> Dict[str, float]:
        return {entry.label: entry.cond for entry in self.entries}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{'layer': e.label, 'cond': e.cond, 'log10_cond': e.log10} for e in self.entries],
            columns=['layer', 'cond', 'log10_cond'],
        )


def _entry(label: str, matrix: np.ndarray) -> ConditionEntry:
    singular = linalg.svdvals(matrix)
    return ConditionEntry(label=label, cond=condition_number(matrix),
                          sigma_max=float(singular[0]), sigma_min=float(singular[-1]))


def condition_analysis(model: DeepEsnModel, inputs: np.ndarray, washout: Optional[int] = None) -> CondReport:
    """Condition number of each reservoir's retained states and each encoder's outputs, in order R1, E1, …, RK"""
    forward = model.collect(inputs, washout)
    entries = []
    for i, states in enumerate(forward.reservoir_states):
        if states.shape[0] == 0:
            raise DimensionMismatchError(f"reservoir {i + 1} retained no states")
        entries.append(_entry(reservoir_label(i), states))
        if i < len(forward.encoder_outputs):
            entries.append(_entry(encoder_label(i), forward.encoder_outputs[i]))
    report = CondReport(entries)
    logger.info('Condition numbers: ' + ', '.join(f"{e.label}={e.cond:.3e}" for e in entries))
    return report


@dataclass(frozen=True)
class LayerStability:
    label: str
    max_singular_value: float
    spectral_radius: float

    @property
    def satisfies(self) -> bool:
        """Sufficient condition σ̄ < 1"""
        return self.max_singular_value < 1.0

    @property
    def necessary(self) -> bool:
        return self.spectral_radius < 1.0

    def to_dict(self) -> Dict[str, object]:
        return {
            'layer': self.label,
            'max_singular_value': self.max_singular_value,
            'spectral_radius': self.spectral_radius,
            'sufficient': self.satisfies,
            'necessary': self.necessary,
        }


def check_esp(model) -> List[LayerStability]:
    """σ̄(W_res) and ρ(W_res) per layer; accepts a model or a list of layers"""
    layers: Sequence[ReservoirLayer] = model.reservoirs if isinstance(model, DeepEsnModel) else model
    rows = [
        LayerStability(reservoir_label(i), layer.max_singular_value, layer.current_spectral_radius)
        for i, layer in enumerate(layers)
    ]
    for row in rows:
        if not row.satisfies:
            logger.debug(f"{row.label}: σ̄={row.max_singular_value:.4f} does not guarantee the echo state property")
    return rows


@dataclass(frozen=True, eq=False)
class PerturbTrace:
    """Per-layer ‖x'(t) − x(t)‖₂ after perturbing one input step"""
    deltas: Dict[str, np.ndarray]
    perturb_step: int
    magnitude: float

    @property
    def labels(self) -> List[str]:
        return list(self.deltas)

    def to_frame(self, full: bool = False) -> pd.DataFrame:
        """Long table (t, layer, delta); by default only from the plot window before the perturbation"""
        start = 0 if full else max(0, self.perturb_step - settings.DEEP_ESN['PERTURBATION_WINDOW'])
        rows = []
        for label, delta in self.deltas.items():
            for t in range(start, delta.shape[0]):
                rows.append({'t': t, 'layer': label, 'delta': float(delta[t])})
        return pd.DataFrame(rows, columns=['t', 'layer', 'delta'])


def _reference_network(model: DeepEsnModel) -> EchoStateNetwork:
    params = replace(model.config.layers[0], seed=derive_seed(model.config.seed, SEED_ROLE_REFERENCE, 0))
    return EchoStateNetwork(params, washout=0)


def perturbation_trace(
    model: DeepEsnModel,
    series: np.ndarray,
    perturb_step: int = 200,
    magnitude: Optional[float] = None,
    horizon: int = 300,
    include_reference: bool = True,
) -> PerturbTrace:
    """
    Drive fresh copies of the model with S and with S' = S except
    S'(perturb_step) += magnitude, and record every layer's state distance
    """
    magnitude = settings.DEEP_ESN['PERTURBATION_MAGNITUDE'] if magnitude is None else magnitude
    inputs = as_matrix(series, 'series', columns=model.config.input_dim)
    if not 0 <= perturb_step < horizon:
        raise ConfigurationError(f"perturb_step must lie in [0, {horizon}), got {perturb_step}")
    if inputs.shape[0] < horizon:
        raise ConfigurationError(f"series has {inputs.shape[0]} steps, horizon needs {horizon}")

    clean = inputs[:horizon]
    perturbed = clean.copy()
    perturbed[perturb_step] += magnitude

    original = model.collect(clean, washout=0)
    shifted = model.collect(perturbed, washout=0)
    deltas = {
        reservoir_label(i): np.linalg.norm(b - a, axis=1)
        for i, (a, b) in enumerate(zip(original.reservoir_states, shifted.reservoir_states))
    }
    if include_reference:
        reference = _reference_network(model)
        deltas[REFERENCE_LABEL] = np.linalg.norm(
            reference.states(perturbed, washout=0) - reference.states(clean, washout=0), axis=1
        )
    return PerturbTrace(deltas=deltas, perturb_step=perturb_step, magnitude=magnitude)


def state_convergence(model: DeepEsnModel, inputs: np.ndarray, seed: int = 0) -> Dict[str, np.ndarray]:
    """Per-layer distance between runs started from two random state assignments in [-1, 1]"""
    rng = np.random.default_rng(seed)
    first = [rng.uniform(-1.0, 1.0, size=layer.size) for layer in model.reservoirs]
    second = [rng.uniform(-1.0, 1.0, size=layer.size) for layer in model.reservoirs]
    a = model.collect(inputs, washout=0, initial_states=first)
    b = model.collect(inputs, washout=0, initial_states=second)
    return {
        reservoir_label(i): np.linalg.norm(x - y, axis=1)
        for i, (x, y) in enumerate(zip(a.reservoir_states, b.reservoir_states))
    }


def write_condition_csv(report: CondReport, path):
    return AtomicFileWriter.write_csv(path, report.to_frame())


def write_trace_csv(trace: PerturbTrace, path, full: bool = False):
    return AtomicFileWriter.write_csv(path, trace.to_frame(full=full))


def write_esp_csv(rows: Sequence[LayerStability], path):
    frame = pd.DataFrame([row.to_dict() for row in rows],
                         columns=['layer', 'max_singular_value', 'spectral_radius', 'sufficient', 'necessary'])
    return AtomicFileWriter.write_csv(path, frame)


def write_convergence_csv(traces: Dict[str, np.ndarray], path):
    rows = [{'t': t, 'layer': label, 'distance': float(d)} for label, trace in traces.items() for t, d in enumerate(trace)]
    return AtomicFileWriter.write_csv(path, pd.DataFrame(rows, columns=['t', 'layer', 'distance']))
