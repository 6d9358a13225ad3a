"""
Deep-ESN: K reservoirs and K-1 encoders, the readout design matrix with
direct input connections and feature links, ridge readout and prediction
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from apps.encoders.services import EncoderKind, EncoderSpec, FittedEncoder, fit_encoder
from apps.reservoir.services import ReservoirLayer, ReservoirParams, init_reservoir
from apps.shared.exceptions import ConfigurationError, DimensionMismatchError, WashoutError
from apps.shared.linalg import as_matrix, ensure_finite, ridge_solve

logger = logging.getLogger(__name__)

SEED_ROLE_RESERVOIR = 0
SEED_ROLE_ENCODER = 1

SEGMENT_RESERVOIR = 'reservoir'
SEGMENT_INPUT = 'input'
SEGMENT_ENCODER = 'encoder'


def derive_seed(base_seed: int, role: int, index: int) -> int:
    """Independent 64-bit seed for one component, fully determined by the base seed"""
    sequence = np.random.SeedSequence(int(base_seed), spawn_key=(role, index))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def extend_hyperparameters(hyperparameters: Sequence[Dict[str, float]], depth: int) -> List[Dict[str, float]]:
    """
    Per-layer (IS, SR, γ) for `depth` layers. Missing layers copy the 2nd
    reservoir into even positions and the 3rd into odd ones; lists shorter
    than three repeat their last entry.
    """
    if not hyperparameters:
        raise ConfigurationError('at least one layer of hyperparameters is required')
    base = [dict(h) for h in hyperparameters]
    extended = base[:depth]
    for position in range(len(base) + 1, depth + 1):
        if len(base) >= 3:
            source = base[1] if position % 2 == 0 else base[2]
        else:
            source = base[-1]
        extended.append(dict(source))
    return extended


@dataclass(frozen=True)
class DeepEsnConfig:
    """Layer wiring plus readout options"""
    layers: Tuple[ReservoirParams, ...]
    encoders: Tuple[EncoderSpec, ...] = ()
    feature_links: bool = True
    direct_input: bool = True
    ridge_beta: float = 1e-5
    washout: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'layers', tuple(self.layers))
        object.__setattr__(self, 'encoders', tuple(self.encoders))
        errors = {}
        if len(self.layers) < 1:
            errors['layers'] = 'at least one reservoir is required'
        elif len(self.encoders) != len(self.layers) - 1:
            errors['encoders'] = f"expected {len(self.layers) - 1} encoders, got {len(self.encoders)}"
        else:
            for j, spec in enumerate(self.encoders):
                if spec.input_dim != self.layers[j].size:
                    errors[f'encoders.{j}.input_dim'] = f"must equal reservoir {j + 1} size {self.layers[j].size}"
                if self.layers[j + 1].input_dim != spec.output_dim:
                    errors[f'layers.{j + 1}.input_dim'] = f"must equal encoder {j + 1} output_dim {spec.output_dim}"
        if self.ridge_beta < 0:
            errors['ridge_beta'] = 'must be nonnegative'
        if self.washout < 0:
            errors['washout'] = 'must be nonnegative'
        if errors:
            raise ConfigurationError('invalid Deep-ESN configuration', details=errors)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def total_washout(self) -> int:
        return self.depth * self.washout

    @property
    def readout_width(self) -> int:
        """P = N^(K) + D (direct input) + Σ M_j (feature links)"""
        width = self.layers[-1].size
        if self.direct_input:
            width += self.input_dim
        if self.feature_links:
            width += sum(spec.output_dim for spec in self.encoders)
        return width

    @property
    def hyperparameters(self) -> List[Dict[str, float]]:
        return [
            {'input_scaling': p.input_scaling, 'spectral_radius': p.spectral_radius, 'leak_rate': p.leak_rate}
            for p in self.layers
        ]

    @classmethod
    def build(
        cls,
        input_dim: int,
        depth: int,
        hyperparameters: Sequence[Dict[str, float]],
        reservoir_size: int = 300,
        encoder_kind: str = EncoderKind.PCA,
        encoder_size: int = 30,
        sparsity: float = 0.1,
        seed: int = 0,
        feature_links: bool = True,
        direct_input: bool = True,
        ridge_beta: Optional[float] = None,
        washout: int = 100,
        encoder_regularization: Optional[float] = None,
    ) -> 'DeepEsnConfig':
        """Uniform architecture: every reservoir has `reservoir_size` units, every encoder `encoder_size`"""
        if depth < 1:
            raise ConfigurationError('depth must be at least 1', details={'depth': depth})
        kind = EncoderKind(encoder_kind)
        if kind is EncoderKind.IDENTITY:
            encoder_size = reservoir_size
        if ridge_beta is None:
            ridge_beta = settings.DEEP_ESN['RIDGE_BETA']
        if encoder_regularization is None:
            encoder_regularization = settings.DEEP_ESN['ELM_AE_LAMBDA']

        per_layer = extend_hyperparameters(hyperparameters, depth)
        layers = []
        encoders = []
        layer_input = input_dim
        for i in range(depth):
            layers.append(ReservoirParams(
                size=reservoir_size,
                input_dim=layer_input,
                input_scaling=float(per_layer[i]['input_scaling']),
                spectral_radius=float(per_layer[i]['spectral_radius']),
                leak_rate=float(per_layer[i]['leak_rate']),
                sparsity=sparsity,
                seed=derive_seed(seed, SEED_ROLE_RESERVOIR, i),
            ))
            if i < depth - 1:
                encoders.append(EncoderSpec(
                    kind=kind,
                    input_dim=reservoir_size,
                    output_dim=encoder_size,
                    regularization=encoder_regularization,
                    seed=derive_seed(seed, SEED_ROLE_ENCODER, i),
                ))
                layer_input = encoder_size

        return cls(
            layers=tuple(layers),
            encoders=tuple(encoders),
            feature_links=feature_links,
            direct_input=direct_input,
            ridge_beta=ridge_beta,
            washout=washout,
            seed=seed,
        )

    def with_hyperparameters(self, hyperparameters: Sequence[Dict[str, float]]) -> 'DeepEsnConfig':
        """Same wiring and seeds, new per-layer (IS, SR, γ)"""
        if len(hyperparameters) != self.depth:
            raise ConfigurationError(f"expected {self.depth} hyperparameter sets, got {len(hyperparameters)}")
        layers = tuple(
            params.with_hyperparameters(
                input_scaling=float(h['input_scaling']),
                spectral_radius=float(h['spectral_radius']),
                leak_rate=float(h['leak_rate']),
            )
            for params, h in zip(self.layers, hyperparameters)
        )
        return replace(self, layers=layers)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'layers': [p.to_dict() for p in self.layers],
            'encoders': [e.to_dict() for e in self.encoders],
            'feature_links': self.feature_links,
            'direct_input': self.direct_input,
            'ridge_beta': self.ridge_beta,
            'washout': self.washout,
            'seed': self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DeepEsnConfig':
        return cls(
            layers=tuple(ReservoirParams.from_dict(p) for p in data['layers']),
            encoders=tuple(EncoderSpec.from_dict(e) for e in data.get('encoders', [])),
            feature_links=bool(data.get('feature_links', True)),
            direct_input=bool(data.get('direct_input', True)),
            ridge_beta=float(data.get('ridge_beta', settings.DEEP_ESN['RIDGE_BETA'])),
            washout=int(data.get('washout', 100)),
            seed=int(data.get('seed', 0)),
        )


def deepen(config: DeepEsnConfig, depth: int) -> DeepEsnConfig:
    """
    Resize a uniform config to `depth` layers, keeping the existing layers'
    seeds and filling new layers by the hyperparameter-copy rule
    """
    if depth < 1:
        raise ConfigurationError('depth must be at least 1', details={'depth': depth})
    if depth <= config.depth:
        return replace(config, layers=config.layers[:depth], encoders=config.encoders[:depth - 1])
    if not config.encoders:
        raise ConfigurationError('cannot deepen a single-reservoir config: no encoder to copy')

    template_layer = config.layers[-1]
    template_encoder = config.encoders[-1]
    hyperparameters = extend_hyperparameters(config.hyperparameters, depth)

    layers = list(config.layers)
    encoders = list(config.encoders)
    for i in range(config.depth, depth):
        encoders.append(replace(
            template_encoder,
            input_dim=layers[-1].size,
            seed=derive_seed(config.seed, SEED_ROLE_ENCODER, i - 1),
        ))
        layers.append(replace(
            template_layer,
            input_dim=encoders[-1].output_dim,
            input_scaling=float(hyperparameters[i]['input_scaling']),
            spectral_radius=float(hyperparameters[i]['spectral_radius']),
            leak_rate=float(hyperparameters[i]['leak_rate']),
            seed=derive_seed(config.seed, SEED_ROLE_RESERVOIR, i),
        ))
    return replace(config, layers=tuple(layers), encoders=tuple(encoders))


@dataclass(frozen=True)
class Segment:
    role: str
    index: int
    offset: int
    length: int

    def to_dict(self) -> Dict[str, Any]:
        return {'role': self.role, 'index': self.index, 'offset': self.offset, 'length': self.length}


@dataclass(frozen=True, eq=False)
class StateCollection:
    """P×T_eff readout inputs, segments ordered [last reservoir | input | encoders 1..K-1]"""
    matrix: np.ndarray
    layout: Tuple[Segment, ...]

    @property
    def width(self) -> int:
        return self.matrix.shape[0]

    @property
    def steps(self) -> int:
        return self.matrix.shape[1]

    def segment(self, role: str, index: int = 0) -> np.ndarray:
        for seg in self.layout:
            if seg.role == role and seg.index == index:
                return self.matrix[seg.offset:seg.offset + seg.length]
        raise KeyError(f"no {role} segment with index {index}")


@dataclass(eq=False)
class ForwardPass:
    """Everything one layer-by-layer pass produced"""
    reservoir_states: List[np.ndarray]
    encoder_outputs: List[np.ndarray]
    collection: StateCollection
    offset: int

    @property
    def steps(self) -> int:
        return self.collection.steps


def assemble_collection(
    last_states: np.ndarray,
    inputs: Optional[np.ndarray],
    encoder_outputs: Sequence[np.ndarray],
    steps: int,
) -> StateCollection:
    """Align every block on the final `steps` rows and stack them as columns of M"""
    blocks = [(SEGMENT_RESERVOIR, 0, last_states[-steps:])]
    if inputs is not None:
        blocks.append((SEGMENT_INPUT, 0, inputs[-steps:]))
    for j, outputs in enumerate(encoder_outputs):
        blocks.append((SEGMENT_ENCODER, j + 1, outputs[-steps:]))

    layout = []
    offset = 0
    for role, index, block in blocks:
        layout.append(Segment(role, index, offset, block.shape[1]))
        offset += block.shape[1]
    matrix = np.hstack([block for _, _, block in blocks]).T
    return StateCollection(matrix=matrix, layout=tuple(layout))


def fit_readout(states, teachers: np.ndarray, beta: float) -> np.ndarray:
    """W_out = T·Mᵀ(M·Mᵀ + βI)⁻¹ with M the P×T_eff design and T the L×T_eff teachers"""
    design = states.matrix if isinstance(states, StateCollection) else np.asarray(states, dtype=np.float64)
    return ridge_solve(design, np.asarray(teachers, dtype=np.float64), beta)


class DeepEsnModel:
    """Reservoirs, fitted encoders and the trained readout of one Deep-ESN"""

    def __init__(
        self,
        config: DeepEsnConfig,
        reservoirs: Sequence[ReservoirLayer],
        encoders: Sequence[FittedEncoder] = (),
        readout: Optional[np.ndarray] = None,
    ):
        if len(reservoirs) != config.depth:
            raise DimensionMismatchError(f"expected {config.depth} reservoirs, got {len(reservoirs)}")
        if encoders and len(encoders) != config.depth - 1:
            raise DimensionMismatchError(f"expected {config.depth - 1} fitted encoders, got {len(encoders)}")
        if readout is not None and readout.shape[1] != config.readout_width:
            raise DimensionMismatchError(
                f"W_out has {readout.shape[1]} columns but the design rows have length {config.readout_width}"
            )
        self.config = config
        self.reservoirs = list(reservoirs)
        self.fitted_encoders = list(encoders)
        self.readout = readout

    @classmethod
    def initialize(cls, config: DeepEsnConfig) -> 'DeepEsnModel':
        return cls(config, [init_reservoir(params) for params in config.layers])

    @property
    def depth(self) -> int:
        return self.config.depth

    @property
    def encoders_fitted(self) -> bool:
        return self.depth == 1 or len(self.fitted_encoders) == self.depth - 1

    @property
    def is_trained(self) -> bool:
        return self.readout is not None and self.encoders_fitted

    @property
    def output_dim(self) -> Optional[int]:
        return None if self.readout is None else self.readout.shape[0]

    def forward_collect(self, inputs: np.ndarray, teachers: np.ndarray) -> Tuple[StateCollection, np.ndarray]:
        """
        Training pass: drive layer 1 with u, fit encoder 1 on its retained
        states, drive layer 2 with the encodings, and so on. Returns the
        design matrix and the teachers truncated to the same range (L×T_eff).
        """
        inputs = as_matrix(inputs, 'inputs', columns=self.config.input_dim)
        teachers = as_matrix(teachers, 'teachers')
        if teachers.shape[0] != inputs.shape[0]:
            raise DimensionMismatchError(
                f"inputs have {inputs.shape[0]} steps but teachers have {teachers.shape[0]}"
            )
        forward = self._run(inputs, self.config.washout, None, fit_encoders=True)
        return forward.collection, teachers[forward.offset:].T

    def fit(self, inputs: np.ndarray, teachers: np.ndarray) -> 'DeepEsnModel':
        collection, teacher_matrix = self.forward_collect(inputs, teachers)
        self.readout = fit_readout(collection, teacher_matrix, self.config.ridge_beta)
        logger.info(
            f"Trained Deep-ESN K={self.depth} P={collection.width} on {collection.steps} steps"
        )
        return self

    def collect(self, inputs: np.ndarray, washout: Optional[int] = None,
                initial_states: Optional[Sequence[np.ndarray]] = None) -> ForwardPass:
        """Frozen-encoder pass from fresh (or supplied) states; the model is not mutated"""
        if not self.encoders_fitted:
            raise ConfigurationError('encoders are not fitted; train the model first')
        inputs = as_matrix(inputs, 'inputs', columns=self.config.input_dim)
        washout = self.config.washout if washout is None else washout
        return self._run(inputs, washout, initial_states, fit_encoders=False)

    def predict(self, inputs: np.ndarray, washout: Optional[int] = None) -> np.ndarray:
        """y(t) = W_out·M(t) over the retained range, T_eff×L"""
        if self.readout is None:
            raise ConfigurationError('readout is not trained')
        forward = self.collect(inputs, washout)
        return (self.readout @ forward.collection.matrix).T

    def _run(self, inputs, washout, initial_states, fit_encoders) -> ForwardPass:
        ensure_finite(inputs, 'inputs')
        length = inputs.shape[0]
        if washout < 0:
            raise WashoutError(f"washout must be nonnegative, got {washout}")
        if self.depth * washout >= length:
            raise WashoutError(
                f"cumulative washout {self.depth}x{washout} leaves no steps of a length-{length} sequence"
            )
        if initial_states is not None and len(initial_states) != self.depth:
            raise DimensionMismatchError(f"expected {self.depth} initial states, got {len(initial_states)}")

        fitted = [] if fit_encoders else self.fitted_encoders
        reservoir_states = []
        encoder_outputs = []
        current = inputs
        for i, layer in enumerate(self.reservoirs):
            runner = layer.copy()
            start = None if initial_states is None else initial_states[i]
            runner.reset(start)
            states = runner.run_sequence(current, washout)
            reservoir_states.append(states)
            if i < self.depth - 1:
                if fit_encoders:
                    fitted.append(fit_encoder(self.config.encoders[i], states))
                current = fitted[i].encode(states)
                encoder_outputs.append(current)

        if fit_encoders:
            self.fitted_encoders = fitted

        steps = length - self.depth * washout
        collection = assemble_collection(
            reservoir_states[-1],
            inputs if self.config.direct_input else None,
            encoder_outputs if self.config.feature_links else (),
            steps,
        )
        return ForwardPass(reservoir_states, encoder_outputs, collection, offset=length - steps)

    def save(self, path) -> None:
        from .model_store import ModelStore
        ModelStore.save(self, path)

    @classmethod
    def load(cls, path) -> 'DeepEsnModel':
        from .model_store import ModelStore
        return ModelStore.load(path)


class EchoStateNetwork:
    """Single-reservoir baseline: reservoir states plus direct input into a ridge readout"""

    def __init__(self, params: ReservoirParams, washout: int = 100, ridge_beta: Optional[float] = None,
                 direct_input: bool = True):
        self.reservoir = init_reservoir(params)
        self.washout = washout
        self.ridge_beta = settings.DEEP_ESN['RIDGE_BETA'] if ridge_beta is None else ridge_beta
        self.direct_input = direct_input
        self.readout = None

    def _design(self, inputs: np.ndarray, washout: int) -> StateCollection:
        inputs = as_matrix(inputs, 'inputs', columns=self.reservoir.input_dim)
        runner = self.reservoir.copy()
        runner.reset()
        states = runner.run_sequence(inputs, washout)
        return assemble_collection(states, inputs if self.direct_input else None, (), states.shape[0])

    def states(self, inputs: np.ndarray, washout: Optional[int] = None) -> np.ndarray:
        runner = self.reservoir.copy()
        runner.reset()
        return runner.run_sequence(inputs, self.washout if washout is None else washout)

    def fit(self, inputs: np.ndarray, teachers: np.ndarray) -> 'EchoStateNetwork':
        design = self._design(inputs, self.washout)
        teachers = as_matrix(teachers, 'teachers')
        self.readout = fit_readout(design, teachers[self.washout:].T, self.ridge_beta)
        return self

    def predict(self, inputs: np.ndarray, washout: Optional[int] = None) -> np.ndarray:
        if self.readout is None:
            raise ConfigurationError('readout is not trained')
        design = self._design(inputs, self.washout if washout is None else washout)
        return (self.readout @ design.matrix).T
