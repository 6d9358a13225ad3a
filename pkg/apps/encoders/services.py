"""
Unsupervised encoders inserted between reservoirs: PCA, ELM autoencoder,
Achlioptas random projection and an identity pass-through
"""
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional

import numpy as np
from django.conf import settings
from scipy import linalg

from apps.shared.exceptions import ConfigurationError, DimensionMismatchError, RankDeficiencyWarning
from apps.shared.linalg import as_matrix, ensure_finite, ridge_solve

logger = logging.getLogger(__name__)

SQRT3 = np.sqrt(3.0)


class EncoderKind(str, Enum):
    PCA = 'pca'
    ELM_AE = 'elm_ae'
    RP = 'rp'
    IDENTITY = 'identity'


@dataclass(frozen=True)
class EncoderSpec:
    """What to fit: kind, N → M, ELM-AE regularizer λ and seed"""
    kind: EncoderKind
    input_dim: int
    output_dim: int
    regularization: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'kind', EncoderKind(self.kind))
        errors = {}
        if self.input_dim < 1:
            errors['input_dim'] = 'must be a positive integer'
        if self.output_dim < 1:
            errors['output_dim'] = 'must be a positive integer'
        if self.kind is EncoderKind.PCA and self.output_dim > self.input_dim:
            errors['output_dim'] = f"PCA cannot produce {self.output_dim} components from {self.input_dim} inputs"
        if self.kind is EncoderKind.IDENTITY and self.output_dim != self.input_dim:
            errors['output_dim'] = 'identity encoder requires output_dim == input_dim'
        if self.regularization < 0:
            errors['regularization'] = 'must be nonnegative'
        if errors:
            raise ConfigurationError('invalid encoder specification', details=errors)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind.value,
            'input_dim': self.input_dim,
            'output_dim': self.output_dim,
            'regularization': self.regularization,
            'seed': self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EncoderSpec':
        return cls(
            kind=EncoderKind(data['kind']),
            input_dim=int(data['input_dim']),
            output_dim=int(data['output_dim']),
            regularization=float(data.get('regularization', settings.DEEP_ESN['ELM_AE_LAMBDA'])),
            seed=int(data.get('seed', 0)),
        )


@dataclass(frozen=True, eq=False)
class FittedEncoder:
    """Frozen encoder: x_enc = W_enc·(x − μ); μ is zero except for PCA"""
    spec: EncoderSpec
    weights: np.ndarray
    mean: np.ndarray = field(default=None)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (self.spec.output_dim, self.spec.input_dim):
            raise DimensionMismatchError(
                f"W_enc must be {self.spec.output_dim}x{self.spec.input_dim}, got {weights.shape}"
            )
        mean = np.zeros(self.spec.input_dim) if self.mean is None else np.asarray(self.mean, dtype=np.float64)
        if mean.shape != (self.spec.input_dim,):
            raise DimensionMismatchError(f"centering vector must have length {self.spec.input_dim}")
        weights.setflags(write=False)
        mean.setflags(write=False)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'mean', mean)

    @property
    def kind(self) -> EncoderKind:
        return self.spec.kind

    def encode(self, state: np.ndarray) -> np.ndarray:
        """Encode one length-N state, or a T×N batch row by row"""
        values = np.asarray(state, dtype=np.float64)
        if values.shape[-1] != self.spec.input_dim or values.ndim > 2:
            raise DimensionMismatchError(
                f"encoder expects vectors of length {self.spec.input_dim}, got shape {values.shape}"
            )
        if self.kind is EncoderKind.IDENTITY:
            return values.copy()
        if self.kind is EncoderKind.PCA:
            values = values - self.mean
        return values @ self.weights.T


def fit_encoder(spec: EncoderSpec, states: Optional[np.ndarray]) -> FittedEncoder:
    """Fit an encoder on a T×N matrix of training echo states"""
    if spec.kind is EncoderKind.RP and states is None:
        return _fit_random_projection(spec, None)

    states = ensure_finite(as_matrix(states, 'states', columns=spec.input_dim), 'states')
    if spec.kind in (EncoderKind.PCA, EncoderKind.ELM_AE) and states.shape[0] < 2:
        raise DimensionMismatchError(f"{spec.kind.value} needs at least 2 samples, got {states.shape[0]}")

    fitter = ENCODER_FITTERS[spec.kind]
    encoder = fitter(spec, states)
    logger.debug(f"Fitted {spec.kind.value} encoder {spec.input_dim}->{spec.output_dim} on {states.shape[0]} states")
    return encoder


def _fit_pca(spec: EncoderSpec, states: np.ndarray) -> FittedEncoder:
    mean = states.mean(axis=0)
    centered = states - mean
    # SVD of X rather than eigh of XᵀX, which squares the condition number.
    # Rows of Vᵀ come back ordered by singular value.
    _, singular, components = linalg.svd(centered, full_matrices=False)

    tolerance = singular[0] * max(states.shape) * np.finfo(np.float64).eps
    positive = int(np.count_nonzero(singular > tolerance))

    weights = np.zeros((spec.output_dim, spec.input_dim))
    usable = min(positive, spec.output_dim)
    weights[:usable] = components[:usable]
    if usable < spec.output_dim:
        message = (
            f"PCA found {positive} nonzero singular values but {spec.output_dim} components were "
            f"requested; the remaining rows are zero"
        )
        logger.warning(message)
        warnings.warn(message, RankDeficiencyWarning, stacklevel=3)

    for row in weights[:usable]:
        pivot = int(np.argmax(np.abs(row)))
        if row[pivot] < 0:
            row *= -1.0

    return FittedEncoder(spec, weights, mean)


def _fit_elm_autoencoder(spec: EncoderSpec, states: np.ndarray) -> FittedEncoder:
    rng = np.random.default_rng(spec.seed)
    x = states.T  # N×T
    w0 = rng.uniform(-1.0, 1.0, size=(spec.output_dim, spec.input_dim))
    b0 = rng.uniform(-1.0, 1.0, size=spec.output_dim)
    hidden = np.tanh(w0 @ x + b0[:, None])  # M×T

    # W* (N×M) minimises ||W·H − X||² + λ||W||²; the encoder is (W*)ᵀ
    decoder = ridge_solve(hidden, x, spec.regularization)
    return FittedEncoder(spec, decoder.T)


def _fit_random_projection(spec: EncoderSpec, states: Optional[np.ndarray]) -> FittedEncoder:
    rng = np.random.default_rng(spec.seed)
    signs = rng.choice(
        np.array([1.0, 0.0, -1.0]),
        size=(spec.output_dim, spec.input_dim),
        p=[1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    )
    return FittedEncoder(spec, SQRT3 * signs)


def _fit_identity(spec: EncoderSpec, states: np.ndarray) -> FittedEncoder:
    return FittedEncoder(spec, np.eye(spec.input_dim))


ENCODER_FITTERS: Dict[EncoderKind, Callable[[EncoderSpec, np.ndarray], FittedEncoder]] = {
    EncoderKind.PCA: _fit_pca,
    EncoderKind.ELM_AE: _fit_elm_autoencoder,
    EncoderKind.RP: _fit_random_projection,
    EncoderKind.IDENTITY: _fit_identity,
}
