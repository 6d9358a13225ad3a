"""
Single echo-state reservoir layer: fixed random weights with spectral-radius
control and the leaky-integrator state update
"""
import logging
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, Optional

import numpy as np
from scipy import linalg

from apps.shared.exceptions import (
    ConfigurationError,
    DegenerateSpectrumError,
    DimensionMismatchError,
    NonFiniteStateError,
    WashoutError,
)
from apps.shared.linalg import as_matrix

logger = logging.getLogger(__name__)

# Below this the rescaling W·SR/ρ(W) is numerically meaningless
DEGENERATE_SPECTRUM_THRESHOLD = 1e-12

# Recurrent weights are drawn from U[-0.5, 0.5] before rescaling
RECURRENT_WEIGHT_BOUND = 0.5


@dataclass(frozen=True)
class ReservoirParams:
    """Hyperparameters of one reservoir (N, D_in, IS, SR, γ, α, seed)"""
    size: int
    input_dim: int
    input_scaling: float
    spectral_radius: float
    leak_rate: float
    sparsity: float = 0.1
    seed: int = 0

    def __post_init__(self):
        errors = {}
        if int(self.size) != self.size or self.size < 1:
            errors['size'] = 'must be a positive integer'
        if int(self.input_dim) != self.input_dim or self.input_dim < 1:
            errors['input_dim'] = 'must be a positive integer'
        if not 0.0 <= self.input_scaling <= 1.0:
            errors['input_scaling'] = 'must lie in [0, 1]'
        if not 0.0 < self.spectral_radius < 1.0:
            errors['spectral_radius'] = 'must lie in (0, 1)'
        if not 0.0 < self.leak_rate <= 1.0:
            errors['leak_rate'] = 'must lie in (0, 1]'
        if not 0.0 < self.sparsity <= 1.0:
            errors['sparsity'] = 'must lie in (0, 1]'
        if not 0 <= int(self.seed) < 2 ** 64:
            errors['seed'] = 'must be a 64-bit unsigned integer'
        if errors:
            raise ConfigurationError('invalid reservoir parameters', details=errors)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ReservoirParams':
        return cls(
            size=int(data['size']),
            input_dim=int(data['input_dim']),
            input_scaling=float(data['input_scaling']),
            spectral_radius=float(data['spectral_radius']),
            leak_rate=float(data['leak_rate']),
            sparsity=float(data.get('sparsity', 0.1)),
            seed=int(data.get('seed', 0)),
        )

    def with_hyperparameters(self, input_scaling=None, spectral_radius=None, leak_rate=None) -> 'ReservoirParams':
        return replace(
            self,
            input_scaling=self.input_scaling if input_scaling is None else input_scaling,
            spectral_radius=self.spectral_radius if spectral_radius is None else spectral_radius,
            leak_rate=self.leak_rate if leak_rate is None else leak_rate,
        )


def spectral_radius(matrix: np.ndarray) -> float:
    """Largest eigenvalue magnitude (dense eigensolver)"""
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(linalg.eigvals(matrix))))


def largest_singular_value(matrix: np.ndarray) -> float:
    """σ̄(W), the spectral norm"""
    if matrix.size == 0:
        return 0.0
    return float(linalg.svdvals(matrix)[0])


class ReservoirLayer:
    """
    One reservoir: W_in (N×D_in), W_res (N×N) and the current state x.

    step() and run_sequence() mutate the stored state; callers must
    serialize access to a single layer.
    """

    def __init__(self, params: ReservoirParams, w_in: np.ndarray, w_res: np.ndarray,
                 state: Optional[np.ndarray] = None):
        w_in = np.asarray(w_in, dtype=np.float64)
        w_res = np.asarray(w_res, dtype=np.float64)
        if w_in.shape != (params.size, params.input_dim):
            raise DimensionMismatchError(
                f"W_in must be {params.size}x{params.input_dim}, got {w_in.shape}"
            )
        if w_res.shape != (params.size, params.size):
            raise DimensionMismatchError(
                f"W_res must be {params.size}x{params.size}, got {w_res.shape}"
            )
        self.params = params
        self.w_in = w_in
        self.w_res = w_res
        self.state = np.zeros(params.size)
        if state is not None:
            self.reset(state)

    @property
    def size(self) -> int:
        return self.params.size

    @property
    def input_dim(self) -> int:
        return self.params.input_dim

    def reset(self, state: Optional[np.ndarray] = None) -> None:
        if state is None:
            self.state = np.zeros(self.size)
            return
        state = np.asarray(state, dtype=np.float64).reshape(-1)
        if state.shape[0] != self.size:
            raise DimensionMismatchError(f"state must have length {self.size}, got {state.shape[0]}")
        self.state = state.copy()

    def copy(self) -> 'ReservoirLayer':
        return ReservoirLayer(self.params, self.w_in.copy(), self.w_res.copy(), self.state.copy())

    def step(self, u: np.ndarray) -> np.ndarray:
        """x(t+1) = (1-γ)·x(t) + γ·tanh(W_res·x(t) + W_in·u(t+1))"""
        u = np.asarray(u, dtype=np.float64).reshape(-1)
        if u.shape[0] != self.input_dim:
            raise DimensionMismatchError(f"input must have length {self.input_dim}, got {u.shape[0]}")
        return self._advance(u)

    def _advance(self, u: np.ndarray) -> np.ndarray:
        gamma = self.params.leak_rate
        z = np.tanh(self.w_res @ self.state + self.w_in @ u)
        if gamma == 1.0:
            new_state = z
        else:
            new_state = (1.0 - gamma) * self.state + gamma * z
        if not np.all(np.isfinite(new_state)):
            raise NonFiniteStateError('reservoir state became non-finite')
        self.state = new_state
        return new_state

    def run_sequence(self, inputs: np.ndarray, washout: int = 0,
                     initial_state: Optional[np.ndarray] = None) -> np.ndarray:
        """Drive the layer over T inputs and return the (T-washout)×N retained states"""
        inputs = as_matrix(inputs, 'inputs', columns=self.input_dim)
        length = inputs.shape[0]
        if washout < 0:
            raise WashoutError(f"washout must be nonnegative, got {washout}")
        if washout >= length:
            raise WashoutError(f"washout {washout} leaves no steps of a length-{length} sequence")
        if initial_state is not None:
            self.reset(initial_state)

        states = np.empty((length, self.size))
        for t in range(length):
            states[t] = self._advance(inputs[t])
        return states[washout:]

    @property
    def max_singular_value(self) -> float:
        return largest_singular_value(self.w_res)

    @property
    def current_spectral_radius(self) -> float:
        return spectral_radius(self.w_res)

    @property
    def contraction_factor(self) -> float:
        """Lipschitz constant (1-γ) + γ·σ̄ of the leaky update w.r.t. the state"""
        gamma = self.params.leak_rate
        return (1.0 - gamma) + gamma * self.max_singular_value


def init_reservoir(params: ReservoirParams) -> ReservoirLayer:
    """
    Build W_in ~ U[-IS, IS] and a sparse W rescaled so ρ(W_res) = SR.

    A fraction α of the N² recurrent positions (chosen uniformly, diagonal
    allowed) keeps its U[-0.5, 0.5] weight; the rest are zeroed.
    """
    rng = np.random.default_rng(params.seed)
    n = params.size

    w_in = rng.uniform(-params.input_scaling, params.input_scaling, size=(n, params.input_dim))

    dense = rng.uniform(-RECURRENT_WEIGHT_BOUND, RECURRENT_WEIGHT_BOUND, size=(n, n))
    nonzero = int(round(params.sparsity * n * n))
    keep = rng.choice(n * n, size=nonzero, replace=False)
    mask = np.zeros(n * n, dtype=bool)
    mask[keep] = True
    w = np.where(mask.reshape(n, n), dense, 0.0)

    rho = spectral_radius(w)
    if rho < DEGENERATE_SPECTRUM_THRESHOLD:
        raise DegenerateSpectrumError(
            f"sparsified recurrent matrix has spectral radius {rho:.3e}; cannot rescale to {params.spectral_radius}"
        )
    w_res = params.spectral_radius * (w / rho)

    logger.debug(f"Initialized reservoir N={n} D_in={params.input_dim} nnz={nonzero} seed={params.seed}")
    return ReservoirLayer(params, w_in, w_res)


def scale_to_singular_value(layer: ReservoirLayer, target: float) -> ReservoirLayer:
    """Copy of the layer with W_res rescaled so σ̄(W_res) = target"""
    sigma = layer.max_singular_value
    if sigma < DEGENERATE_SPECTRUM_THRESHOLD:
        raise DegenerateSpectrumError('cannot rescale a zero recurrent matrix')
    scaled = layer.copy()
    scaled.w_res = layer.w_res * (target / sigma)
    return scaled
