"""
Linear-algebra helpers shared by the readout and the ELM autoencoder
"""
import numpy as np
from scipy import linalg

from .exceptions import DimensionMismatchError, NonFiniteStateError, SingularSystemError


def as_matrix(values, name='array', columns=None):
    """Coerce to a 2-D float64 array, promoting vectors to a single column"""
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if matrix.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 1-D or 2-D, got shape {matrix.shape}")
    if columns is not None and matrix.shape[1] != columns:
        raise DimensionMismatchError(f"{name} must have {columns} columns, got {matrix.shape[1]}")
    return matrix


def ensure_finite(values, name='array'):
    if not np.all(np.isfinite(values)):
        raise NonFiniteStateError(f"{name} contains NaN or Inf")
    return values


def ridge_solve(design, targets, beta):
    """
    Solve W = T·Mᵀ(M·Mᵀ + βI)⁻¹ for W.

    design is P×T (one column per time step), targets is L×T.
    Returns the L×P weight matrix. Uses a Cholesky factorization of the
    symmetric normal matrix rather than an explicit inverse.
    """
    design = np.asarray(design, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if design.ndim != 2 or targets.ndim != 2:
        raise DimensionMismatchError('design and targets must be 2-D')
    if design.shape[1] != targets.shape[1]:
        raise DimensionMismatchError(
            f"design has {design.shape[1]} time steps but targets have {targets.shape[1]}"
        )
    if design.shape[1] < 1:
        raise DimensionMismatchError('at least one time step is required')
    if beta < 0:
        raise SingularSystemError(f"ridge parameter must be nonnegative, got {beta}")

    normal = design @ design.T
    if beta:
        normal[np.diag_indices_from(normal)] += beta
    rhs = design @ targets.T

    try:
        factor = linalg.cho_factor(normal, lower=False, check_finite=True)
    except linalg.LinAlgError as e:
        raise SingularSystemError(
            f"normal matrix is not positive definite (beta={beta}): {str(e)}"
        ) from e
    except ValueError as e:
        raise NonFiniteStateError(f"normal matrix is not finite: {str(e)}") from e

    return linalg.cho_solve(factor, rhs).T
