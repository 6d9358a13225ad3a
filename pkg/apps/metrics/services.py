"""
RMSE, NRMSE and MAPE over whole prediction segments
"""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from apps.shared.exceptions import ConstantTargetError, DimensionMismatchError, ZeroDenominatorError

logger = logging.getLogger(__name__)

METRIC_NAMES = ('rmse', 'nrmse', 'mape')


def _pair(y, y_hat) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.shape != y_hat.shape:
        raise DimensionMismatchError(f"targets have {y.size} values, predictions {y_hat.size}")
    if y.size < 1:
        raise DimensionMismatchError('at least one value is required')
    return y, y_hat


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def nrmse(y, y_hat) -> float:
    """sqrt(Σ(y − ŷ)² / Σ(y − ȳ)²)"""
    y, y_hat = _pair(y, y_hat)
    spread = np.sum((y - y.mean()) ** 2)
    if spread == 0.0:
        raise ConstantTargetError('NRMSE is undefined for a constant target')
    return float(np.sqrt(np.sum((y - y_hat) ** 2) / spread))


def mape(y, y_hat, offset: float = 0.0) -> float:
    """Mean |y − ŷ| / |y| in percent, after adding `offset` to both series"""
    y, y_hat = _pair(y, y_hat)
    y = y + offset
    y_hat = y_hat + offset
    if np.any(y == 0.0):
        raise ZeroDenominatorError(f"MAPE denominator is zero at {int(np.sum(y == 0.0))} points (offset={offset})")
    return float(np.mean(np.abs(y - y_hat) / np.abs(y)) * 100.0)


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    nrmse: float
    mape: float
    n: int
    offset_applied: float = 0.0

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def evaluate(y, y_hat, offset: float = 0.0) -> MetricReport:
    """
    All three metrics on one segment. NRMSE or MAPE that is undefined for
    this target is reported as NaN rather than failing the segment.
    """
    y, y_hat = _pair(y, y_hat)
    try:
        normalized = nrmse(y, y_hat)
    except ConstantTargetError as e:
        logger.warning(f"{e.message}; reporting NaN")
        normalized = float('nan')
    try:
        percent = mape(y, y_hat, offset)
    except ZeroDenominatorError as e:
        logger.warning(f"{e.message}; reporting NaN")
        percent = float('nan')
    return MetricReport(rmse=rmse(y, y_hat), nrmse=normalized, mape=percent, n=int(y.size), offset_applied=offset)


def aggregate(reports: Sequence[MetricReport]) -> Dict[str, Optional[float]]:
    """Mean and population standard deviation of each metric over successful runs"""
    summary: Dict[str, Optional[float]] = {'n_runs': len(reports)}
    for name in METRIC_NAMES:
        values = np.array([getattr(report, name) for report in reports], dtype=np.float64)
        if values.size == 0:
            summary[f'{name}_mean'] = None
            summary[f'{name}_std'] = None
            continue
        summary[f'{name}_mean'] = float(np.mean(values))
        summary[f'{name}_std'] = float(np.std(values))
    return summary
