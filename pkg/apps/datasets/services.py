"""
Series generators (Mackey-Glass, NARMA-10), CSV ingestion, smoothing and
the train/validate/test task split
"""
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from django.conf import settings

from apps.shared.exceptions import ConfigurationError, SeriesParseError, SplitOverflowError
from apps.shared.linalg import as_matrix
from deep_esn.utils.file_io import AtomicFileWriter

logger = logging.getLogger(__name__)

SPLIT_NAMES = ('train', 'validate', 'test')

NARMA_ORDER = 10
NARMA_INPUT_HIGH = 0.5


@dataclass(frozen=True)
class Split:
    train: int
    validate: int
    test: int

    def __post_init__(self):
        errors = {}
        if self.train < 1:
            errors['train'] = 'must be at least 1'
        if self.validate < 0:
            errors['validate'] = 'must be nonnegative'
        if self.test < 0:
            errors['test'] = 'must be nonnegative'
        if errors:
            raise ConfigurationError('invalid split', details=errors)

    @property
    def total(self) -> int:
        return self.train + self.validate + self.test

    def bounds(self, name: str) -> Tuple[int, int]:
        """[start, stop) of a named split in task time"""
        if name == 'train':
            return 0, self.train
        if name == 'validate':
            return self.train, self.train + self.validate
        if name == 'test':
            return self.train + self.validate, self.total
        raise ConfigurationError(f"unknown split '{name}'", details={'split': list(SPLIT_NAMES)})

    def to_dict(self) -> Dict[str, int]:
        return {'train': self.train, 'validate': self.validate, 'test': self.test}


@dataclass(frozen=True, eq=False)
class SeriesTask:
    """Aligned inputs u (T×D) and teachers d (T×L) with a recorded split"""
    name: str
    inputs: np.ndarray
    targets: np.ndarray
    horizon: int
    split: Split
    mape_offset: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        inputs = as_matrix(self.inputs, 'inputs')
        targets = as_matrix(self.targets, 'targets')
        if inputs.shape[0] != targets.shape[0]:
            raise ConfigurationError('inputs and targets must have the same length')
        if self.split.total > inputs.shape[0]:
            raise SplitOverflowError(
                f"split {self.split.total} exceeds the {inputs.shape[0]} usable steps",
                details=self.split.to_dict(),
            )
        object.__setattr__(self, 'inputs', inputs)
        object.__setattr__(self, 'targets', targets)

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.targets.shape[1]

    def segment(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        start, stop = self.split.bounds(name)
        return self.inputs[start:stop], self.targets[start:stop]


def gen_mackey_glass(
    length: int,
    tau: float = 17.0,
    delta: float = 0.1,
    a: float = 0.2,
    b: float = -0.1,
    n: float = 10.0,
    seed: int = 0,
    burn_in: Optional[int] = None,
    history: Optional[float] = None,
    jitter: Optional[float] = None,
) -> np.ndarray:
    """
    dy/dt = a·y(t−τ)/(1 + y(t−τ)ⁿ) + b·y(t), integrated by RK4 at step δ.

    The delayed value is held constant over each internal step. Points are
    emitted every 1/δ internal steps (unit spacing); output[0] is y(0) after
    the burn-in.
    """
    config = settings.DEEP_ESN
    burn_in = config['MGS_BURN_IN'] if burn_in is None else burn_in
    history = config['MGS_HISTORY'] if history is None else history
    jitter = config['MGS_HISTORY_JITTER'] if jitter is None else jitter

    errors = {}
    if length < 1:
        errors['length'] = 'must be at least 1'
    if tau <= 0:
        errors['tau'] = 'must be positive'
    if delta <= 0 or abs(round(1.0 / delta) - 1.0 / delta) > 1e-9:
        errors['delta'] = 'must be positive and divide 1'
    if burn_in < 0:
        errors['burn_in'] = 'must be nonnegative'
    if jitter < 0:
        errors['jitter'] = 'must be nonnegative'
    if errors:
        raise ConfigurationError('invalid Mackey-Glass parameters', details=errors)

    rng = np.random.default_rng(seed)
    every = int(round(1.0 / delta))
    lag = int(round(tau / delta))
    steps = (burn_in + length - 1) * every

    # buffer[i] holds y at time (i - lag)·δ
    buffer = np.empty(lag + 1 + steps)
    buffer[:lag + 1] = history + rng.uniform(-jitter, jitter, size=lag + 1)

    def rate(y, delayed):
        return a * delayed / (1.0 + delayed ** n) + b * y

    for i in range(lag, lag + steps):
        y = buffer[i]
        delayed = buffer[i - lag]
        k1 = rate(y, delayed)
        k2 = rate(y + 0.5 * delta * k1, delayed)
        k3 = rate(y + 0.5 * delta * k2, delayed)
        k4 = rate(y + delta * k3, delayed)
        buffer[i + 1] = y + delta * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0

    emitted = buffer[lag::every]
    return emitted[burn_in:burn_in + length].copy()


def gen_narma10(length: int, seed: int = 0, inputs: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tenth-order NARMA driven by u ~ U[0, 0.5]:

        y(t+1) = 0.3·y(t) + 0.05·y(t)·Σ_{i=0..9} y(t−i) + 1.5·u(t−9)·u(t) + 0.1

    The first ten outputs are zero.
    """
    if length <= NARMA_ORDER:
        raise ConfigurationError(f"NARMA-10 needs more than {NARMA_ORDER} steps, got {length}")
    if inputs is None:
        u = np.random.default_rng(seed).uniform(0.0, NARMA_INPUT_HIGH, size=length)
    else:
        u = np.asarray(inputs, dtype=np.float64).reshape(-1)
        if u.shape[0] != length:
            raise ConfigurationError(f"expected {length} inputs, got {u.shape[0]}")

    y = np.zeros(length)
    for t in range(NARMA_ORDER - 1, length - 1):
        y[t + 1] = (
            0.3 * y[t]
            + 0.05 * y[t] * y[t - NARMA_ORDER + 1:t + 1].sum()
            + 1.5 * u[t - NARMA_ORDER + 1] * u[t]
            + 0.1
        )
    return u, y


_PARSER_LINE = re.compile(r'line (\d+)')


def _undecodable_line(path: Union[str, Path]) -> Optional[int]:
    data = Path(path).read_bytes()
    try:
        data.decode('utf-8')
    except UnicodeDecodeError as e:
        return data[:e.start].count(b'\n') + 1
    return None


def load_csv(path: Union[str, Path], column: Union[int, str] = 0, delimiter: str = ',',
             header: Optional[bool] = None) -> np.ndarray:
    """
    One observation per line. `header=None` detects a non-numeric first row.
    Any unparseable or empty value raises SeriesParseError with its 1-based
    line number.
    """
    try:
        frame = pd.read_csv(
            path, sep=delimiter, header=None, dtype=str,
            skip_blank_lines=False, keep_default_na=False, engine='python',
        )
    except pd.errors.ParserError as e:
        match = _PARSER_LINE.search(str(e))
        raise SeriesParseError(str(e), line_number=int(match.group(1)) if match else None) from e
    except pd.errors.EmptyDataError as e:
        raise SeriesParseError(f"{path} is empty") from e
    except UnicodeDecodeError as e:
        raise SeriesParseError(
            f"{path} is not valid UTF-8: {e.reason}", line_number=_undecodable_line(path)
        ) from e

    first_row = frame.iloc[0].str.strip()
    if header is None:
        header = pd.to_numeric(first_row, errors='coerce').isna().all()

    if isinstance(column, str):
        if not header:
            raise ConfigurationError(f"column '{column}' given by name but {path} has no header row")
        names = list(first_row)
        if column not in names:
            raise ConfigurationError(f"column '{column}' not found", details={'columns': names})
        position = names.index(column)
    else:
        position = int(column)
        if not 0 <= position < frame.shape[1]:
            raise ConfigurationError(f"column {position} out of range for {frame.shape[1]} columns")

    first_data = 1 if header else 0
    raw = frame.iloc[first_data:, position].str.strip()
    values = pd.to_numeric(raw, errors='coerce')
    bad = values.isna().to_numpy()
    if bad.any():
        offending = int(np.argmax(bad))
        line_number = first_data + offending + 1
        raise SeriesParseError(
            f"cannot parse value {raw.iloc[offending]!r} in {path}", line_number=line_number
        )
    if values.empty:
        raise SeriesParseError(f"{path} contains no observations")

    logger.info(f"Loaded {len(values)} observations from {path}")
    return values.to_numpy(dtype=np.float64)


def smooth(series: np.ndarray, window: int = 5) -> np.ndarray:
    """Centered moving average; windows shrink at the edges"""
    if window < 1 or window % 2 == 0:
        raise ConfigurationError(f"smoothing window must be odd and >= 1, got {window}")
    values = np.asarray(series, dtype=np.float64).reshape(-1)
    if window == 1:
        return values.copy()
    return pd.Series(values).rolling(window, center=True, min_periods=1).mean().to_numpy()


def make_task(
    series: np.ndarray,
    horizon: int,
    split: Split,
    name: str = 'series',
    drop_last: int = 0,
    mape_offset: float = 0.0,
    metadata: Optional[Dict[str, Any]] = None,
) -> SeriesTask:
    """Pair u(t) with d(t) = u(t+h) over the first split.total steps"""
    if horizon < 0:
        raise ConfigurationError(f"horizon must be nonnegative, got {horizon}")
    if drop_last < 0:
        raise ConfigurationError(f"drop_last must be nonnegative, got {drop_last}")
    values = as_matrix(series, 'series')
    if drop_last:
        values = values[:-drop_last]
    usable = values.shape[0] - horizon
    if split.total > usable:
        raise SplitOverflowError(
            f"split {split.total} exceeds the {max(usable, 0)} usable steps of '{name}'",
            details={'split': split.to_dict(), 'usable': max(usable, 0)},
        )
    return SeriesTask(
        name=name,
        inputs=values[:split.total],
        targets=values[horizon:horizon + split.total],
        horizon=horizon,
        split=split,
        mape_offset=mape_offset,
        metadata=dict(metadata or {}),
    )


def make_system_task(inputs: np.ndarray, targets: np.ndarray, split: Split, name: str = 'system',
                     horizon: int = 0, metadata: Optional[Dict[str, Any]] = None) -> SeriesTask:
    """Input-output identification task: drive with u(t), predict y(t+h)"""
    if horizon < 0:
        raise ConfigurationError(f"horizon must be nonnegative, got {horizon}")
    inputs = as_matrix(inputs, 'inputs')
    targets = as_matrix(targets, 'targets')
    usable = min(inputs.shape[0], targets.shape[0] - horizon)
    if split.total > usable:
        raise SplitOverflowError(
            f"split {split.total} exceeds the {max(usable, 0)} usable steps of '{name}'",
            details={'split': split.to_dict(), 'usable': max(usable, 0)},
        )
    return SeriesTask(
        name=name,
        inputs=inputs[:split.total],
        targets=targets[horizon:horizon + split.total],
        horizon=horizon,
        split=split,
        metadata=dict(metadata or {}),
    )


def export_csv(path: Union[str, Path], columns: Dict[str, np.ndarray], metadata: Dict[str, Any]) -> Tuple[Path, Path]:
    """Write the series CSV and a `<name>.meta.json` sidecar with its provenance"""
    target = Path(path)
    frame = pd.DataFrame({name: np.asarray(values).reshape(-1) for name, values in columns.items()})
    csv_path = AtomicFileWriter.write_csv(target, frame)
    meta_path = AtomicFileWriter.write_json(target.with_suffix('.meta.json'), metadata)
    logger.info(f"Exported {len(frame)} rows to {csv_path}")
    return csv_path, meta_path


class DatasetService:
    """Build series and tasks from a validated dataset section"""

    @staticmethod
    def required_length(spec: Dict[str, Any]) -> int:
        split = spec['split']
        return split['train'] + split['validate'] + split['test'] + spec.get('horizon', 1) + spec.get('drop_last', 0)

    @staticmethod
    def generate(spec: Dict[str, Any], seed: int) -> Dict[str, np.ndarray]:
        """Raw columns of the configured source, before smoothing"""
        source = spec['source']
        params = dict(spec.get('params') or {})
        length = spec.get('length') or DatasetService.required_length(spec)

        if source == 'mackey_glass':
            return {'y': gen_mackey_glass(length, seed=seed, **params)}
        if source == 'narma10':
            u, y = gen_narma10(length, seed=seed)
            return {'u': u, 'y': y}
        if source == 'csv':
            series = load_csv(
                spec['path'],
                column=spec.get('column', 0),
                delimiter=spec.get('delimiter', ','),
                header=spec.get('header'),
            )
            return {'y': series}
        raise ConfigurationError(f"unknown dataset source '{source}'")

    @staticmethod
    def build_task(spec: Dict[str, Any], seed: int) -> SeriesTask:
        columns = DatasetService.generate(spec, seed)
        split = Split(**spec['split'])
        name = spec.get('name', spec['source'])
        metadata = {'source': spec['source'], 'params': spec.get('params') or {}, 'seed': seed}

        if spec['source'] == 'narma10' and spec.get('mode', 'series') == 'system':
            return make_system_task(
                columns['u'], columns['y'], split, name=name,
                horizon=spec.get('horizon', 1), metadata=metadata,
            )

        series = columns['y']
        window = spec.get('smoothing_window', 1)
        if window > 1:
            series = smooth(series, window)
        return make_task(
            series,
            horizon=spec.get('horizon', 1),
            split=split,
            name=name,
            drop_last=spec.get('drop_last', 0),
            mape_offset=spec.get('mape_offset', 0.0),
            metadata=metadata,
        )
