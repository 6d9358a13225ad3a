"""
Fit a Deep-ESN on a task's training range and score it on any split
"""
import logging
from typing import Tuple

import numpy as np

from apps.datasets.services import SeriesTask
from apps.metrics.services import MetricReport, evaluate
from apps.shared.exceptions import ConfigurationError, WashoutError

from .services import DeepEsnConfig, DeepEsnModel

logger = logging.getLogger(__name__)


def fit_task(task: SeriesTask, config: DeepEsnConfig) -> DeepEsnModel:
    inputs, targets = task.segment('train')
    if inputs.shape[0] <= config.total_washout:
        raise WashoutError(
            f"training range of {inputs.shape[0]} steps does not exceed the cumulative washout {config.total_washout}"
        )
    if task.input_dim != config.input_dim:
        raise ConfigurationError(f"task has {task.input_dim} input channels, model expects {config.input_dim}")
    return DeepEsnModel.initialize(config).fit(inputs, targets)


def predict_split(model: DeepEsnModel, task: SeriesTask, split: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Targets and predictions over a split. The model runs from fresh states
    over every step before the split so the reservoirs are warm when it
    starts; the training split loses its washout prefix.
    """
    start, stop = task.split.bounds(split)
    offset = max(start, model.config.total_washout)
    if stop <= offset:
        raise ConfigurationError(f"split '{split}' has no steps after the washout")
    predictions = model.predict(task.inputs[:stop])
    return task.targets[offset:stop], predictions[-(stop - offset):]


def evaluate_split(model: DeepEsnModel, task: SeriesTask, split: str) -> MetricReport:
    targets, predictions = predict_split(model, task, split)
    report = evaluate(targets, predictions, offset=task.mape_offset)
    logger.debug(f"{task.name} {split}: rmse={report.rmse:.4e} n={report.n}")
    return report
