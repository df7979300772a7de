"""Losses, optimisers, gradient statistics and the training loop."""

from .gradstats import GradStats, StatsError, moving_variance, movvar_ratio
from .loop import METRIC_COLUMNS, Schedule, TrainingRun, TrainResult
from .losses import LossBreakdown, LossError, LossResult, PointSets, hc_loss, loss, make_points, soft_loss
from .optim import Adam, LbfgsResult, NonFiniteError, PlateauScheduler, lbfgs

__all__ = [
    "Adam",
    "GradStats",
    "LbfgsResult",
    "LossBreakdown",
    "LossError",
    "LossResult",
    "METRIC_COLUMNS",
    "NonFiniteError",
    "PlateauScheduler",
    "PointSets",
    "Schedule",
    "StatsError",
    "TrainResult",
    "TrainingRun",
    "hc_loss",
    "lbfgs",
    "loss",
    "make_points",
    "moving_variance",
    "movvar_ratio",
    "soft_loss",
]
