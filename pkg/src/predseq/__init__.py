"""Anytime-valid sequential testing through the predictive rejection probability.

A fixed-sample test at level ``alpha * gamma`` becomes sequential by tracking
``Q_n``, the null probability that it will reject once all ``N`` observations
are in, and stopping the first time ``Q_n >= gamma``.
"""

from .core import (
    AuditLog,
    Decision,
    MonitorState,
    QRecord,
    Status,
    TestSpec,
    checkpoint,
    decide,
    derive_predictive_level,
    restore,
    step,
)
from .errors import CheckpointError, ConfigError, DataError, NumericalError, PredseqError
from .families import Family
from .gaussian import (
    DesignPoint,
    inflate_sample_size,
    power_fixed,
    q_one_sided,
    q_two_sample_known_var,
    q_two_sided,
    rejection_boundary,
)
from .mc import CalibrationResult, QEstimate, Region, calibrate_critical_value, estimate_q

__version__ = "0.1.0"

__all__ = [
    "AuditLog", "CalibrationResult", "CheckpointError", "ConfigError", "DataError", "Decision", "DesignPoint",
    "Family", "MonitorState", "NumericalError", "PredseqError", "QEstimate", "QRecord", "Region", "Status",
    "TestSpec", "calibrate_critical_value", "checkpoint", "decide", "derive_predictive_level", "estimate_q",
    "inflate_sample_size", "power_fixed", "q_one_sided", "q_two_sample_known_var", "q_two_sided",
    "rejection_boundary", "restore", "step",
]
