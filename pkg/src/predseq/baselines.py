"""Mixture e-process comparator for the unit-variance normal mean.

With a standard normal prior on theta the likelihood-ratio mixture is
``E_n = exp(T_n^2 / (2 (n + 1))) / sqrt(n + 1)``; rejecting once
``E_n >= 1/alpha`` is anytime valid by Ville's inequality.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


def log_e_value(t_n, n):
    n = np.asarray(n, dtype=float)
    t = np.asarray(t_n, dtype=float)
    return 0.5 * t * t / (n + 1.0) - 0.5 * np.log1p(n)


@dataclass(frozen=True)
class EProcessState:
    n: int = 0
    t_n: float = 0.0
    log_e: float = 0.0

    @property
    def e_n(self):
        return math.exp(self.log_e) if self.log_e < 709.0 else math.inf


def e_start():
    return EProcessState()


def e_update(state, x):
    x = float(x)
    if not math.isfinite(x):
        raise DataError(f"non-finite observation {x}")
    n = state.n + 1
    t = state.t_n + x
    return EProcessState(n, t, float(log_e_value(t, n)))


def e_decide(state, alpha):
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"must lie in (0, 1), got {alpha}", field="alpha")
    return "reject" if state.log_e >= -math.log(alpha) else "continue"


def e_paths(sums):
    """log E_1..log E_N for running-sum paths of shape ``(R, N)``."""
    sums = np.asarray(sums, dtype=float)
    n = np.arange(1, sums.shape[-1] + 1)
    return log_e_value(sums, n)


def e_first_crossing(sums, alpha):
    """(reject flag, crossing index or 0) per path."""
    hit = e_paths(sums) >= -math.log(alpha)
    reject = hit.any(axis=-1)
    first = np.where(reject, hit.argmax(axis=-1) + 1, 0)
    return reject, first
