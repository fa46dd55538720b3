"""Stopping for futility with the updated Type-II error ``Q*_n``.

``Q*_n`` is the probability, under the design alternative, that the
fixed-sample test fails to reject at ``N``. It is a martingale under the
alternative, so stopping once it reaches ``gamma_f`` loses at most
``Q*_0 / gamma_f`` of power.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gaussian import _check_interim, _check_rate, _scalar, power_fixed
from .mc import estimate_q
from .normal import norm_cdf, upper_quantile

DEFAULT_GAMMA_F = 0.99

# families for which 1 - Q*_n >= Q_n holds (monotone likelihood ratio, one-sided)
MONOTONE_FAMILIES = frozenset({"gaussian"})


@dataclass(frozen=True)
class FutilitySpec:
    theta_star: float
    gamma_f: float = DEFAULT_GAMMA_F
    q0_star: float = 0.1

    def __post_init__(self):
        _check_rate("gamma_f", self.gamma_f)
        _check_rate("q0_star", self.q0_star)
        if self.gamma_f <= self.q0_star:
            raise ConfigError(
                f"gamma_f={self.gamma_f} must exceed the design Type-II error {self.q0_star}", field="gamma_f"
            )

    @classmethod
    def for_gaussian(cls, n_max, alpha_tilde, theta_star, gamma_f=DEFAULT_GAMMA_F):
        if theta_star <= 0:
            raise ConfigError(f"must be positive, got {theta_star}", field="theta_star")
        q0 = 1.0 - power_fixed(theta_star, n_max, alpha_tilde)
        return cls(float(theta_star), float(gamma_f), float(q0))

    @property
    def budget(self):
        """Upper bound on the probability of a futility stop under the alternative."""
        return self.q0_star / self.gamma_f


def q_star_gaussian(t_n, n, n_max, alpha_tilde, theta_star):
    """``Phi((sqrt(N) z - T_n - (N - n) theta*) / sqrt(N - n))`` for the one-sided test."""
    _check_rate("alpha_tilde", alpha_tilde)
    if theta_star <= 0:
        raise ConfigError(f"must be positive, got {theta_star}", field="theta_star")
    n = _check_interim(n, n_max)
    z = upper_quantile(alpha_tilde)
    x = (math.sqrt(n_max) * z - np.asarray(t_n, dtype=float) - (n_max - n) * theta_star) / np.sqrt(n_max - n)
    return _scalar(norm_cdf(x))


def q_star_final(t_n, n_max, alpha_tilde):
    """Indicator that the one-sided test does not reject at N."""
    return np.asarray(t_n) <= math.sqrt(n_max) * upper_quantile(alpha_tilde)


def q_star_paths(sums, n_max, alpha_tilde, theta_star):
    """Q*_1..Q*_N for running-sum paths of shape ``(R, n_max)``; last column is the indicator."""
    sums = np.asarray(sums, dtype=float)
    out = np.empty_like(sums)
    if n_max > 1:
        out[..., :-1] = q_star_gaussian(sums[..., :-1], np.arange(1, n_max), n_max, alpha_tilde, theta_star)
    out[..., -1] = q_star_final(sums[..., -1], n_max, alpha_tilde)
    return out


def q_star_mc(summary, sampler, statistic, region, b, rng):
    """Monte Carlo Q*: completions from the alternative, counting non-rejections."""
    return estimate_q(summary, sampler, statistic, region, b, rng, complement=True)


def futility_decide(q_star, gamma_f):
    return "stop_futile" if q_star >= gamma_f else "continue"


def screen_with_q(q_n, gamma_f, family="gaussian"):
    """Whether Q* needs computing at this look.

    With ``Q*_n <= 1 - Q_n`` a futility stop is impossible while
    ``1 - q_n < gamma_f``, so Q* is only worth evaluating once
    ``1 - q_n >= gamma_f``.
    """
    if family not in MONOTONE_FAMILIES:
        raise ConfigError(f"family {family!r} has no declared monotone ordering; screening unavailable",
                          field="family")
    return bool(1.0 - q_n >= gamma_f)
