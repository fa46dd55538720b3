"""Confidence sequences from inverting the predictive test.

Every point ``theta*`` whose shifted predictive test has not rejected by
look ``n`` stays in the interval, so coverage holds simultaneously over all
looks with probability at least ``1 - alpha``.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize, stats

from .errors import ConfigError
from .gaussian import _check_rate
from .normal import norm_ppf, upper_quantile


@dataclass(frozen=True)
class IntervalPoint:
    n: int
    lower: float
    upper: float


def _check_look(n, n_max):
    n = np.asarray(n)
    if n_max < 1 or np.any(n < 1) or np.any(n > n_max):
        raise ConfigError("need 1 <= n <= n_max", field="n")
    return n


def ci_one_sided_mean(s_n, n, n_max, alpha, gamma):
    """Lower confidence bound for a unit-variance normal mean.

    ``I_n = S_n/n - sqrt(N) z_{1-alpha gamma}/n + sqrt(N - n) Phi^{-1}(1 - gamma)/n``.
    Equals ``-inf`` before N when ``gamma == 1``.
    """
    _check_rate("alpha", alpha)
    _check_rate("gamma", gamma, closed_right=True)
    n = _check_look(n, n_max)
    s = np.asarray(s_n, dtype=float)
    with np.errstate(invalid="ignore"):
        tail = np.where(n < n_max, np.sqrt(n_max - n) * norm_ppf(1.0 - gamma), 0.0)
    out = (s - math.sqrt(n_max) * upper_quantile(alpha * gamma) + tail) / n
    return float(out) if np.ndim(out) == 0 else out


def ci_two_sided_mean(x_bar_n, n, n_max, alpha, gamma):
    """(lower, upper) bounds of the two-sided sequence.

    ``xbar + sqrt(N-n)/n Phi^{-1}(1-gamma) - sqrt(N)/n z`` and
    ``xbar + sqrt(N-n)/n Phi^{-1}(gamma) + sqrt(N)/n z`` with
    ``z = Phi^{-1}(1 - alpha gamma / 2)``.
    """
    _check_rate("alpha", alpha)
    _check_rate("gamma", gamma)
    n = _check_look(n, n_max)
    x = np.asarray(x_bar_n, dtype=float)
    z = upper_quantile(alpha * gamma / 2)
    rest = np.sqrt(n_max - n) / n
    full = math.sqrt(n_max) / n
    lower = x + rest * norm_ppf(1.0 - gamma) - full * z
    upper = x + rest * norm_ppf(gamma) + full * z
    if np.ndim(lower) == 0:
        return float(lower), float(upper)
    return lower, upper


@lru_cache(maxsize=4096)
def kolmogorov_quantile(p, m):
    """``G_m^{-1}(p)`` for ``D_m = sup |F_m - F|`` with continuous F; 0 when m == 0."""
    if m == 0:
        return 0.0
    return float(stats.kstwo.ppf(p, m))


def simulated_kolmogorov_quantile(p, m, draws, rng):
    """Monte Carlo version of ``kolmogorov_quantile`` (cross-check)."""
    u = np.sort(rng.random((draws, m)), axis=1)
    i = np.arange(1, m + 1)
    d = np.maximum((i / m - u).max(axis=1), (u - (i - 1) / m).max(axis=1))
    return float(np.quantile(d, p))


def df_band_halfwidth(n, n_max, alpha, gamma, quantile=kolmogorov_quantile):
    """Half-width ``(N/n) G_N^{-1}(1 - alpha gamma/2) + (N/n - 1) G_{N-n}^{-1}(gamma)``.

    The second term is added: the completion can move the mixed empirical
    distribution by up to ``(N-n)/N`` times its own KS deviation, which must
    be allowed for with probability ``gamma``.
    """
    _check_rate("alpha", alpha)
    _check_rate("gamma", gamma)
    if quantile is None:
        raise ConfigError("no KS quantile oracle supplied", field="quantile")
    if not 1 <= n <= n_max:
        raise ConfigError("need 1 <= n <= n_max", field="n")
    ratio = n_max / n
    h = ratio * quantile(1.0 - alpha * gamma / 2, n_max)
    if n < n_max:
        h += (ratio - 1.0) * quantile(gamma, n_max - n)
    return h


def ci_df_band(ecdf_values, n, n_max, alpha, gamma, quantile=kolmogorov_quantile):
    """Band ``F_n(s) -/+ h`` clipped to [0, 1]; ``ecdf_values`` are F_n at the points of interest."""
    f = np.asarray(ecdf_values, dtype=float)
    h = df_band_halfwidth(n, n_max, alpha, gamma, quantile)
    return np.clip(f - h, 0.0, 1.0), np.clip(f + h, 0.0, 1.0)


@dataclass(frozen=True)
class NormalMeanInversion:
    """Boundary decomposition ``T_N = T_n + C_{N-n}(Z, theta)`` for unit-variance data."""

    def full(self, q, theta, n_max):
        return n_max * theta + math.sqrt(n_max) * q

    def rest(self, q, theta, m):
        return m * theta + math.sqrt(m) * q

    def quantile(self, p):
        return float(norm_ppf(p))


@dataclass(frozen=True)
class InvertedSet:
    intervals: list = field(default_factory=list)
    sign_changes: int = 0

    @property
    def lower(self):
        return self.intervals[0][0] if self.intervals else math.nan

    @property
    def upper(self):
        return self.intervals[-1][1] if self.intervals else math.nan

    @property
    def is_interval(self):
        return len(self.intervals) <= 1


def ci_general_invert(t_n, n, n_max, alpha, gamma, family=None, grid=None):
    """Set of theta with ``C_N(G^{-1}(1 - alpha gamma), theta) - C_{N-n}(G^{-1}(1 - gamma), theta) >= T_n``.

    ``family`` must provide ``full``, ``rest`` and ``quantile``. Roots of the
    boundary are located on ``grid`` and polished with Brent's method.
    """
    family = NormalMeanInversion() if family is None else family
    for attr in ("full", "rest", "quantile"):
        if not callable(getattr(family, attr, None)):
            raise ConfigError(f"family lacks a boundary decomposition ({attr})", field="family")
    _check_rate("alpha", alpha)
    _check_rate("gamma", gamma)
    _check_look(n, n_max)
    qa = family.quantile(1.0 - alpha * gamma)
    qb = family.quantile(1.0 - gamma)

    def h(theta):
        rest = family.rest(qb, theta, n_max - n) if n < n_max else 0.0
        return family.full(qa, theta, n_max) - rest - t_n

    if grid is None:
        centre = t_n / n
        scale = math.sqrt(n_max) / n + 1.0
        grid = np.linspace(centre - 60 * scale, centre + 60 * scale, 4001)
    grid = np.asarray(grid, dtype=float)
    vals = np.array([h(th) for th in grid])
    inside = vals >= 0
    changes = np.flatnonzero(inside[1:] != inside[:-1])
    roots = [optimize.brentq(h, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-15) for i in changes]
    edges = [-math.inf, *roots, math.inf]
    intervals = []
    state = bool(inside[0])
    for lo, hi in zip(edges[:-1], edges[1:]):
        if state:
            intervals.append((lo, hi))
        state = not state
    return InvertedSet(intervals, int(changes.size))
