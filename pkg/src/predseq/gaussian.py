"""Closed-form predictive rejection probabilities for normal-mean tests.

All statistics are on the running-sum scale: ``t_n = X_1 + ... + X_n`` for unit
variance data (divide by sigma before calling). The fixed-sample test at the
planned size ``n_max`` uses the predictive level ``alpha_tilde``.

Quantile convention: ``upper_quantile(p)`` is ``Phi^{-1}(1 - p)``; the lower
quantile ``Phi^{-1}(p)`` is written ``norm_ppf(p)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .normal import norm_cdf, norm_ppf, norm_sf, upper_quantile


def _check_rate(name, value, *, closed_right=False):
    ok = 0.0 < value <= 1.0 if closed_right else 0.0 < value < 1.0
    if not ok:
        interval = "(0, 1]" if closed_right else "(0, 1)"
        raise ConfigError(f"must lie in {interval}, got {value!r}", field=name)


def _check_interim(n, n_max):
    n = np.asarray(n)
    if n_max < 1:
        raise ConfigError(f"must be >= 1, got {n_max}", field="n_max")
    if np.any(n < 0) or np.any(n >= n_max):
        raise ConfigError(
            "closed form needs 0 <= n < n_max; use the final indicator at n == n_max",
            field="n",
        )
    return n


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def q_one_sided(t_n, n, n_max, alpha_tilde):
    """Q_n for H0: theta = 0 against theta > 0 with unit variance.

    ``Q_n = 1 - Phi((sqrt(N) z - t_n) / sqrt(N - n))`` where ``z`` is the upper
    ``alpha_tilde`` quantile. Vectorised over ``t_n`` and ``n``.
    """
    _check_rate("alpha_tilde", alpha_tilde)
    n = _check_interim(n, n_max)
    z = upper_quantile(alpha_tilde)
    x = (math.sqrt(n_max) * z - np.asarray(t_n, dtype=float)) / np.sqrt(n_max - n)
    return _scalar(norm_sf(x))


def q_two_sided(t_n, n, n_max, alpha_tilde):
    """Q_n for H0: theta = 0 against theta != 0 (two tails of mass alpha_tilde/2)."""
    _check_rate("alpha_tilde", alpha_tilde)
    n = _check_interim(n, n_max)
    c = math.sqrt(n_max) * upper_quantile(alpha_tilde / 2)
    t = np.asarray(t_n, dtype=float)
    d = np.sqrt(n_max - n)
    return _scalar(norm_sf((c - t) / d) + norm_cdf((-c - t) / d))


def q_two_sample_known_var(diff_sum, n, n_max, alpha_tilde):
    """Q_n for two arms with paired accrual and known unit variance.

    ``diff_sum`` is ``n * (xbar_n - ybar_n)``; each future pair adds a
    difference with variance 2.
    """
    _check_rate("alpha_tilde", alpha_tilde)
    n = _check_interim(n, n_max)
    c_total = n_max * two_sample_critical_value(n_max, alpha_tilde)
    t = np.asarray(diff_sum, dtype=float)
    d = np.sqrt(2.0 * (n_max - n))
    return _scalar(norm_sf((c_total - t) / d) + norm_cdf((-c_total - t) / d))


def two_sample_critical_value(n_max, alpha_tilde):
    """Cut-off on ``|xbar_N - ybar_N|``: ``z_{alpha_tilde/2} * sqrt(2/N)``."""
    return upper_quantile(alpha_tilde / 2) * math.sqrt(2.0 / n_max)


def q_one_sided_composite_boundary(t_n, n, n_max, alpha_tilde, theta0=0.0):
    """Q_n for H0: theta <= theta0, completing with draws at the boundary theta0.

    Under the composite null this is a supermartingale rather than a
    martingale; the stopped Type-I error is still at most alpha_tilde/gamma.
    """
    n_arr = np.asarray(n)
    return q_one_sided(np.asarray(t_n, dtype=float) - n_arr * theta0, n, n_max, alpha_tilde)


def final_reject_one_sided(t_n, n_max, alpha_tilde):
    return np.asarray(t_n) > math.sqrt(n_max) * upper_quantile(alpha_tilde)


def final_reject_two_sided(t_n, n_max, alpha_tilde):
    return np.abs(np.asarray(t_n)) > math.sqrt(n_max) * upper_quantile(alpha_tilde / 2)


def final_reject_two_sample(diff_sum, n_max, alpha_tilde):
    return np.abs(np.asarray(diff_sum)) > n_max * two_sample_critical_value(n_max, alpha_tilde)


def q_paths(sums, n_max, alpha_tilde, sides="one"):
    """Q_1..Q_N for a batch of running-sum paths (shape ``(R, n_max)``).

    The last column is the final indicator. Used by the simulation harness.
    """
    sums = np.asarray(sums, dtype=float)
    if sums.shape[-1] != n_max:
        raise ValueError(f"expected paths of length {n_max}, got {sums.shape[-1]}")
    out = np.empty_like(sums)
    n = np.arange(1, n_max)
    if sides == "one":
        if n_max > 1:
            out[..., :-1] = q_one_sided(sums[..., :-1], n, n_max, alpha_tilde)
        out[..., -1] = final_reject_one_sided(sums[..., -1], n_max, alpha_tilde)
    elif sides == "two":
        if n_max > 1:
            out[..., :-1] = q_two_sided(sums[..., :-1], n, n_max, alpha_tilde)
        out[..., -1] = final_reject_two_sided(sums[..., -1], n_max, alpha_tilde)
    else:
        raise ConfigError(f"unknown sides {sides!r}", field="sides")
    return out


def rejection_boundary(n, n_max, alpha, gamma):
    """Running-sum threshold equivalent to ``Q_n >= gamma`` (one-sided test).

    ``T_n >= sqrt(N) z_{1-alpha*gamma} - sqrt(N-n) Phi^{-1}(1-gamma)``.
    Infinite for every ``n < N`` when ``gamma == 1``.
    """
    _check_rate("alpha", alpha)
    _check_rate("gamma", gamma, closed_right=True)
    n = np.asarray(n)
    if np.any(n < 1) or np.any(n >= n_max):
        raise ConfigError("boundary defined for 1 <= n < n_max", field="n")
    lower_gamma = norm_ppf(1.0 - gamma)  # -inf at gamma == 1
    b = math.sqrt(n_max) * upper_quantile(alpha * gamma) - np.sqrt(n_max - n) * lower_gamma
    return _scalar(b)


def design_theta(n, level, power):
    """Standardised effect giving ``power`` for the one-sided test at (n, level)."""
    _check_rate("level", level)
    _check_rate("power", power)
    return float((upper_quantile(level) + norm_ppf(power)) / math.sqrt(n))


def power_fixed(theta, n, level):
    """Power ``1 - Phi(z_{1-level} - sqrt(n) theta)`` of the fixed one-sided test."""
    _check_rate("level", level)
    if n < 1:
        raise ConfigError(f"must be >= 1, got {n}", field="n")
    return _scalar(norm_sf(upper_quantile(level) - math.sqrt(n) * np.asarray(theta, dtype=float)))


def power_bound_sequential(theta, n_max, alpha, gamma):
    """Lower bound on the predictive test's power: the final look alone at level alpha*gamma."""
    _check_rate("alpha", alpha)
    _check_rate("gamma", gamma, closed_right=True)
    return power_fixed(theta, n_max, alpha * gamma)


def tightened_power(alpha, gamma, power):
    """Approximate power at the design alternative after tightening alpha to alpha*gamma.

    Same N; the critical value moves up by ``z_{1-alpha*gamma} - z_{1-alpha}``.
    """
    _check_rate("alpha", alpha)
    _check_rate("gamma", gamma, closed_right=True)
    _check_rate("power", power)
    shift = upper_quantile(alpha * gamma) - upper_quantile(alpha)
    return float(norm_cdf(norm_ppf(power) - shift))


def inflate_sample_size(n_fixed, alpha, gamma, beta_power):
    """Smallest N' keeping the design power once the level is tightened to alpha*gamma.

    ``N' = N ((z_{1-alpha*gamma} + z_beta) / (z_{1-alpha} + z_beta))^2``, rounded up.
    """
    if n_fixed < 1:
        raise ConfigError(f"must be >= 1, got {n_fixed}", field="n_fixed")
    _check_rate("alpha", alpha)
    _check_rate("gamma", gamma, closed_right=True)
    _check_rate("beta_power", beta_power)
    zb = norm_ppf(beta_power)
    ratio = (upper_quantile(alpha * gamma) + zb) / (upper_quantile(alpha) + zb)
    exact = n_fixed * ratio * ratio
    # guard against 509.0000000001 style rounding
    return max(int(n_fixed), int(math.ceil(exact - 1e-9)))


def stopping_tail_bound(m, n_max, alpha, gamma, theta_star):
    """Lower bound on ``P(tau <= m)`` when the data have mean ``theta_star``.

    ``{Q_k >= gamma}`` implies ``{tau <= m}`` for every ``k <= m``, and
    ``P(Q_k >= gamma) = 1 - Phi((b_k - k theta*) / sqrt(k))`` with ``b_k`` the
    rejection boundary. Returns the running maximum over ``k <= m``, so the
    bound is nondecreasing in ``m``.
    """
    _check_rate("alpha", alpha)
    _check_rate("gamma", gamma, closed_right=True)
    if theta_star <= 0:
        raise ConfigError(f"must be positive, got {theta_star}", field="theta_star")
    m_arr = np.atleast_1d(np.asarray(m))
    if np.any(m_arr < 1) or np.any(m_arr > n_max):
        raise ConfigError("need 1 <= m <= n_max", field="m")
    k = np.arange(1, int(m_arr.max()) + 1)
    z = upper_quantile(alpha * gamma)
    boundary = np.empty(k.shape, dtype=float)
    interim = k < n_max
    if gamma == 1.0:
        boundary[interim] = np.inf
    else:
        boundary[interim] = math.sqrt(n_max) * z - np.sqrt(n_max - k[interim]) * norm_ppf(1.0 - gamma)
    boundary[~interim] = math.sqrt(n_max) * z
    p = norm_sf((boundary - k * theta_star) / np.sqrt(k))
    running = np.maximum.accumulate(p)
    return _scalar(running[m_arr - 1] if np.ndim(m) else running[int(m) - 1])


@dataclass(frozen=True)
class DesignPoint:
    theta_star: float
    beta_power: float
    alpha: float
    gamma: float
    n_fixed: int
    n_inflated: int

    def __post_init__(self):
        if self.n_inflated < self.n_fixed:
            raise ConfigError("n_inflated must be >= n_fixed", field="n_inflated")

    @classmethod
    def plan(cls, n_fixed, alpha, gamma, beta_power, theta_star=None):
        if theta_star is None:
            theta_star = design_theta(n_fixed, alpha, beta_power)
        n_inflated = inflate_sample_size(n_fixed, alpha, gamma, beta_power)
        return cls(theta_star, beta_power, alpha, gamma, int(n_fixed), n_inflated)

    @property
    def alpha_tilde(self):
        return self.alpha * self.gamma

    @property
    def extra(self):
        return self.n_inflated - self.n_fixed

    @property
    def percent_increase(self):
        return 100.0 * self.extra / self.n_fixed

    def fixed_power(self):
        return power_fixed(self.theta_star, self.n_fixed, self.alpha)

    def sequential_power_bound(self):
        return power_bound_sequential(self.theta_star, self.n_inflated, self.alpha, self.gamma)
