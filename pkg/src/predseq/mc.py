"""Monte Carlo completion of the unobserved tail.

A Q evaluation needs three pieces:

``sampler(summary, k, rng)``
    draws ``k`` completions of the missing observations under the (possibly
    plug-in) null, returned in whatever form the statistic understands;
``statistic(summary, completions)``
    maps the observed summary plus each completion to the final test
    statistic, vectorised over the ``k`` completions;
``Region``
    the predictive critical region at level ``alpha_tilde``.

``estimate_q`` counts how often the completed statistic lands in the region.
The samplers for the plug-in nulls (pooled normal, pooled Bernoulli and the
constrained-MLE scheme) live here as well.
"""

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError

DEFAULT_B = 10_000
_CHUNK = 50_000


@dataclass(frozen=True)
class QEstimate:
    q_hat: float
    b: int
    std_err: float

    @classmethod
    def from_hits(cls, hits, b):
        q = hits / b
        return cls(float(q), int(b), math.sqrt(q * (1.0 - q) / b))

    @classmethod
    def exact(cls, q):
        """A value known without simulation (closed form or final indicator)."""
        return cls(float(q), 0, 0.0)


@dataclass(frozen=True)
class Region:
    """Critical region for a scalar statistic.

    kind is ``"upper"`` (T > c), ``"lower"`` (T < c), ``"two_sided"``
    (|T| > c) or ``"everything"``. With ``strict=False`` the inequalities
    become non-strict.
    """

    kind: str
    c: float = 0.0
    strict: bool = True

    def __post_init__(self):
        if self.kind not in ("upper", "lower", "two_sided", "everything"):
            raise ConfigError(f"unknown region kind {self.kind!r}", field="region")

    def contains(self, t):
        t = np.asarray(t)
        if self.kind == "everything":
            return np.ones(t.shape, dtype=bool)
        if self.kind == "two_sided":
            t = np.abs(t)
        if self.kind == "lower":
            return t < self.c if self.strict else t <= self.c
        return t > self.c if self.strict else t >= self.c


def estimate_q(summary, sampler, statistic, region, b, rng, *, complement=False, chunk=_CHUNK):
    """Fraction of ``b`` null completions whose final statistic falls in ``region``.

    With ``complement=True`` counts completions *outside* the region (used for
    the updated Type-II error). Deterministic given the state of ``rng``.
    """
    if b < 1:
        raise ConfigError(f"need at least one replicate, got {b}", field="b")
    hits = 0
    remaining = int(b)
    while remaining:
        k = min(chunk, remaining)
        stats = np.asarray(statistic(summary, sampler(summary, k, rng)))
        if stats.shape == ():
            stats = np.full(k, stats)
        inside = region.contains(stats)
        hits += int(np.count_nonzero(inside != complement))
        remaining -= k
    return QEstimate.from_hits(hits, b)


@dataclass
class CalibrationResult:
    c: float
    target_level: float
    achieved_level_estimate: float
    b_cal: int
    strict: bool = True
    family: str = ""
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def to_json(self):
        record = asdict(self)
        record["alpha_tilde"] = record.pop("target_level")
        return json.dumps(record, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        record = json.loads(text)
        record["target_level"] = record.pop("alpha_tilde")
        return cls(**record)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def conservative_critical_value(stats, level, strict=True):
    """Smallest order statistic whose empirical exceedance is at most ``level``.

    For a strict region (T > c) the exceedance is ``#(T > c)``; for a
    non-strict one (T >= c) the cut is nudged one ulp above the order
    statistic so that ties count against rejection.
    """
    s = np.sort(np.asarray(stats, dtype=float))
    b = s.size
    allowed = int(math.floor(level * b + 1e-9))
    c = s[b - allowed - 1] if allowed < b else -np.inf
    if not strict:
        c = np.nextafter(c, np.inf)
        exceed = np.count_nonzero(s >= c)
    else:
        exceed = np.count_nonzero(s > c)
    return float(c), exceed / b


def calibrate_critical_value(null_generator, statistic, alpha_tilde, b_cal, rng, *, strict=True,
                             family="", params=None, seed=None, chunk=_CHUNK):
    """Critical value from ``b_cal`` simulated full-sample null statistics.

    ``null_generator(k, rng)`` simulates ``k`` complete null experiments;
    ``statistic`` maps them to test statistics (pass ``None`` when the
    generator already returns statistics).
    """
    if not 0.0 < alpha_tilde < 1.0:
        raise ConfigError(f"must lie in (0, 1), got {alpha_tilde}", field="alpha_tilde")
    floor = math.ceil(10.0 / alpha_tilde)
    if b_cal < floor:
        raise NumericalError(f"b_cal={b_cal} too small to resolve a {alpha_tilde} tail; need >= {floor}")
    parts = []
    remaining = int(b_cal)
    while remaining:
        k = min(chunk, remaining)
        sims = null_generator(k, rng)
        parts.append(np.asarray(sims if statistic is None else statistic(sims), dtype=float))
        remaining -= k
    stats = np.concatenate(parts)
    c, achieved = conservative_critical_value(stats, alpha_tilde, strict=strict)
    return CalibrationResult(c, alpha_tilde, achieved, int(b_cal), strict, family, dict(params or {}), seed)


# ---------------------------------------------------------------- simple null


def gaussian_completion(n, n_max, theta=0.0, sigma=1.0):
    """Sampler drawing the ``n_max - n`` missing unit-variance observations."""

    def sampler(summary, k, rng):
        return theta + sigma * rng.standard_normal((k, n_max - n))

    return sampler


def sum_statistic(summary, tail):
    """Completed running sum ``t_n + sum(tail)``."""
    return summary["t"] + tail.sum(axis=1)


# ------------------------------------------------------ pooled normal plug-in


def pooled_normal_summary(x, y):
    """Running moments (Welford form) of two paired arms."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ConfigError("paired arms must have equal length", field="observations")
    n = x.size
    if n == 0:
        return {"n": 0, "mean_x": 0.0, "m2_x": 0.0, "mean_y": 0.0, "m2_y": 0.0}
    return {
        "n": int(n),
        "mean_x": float(x.mean()),
        "m2_x": float(((x - x.mean()) ** 2).sum()),
        "mean_y": float(y.mean()),
        "m2_y": float(((y - y.mean()) ** 2).sum()),
    }


def pooled_normal_update(summary, x, y):
    n = summary["n"] + 1
    out = dict(summary, n=n)
    for arm, v in (("x", float(x)), ("y", float(y))):
        mean = summary[f"mean_{arm}"]
        delta = v - mean
        mean += delta / n
        out[f"mean_{arm}"] = mean
        out[f"m2_{arm}"] = summary[f"m2_{arm}"] + delta * (v - mean)
    return out


def pooled_moments(summary):
    """Pooled mean and pooled variance ``(n-1)(S2_x + S2_y)/(2n-2)``."""
    n = summary["n"]
    if n < 2:
        raise NumericalError("pooled variance needs at least two pairs")
    theta_bar = 0.5 * (summary["mean_x"] + summary["mean_y"])
    s2 = (summary["m2_x"] + summary["m2_y"]) / (2.0 * n - 2.0)
    return theta_bar, s2


def pooled_normal_step(summary, *, floor=False):
    """Generator of the next (x, y) pair under the plug-in normal null."""
    theta_bar, s2 = pooled_moments(summary)
    if s2 <= 0.0:
        if not floor:
            raise NumericalError("pooled variance is zero; plug-in null is degenerate")
        warnings.warn("pooled variance is zero; flooring at machine epsilon", RuntimeWarning)
        s2 = np.finfo(float).eps
    s = math.sqrt(s2)

    def draw(rng):
        return theta_bar + s * rng.standard_normal(), theta_bar + s * rng.standard_normal()

    return draw


def pooled_t_statistic(mean_x, m2_x, mean_y, m2_y, n):
    """``(xbar - ybar) / (S_N sqrt(2/N))`` with the pooled standard deviation."""
    sp = np.sqrt((np.asarray(m2_x) + np.asarray(m2_y)) / (2.0 * n - 2.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (np.asarray(mean_x) - np.asarray(mean_y)) / (sp * math.sqrt(2.0 / n))
    return np.where(sp > 0, t, 0.0)


def _advance_pooled_normal(mx, m2x, my, m2y, n_from, n_to, rng):
    """Run the plug-in scheme on arrays of paths from ``n_from`` pairs to ``n_to``."""
    eps = np.finfo(float).eps
    for n in range(n_from, n_to):
        theta_bar = 0.5 * (mx + my)
        s2 = (m2x + m2y) / (2.0 * n - 2.0)
        if np.any(s2 <= 0.0):
            warnings.warn("pooled variance is zero on some paths; flooring", RuntimeWarning)
            s2 = np.maximum(s2, eps)
        s = np.sqrt(s2)
        k = mx.shape[0]
        x = theta_bar + s * rng.standard_normal(k)
        y = theta_bar + s * rng.standard_normal(k)
        m = n + 1
        dx = x - mx
        mx = mx + dx / m
        m2x = m2x + dx * (x - mx)
        dy = y - my
        my = my + dy / m
        m2y = m2y + dy * (y - my)
    return mx, m2x, my, m2y


def pooled_normal_sampler(n_max):
    """Sampler completing both arms to ``n_max`` pairs; returns final moments."""

    def sampler(summary, k, rng):
        n = summary["n"]
        if n < 2:
            raise NumericalError("plug-in completion needs at least two observed pairs")
        arrays = [np.full(k, float(summary[key])) for key in ("mean_x", "m2_x", "mean_y", "m2_y")]
        return _advance_pooled_normal(*arrays, n, n_max, rng)

    return sampler


def pooled_normal_final_statistic(n_max):
    def statistic(summary, moments):
        return pooled_t_statistic(*moments, n_max)

    return statistic


def pooled_normal_null(n_max, n_start=2):
    """Null experiments for calibration: ``n_start`` standard normal pairs, then plug-in."""

    def generate(k, rng):
        x = rng.standard_normal((k, n_start))
        y = rng.standard_normal((k, n_start))
        mx, my = x.mean(1), y.mean(1)
        m2x = ((x - mx[:, None]) ** 2).sum(1)
        m2y = ((y - my[:, None]) ** 2).sum(1)
        moments = _advance_pooled_normal(mx, m2x, my, m2y, n_start, n_max, rng)
        return pooled_t_statistic(*moments, n_max)

    return generate


# --------------------------------------------------- pooled Bernoulli plug-in


def bernoulli_statistic(s_x, s_y, n):
    """``|S_X - S_Y| / sqrt(2 N p(1-p))``; zero when the pooled rate is 0 or 1."""
    s_x = np.asarray(s_x, dtype=float)
    s_y = np.asarray(s_y, dtype=float)
    p = (s_x + s_y) / (2.0 * n)
    denom = np.sqrt(2.0 * n * p * (1.0 - p))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.abs(s_x - s_y) / denom
    return np.where(denom > 0, t, 0.0)


def pooled_rate(summary):
    n = summary["n"]
    if n < 1:
        raise NumericalError("pooled rate needs at least one pair")
    return (summary["s_x"] + summary["s_y"]) / (2.0 * n)


def pooled_bernoulli_step(summary):
    """Generator of the next (x, y) pair, both Bernoulli at the pooled rate."""
    p = pooled_rate(summary)

    def draw(rng):
        return int(rng.random() < p), int(rng.random() < p)

    return draw


def _advance_bernoulli(s_x, s_y, n_from, n_to, rng):
    for n in range(n_from, n_to):
        p = (s_x + s_y) / (2.0 * n)
        s_x = s_x + (rng.random(s_x.shape) < p)
        s_y = s_y + (rng.random(s_y.shape) < p)
    return s_x, s_y


def pooled_bernoulli_sampler(n_max):
    def sampler(summary, k, rng):
        n = summary["n"]
        if n < 1:
            raise NumericalError("plug-in completion needs at least one observed pair")
        s_x = np.full(k, int(summary["s_x"]), dtype=np.int64)
        s_y = np.full(k, int(summary["s_y"]), dtype=np.int64)
        return _advance_bernoulli(s_x, s_y, n, n_max, rng)

    return sampler


def bernoulli_final_statistic(n_max):
    def statistic(summary, sums):
        return bernoulli_statistic(sums[0], sums[1], n_max)

    return statistic


def pooled_bernoulli_null(n_max, n0=5):
    """Calibration experiments: ``n0`` pairs at p = 1/2, then the plug-in scheme."""

    def generate(k, rng):
        s_x = rng.binomial(n0, 0.5, size=k).astype(np.int64)
        s_y = rng.binomial(n0, 0.5, size=k).astype(np.int64)
        s_x, s_y = _advance_bernoulli(s_x, s_y, n0, n_max, rng)
        return bernoulli_statistic(s_x, s_y, n_max)

    return generate


# ----------------------------------------------------- constrained-MLE scheme
#
# Normal mean, unit variance, H0: theta <= 0. Before observation i the
# constrained fits are theta_hat = min(0, mean) (null) and
# theta_tilde = max(0, mean) (alternative), both 0 before any data.


def _log_ratio_increment(x, mean_prev):
    """``log N(x | theta_tilde) - log N(x | theta_hat)`` given the previous mean."""
    tilde = np.maximum(0.0, mean_prev)
    hat = np.minimum(0.0, mean_prev)
    return x * (tilde - hat) - 0.5 * (tilde * tilde - hat * hat)


def mle_summary(values):
    """Running sum and accumulated log density ratio over an observed path."""
    total = 0.0
    log_ratio = 0.0
    for i, x in enumerate(values):
        mean_prev = total / i if i else 0.0
        log_ratio += float(_log_ratio_increment(x, mean_prev))
        total += x
    return {"n": len(values), "sum": total, "log_ratio": log_ratio}


def mle_update(summary, x):
    n = summary["n"]
    mean_prev = summary["sum"] / n if n else 0.0
    return {
        "n": n + 1,
        "sum": summary["sum"] + float(x),
        "log_ratio": summary["log_ratio"] + float(_log_ratio_increment(float(x), mean_prev)),
    }


def mle_ratio_statistic(path):
    """Log of the product of predictive density ratios over a full path."""
    return mle_summary(list(np.asarray(path, dtype=float)))["log_ratio"]


def constrained_mle_step(history):
    """Generator of the next value ``~ N(theta_hat_n, 1)`` given all values so far."""
    history = np.asarray(history, dtype=float)
    hat = min(0.0, float(history.mean())) if history.size else 0.0

    def draw(rng):
        return hat + rng.standard_normal()

    return draw


def mle_sampler(n_max):
    """Completes the path, refitting both constrained means as values accrue.

    Returns the final log density-ratio for each completion.
    """

    def sampler(summary, k, rng):
        n = summary["n"]
        total = np.full(k, float(summary["sum"]))
        log_ratio = np.full(k, float(summary["log_ratio"]))
        for i in range(n, n_max):
            mean_prev = total / i if i else np.zeros(k)
            x = np.minimum(0.0, mean_prev) + rng.standard_normal(k)
            log_ratio += _log_ratio_increment(x, mean_prev)
            total += x
        return log_ratio

    return sampler


def mle_final_statistic(summary, log_ratio):
    return log_ratio


# --------------------------------------------------------------- group means


def group_mean_z(x_mean, y_mean, m_x, m_y, s2_x, s2_y, *, unequal=False):
    """Standardised difference of two group means.

    Uses the pooled per-outcome variance by default; ``unequal=True`` switches
    the denominator to ``sqrt(s2_x/m_x + s2_y/m_y)``.
    """
    if m_x < 2 or m_y < 2:
        raise ConfigError("each group mean needs at least two outcomes", field="m")
    if unequal:
        denom = math.sqrt(s2_x / m_x + s2_y / m_y)
    else:
        s2 = ((m_x - 1) * s2_x + (m_y - 1) * s2_y) / (m_x + m_y - 2)
        denom = math.sqrt(s2) * math.sqrt(1.0 / m_x + 1.0 / m_y)
    diff = x_mean - y_mean
    if denom == 0.0:
        if diff == 0.0:
            return 0.0
        raise NumericalError("zero within-group variance with unequal means")
    return diff / denom
