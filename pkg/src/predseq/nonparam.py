"""Distribution-free predictive tests.

* one-sample Kolmogorov-Smirnov with completions drawn from F0;
* two-sample KS indexed by calendar time, unobserved subjects completed
  uniformly on (t, T);
* log-rank on monthly-binned censored survival data;
* discrete-period and continuous-time two-group event comparisons.

Time-indexed evaluators take the observed data up to ``t`` and return a
``QEstimate``; at ``t >= horizon`` they return the final indicator.
"""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError, DataError
from .mc import QEstimate, conservative_critical_value

_CHUNK = 20_000


class Ecdf:
    """Right-continuous empirical distribution function."""

    def __init__(self, values):
        v = np.sort(np.asarray(values, dtype=float).ravel())
        if v.size == 0:
            raise DataError("empirical distribution needs at least one value")
        if np.isnan(v).any():
            raise DataError("NaN in sample")
        self.values = v

    @property
    def size(self):
        return self.values.size

    @property
    def support(self):
        return np.unique(self.values)

    def count_le(self, u):
        return np.searchsorted(self.values, u, side="right")

    def __call__(self, u):
        return self.count_le(u) / self.size

    def mixture(self, other):
        """``(n F_n + m F'_m) / (n + m)`` as a callable, computed from integer counts."""
        total = self.size + other.size

        def evaluate(u):
            return (self.count_le(u) + other.count_le(u)) / total

        return evaluate


# ---------------------------------------------------------------- one-sample


def ks_one_sample_statistic(u):
    """``sup |F_N - F0|`` given probability-transformed values ``u = F0(x)``.

    Works row-wise on a 2-D array.
    """
    u = np.sort(np.asarray(u, dtype=float), axis=-1)
    n = u.shape[-1]
    i = np.arange(1, n + 1)
    return np.maximum((i / n - u).max(axis=-1), (u - (i - 1) / n).max(axis=-1))


def ks1_critical_value(n_max, level):
    """Exact cut with ``P(D_N >= c) = level`` for a continuous F0."""
    return float(stats.kstwo.isf(level, n_max))


def ks1_q(observed, n_max, c, b, rng, cdf=None):
    """Q estimate for the one-sample KS test.

    ``observed`` holds the raw values (mapped through ``cdf``) or, with
    ``cdf=None``, values already on the uniform scale. Completions are iid
    uniforms, which is F0 after the probability integral transform.
    """
    if c <= 0:
        raise ConfigError(f"must be positive, got {c}", field="c")
    obs = np.asarray(observed, dtype=float).ravel()
    u_obs = obs if cdf is None else np.asarray(cdf(obs), dtype=float)
    n = u_obs.size
    if n > n_max:
        raise DataError(f"{n} observations exceed n_max={n_max}")
    if n == n_max:
        return QEstimate.exact(float(ks_one_sample_statistic(u_obs) >= c))
    hits = 0
    remaining = b
    while remaining:
        k = min(_CHUNK, remaining)
        tail = rng.random((k, n_max - n))
        full = np.concatenate([np.broadcast_to(u_obs, (k, n)), tail], axis=1)
        hits += int(np.count_nonzero(ks_one_sample_statistic(full) >= c))
        remaining -= k
    return QEstimate.from_hits(hits, b)


# ---------------------------------------------------------------- two-sample


def ks2_statistic(x, y):
    """Two-sample KS distance; the sup runs over all jump points, ties included."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size == 0 or y.size == 0:
        raise DataError("both samples must be non-empty")
    points = np.union1d(x, y)
    fx = np.searchsorted(np.sort(x), points, side="right") / x.size
    fy = np.searchsorted(np.sort(y), points, side="right") / y.size
    return float(np.abs(fx - fy).max())


def ks2_critical_value(n, m, level=0.05):
    """Asymptotic cut ``K^{-1}(1 - level) sqrt((n + m) / (n m))``; K is the Kolmogorov law."""
    return float(stats.kstwobign.isf(level) * math.sqrt((n + m) / (n * m)))


def _observed_sup(x, y, n_total, m_total):
    if x.size == 0 and y.size == 0:
        return 0.0
    points = np.union1d(x, y)
    fx = np.searchsorted(np.sort(x), points, side="right") / n_total
    fy = np.searchsorted(np.sort(y), points, side="right") / m_total
    return float(np.abs(fx - fy).max())


def _completion_sup(offset, a, bcount, n_total, m_total, t, horizon, k, rng):
    """Sup over u > t of |F - G| for k uniform completions on (t, horizon)."""
    if a + bcount == 0:
        return np.zeros(k)
    vals = rng.uniform(t, horizon, size=(k, a + bcount))
    steps = np.concatenate([np.full(a, 1.0 / n_total), np.full(bcount, -1.0 / m_total)])
    order = np.argsort(vals, axis=1)
    path = offset + np.cumsum(steps[order], axis=1)
    return np.abs(path).max(axis=1)


def _check_time_sample(name, values, t, size):
    v = np.asarray(values, dtype=float).ravel()
    if np.isnan(v).any():
        raise DataError(f"NaN in {name}")
    if (v < 0).any():
        raise DataError(f"negative event time in {name}")
    if (v > t).any():
        raise DataError(f"{name} has values beyond the analysis time {t}")
    if v.size > size:
        raise DataError(f"{name}: {v.size} observed events exceed group size {size}")
    return v


def ks2_q_time(x_obs, y_obs, t, n_total, m_total, horizon, c, b, rng):
    """Q estimate at time ``t`` for the two-sample KS test on event times.

    Subjects without an event by ``t`` get times drawn uniformly on
    ``(t, horizon)``; rejection is ``D >= c``.
    """
    if not 0.0 < horizon:
        raise ConfigError("horizon must be positive", field="horizon")
    if t < 0:
        raise DataError(f"negative analysis time {t}")
    t_eff = min(t, horizon)
    x = _check_time_sample("x", x_obs, t_eff, n_total)
    y = _check_time_sample("y", y_obs, t_eff, m_total)
    d_obs = _observed_sup(x, y, n_total, m_total)
    a, bb = n_total - x.size, m_total - y.size
    if t >= horizon or (a == 0 and bb == 0):
        return QEstimate.exact(float(d_obs >= c))
    if d_obs >= c:
        return QEstimate.from_hits(b, b)
    offset = x.size / n_total - y.size / m_total
    hits = 0
    remaining = b
    while remaining:
        k = min(_CHUNK, remaining)
        d = np.maximum(d_obs, _completion_sup(offset, a, bb, n_total, m_total, t, horizon, k, rng))
        hits += int(np.count_nonzero(d >= c))
        remaining -= k
    return QEstimate.from_hits(hits, b)


def continuous_event_q_t(x_obs, y_obs, t, n_per_group, c, b, rng):
    """Two groups of ``n_per_group`` event times on (0, 1]; strict ``D > c`` region."""
    if not 0.0 <= t:
        raise DataError(f"negative analysis time {t}")
    t_eff = min(t, 1.0)
    x = _check_time_sample("x", x_obs, t_eff, n_per_group)
    y = _check_time_sample("y", y_obs, t_eff, n_per_group)
    d_obs = _observed_sup(x, y, n_per_group, n_per_group)
    a, bb = n_per_group - x.size, n_per_group - y.size
    if t >= 1.0 or (a == 0 and bb == 0):
        return QEstimate.exact(float(d_obs > c))
    offset = (x.size - y.size) / n_per_group
    hits = 0
    remaining = b
    while remaining:
        k = min(_CHUNK, remaining)
        d = np.maximum(d_obs, _completion_sup(offset, a, bb, n_per_group, n_per_group, t, 1.0, k, rng))
        hits += int(np.count_nonzero(d > c))
        remaining -= k
    return QEstimate.from_hits(hits, b)


def ks2_null_statistics(n, m, k, rng):
    """Null draws of the two-sample KS distance (continuous data, no ties)."""
    return _completion_sup(0.0, n, m, n, m, 0.0, 1.0, k, rng)


def continuous_event_critical_value(n_per_group, alpha_tilde, b_cal, rng):
    stats_ = np.concatenate([
        ks2_null_statistics(n_per_group, n_per_group, min(_CHUNK, b_cal - i), rng)
        for i in range(0, b_cal, _CHUNK)
    ])
    return conservative_critical_value(stats_, alpha_tilde, strict=True)


# ----------------------------------------------------------------- log-rank


@dataclass(frozen=True)
class EventTable:
    """Monthly death and censoring counts for groups X (row 0) and Y (row 1)."""

    deaths: np.ndarray
    censored: np.ndarray
    group_sizes: tuple

    def __post_init__(self):
        d = np.asarray(self.deaths, dtype=np.int64)
        cz = np.asarray(self.censored, dtype=np.int64)
        object.__setattr__(self, "deaths", d)
        object.__setattr__(self, "censored", cz)
        object.__setattr__(self, "group_sizes", tuple(int(g) for g in self.group_sizes))
        if d.ndim != 2 or d.shape[0] != 2 or d.shape != cz.shape:
            raise DataError("event table must have shape (2, J) for deaths and censoring")
        if (d < 0).any() or (cz < 0).any():
            raise DataError("negative event counts")
        if (self.at_risk_after() < 0).any():
            raise DataError("events exceed the group size")

    @property
    def n_periods(self):
        return self.deaths.shape[1]

    def at_risk(self):
        """m_g(j): number at risk at the start of month j."""
        sizes = np.asarray(self.group_sizes, dtype=np.int64)[:, None]
        leaving = self.deaths + self.censored
        before = np.cumsum(leaving, axis=1) - leaving
        return sizes - before

    def at_risk_after(self):
        sizes = np.asarray(self.group_sizes, dtype=np.int64)[:, None]
        return sizes - np.cumsum(self.deaths + self.censored, axis=1)

    @classmethod
    def empty(cls, group_sizes, n_periods):
        z = np.zeros((2, n_periods), dtype=np.int64)
        return cls(z, z.copy(), group_sizes)

    @classmethod
    def from_records(cls, groups, months, events, group_sizes, n_periods):
        groups = np.asarray(groups, dtype=np.int64)
        months = np.asarray(months, dtype=np.int64)
        events = np.asarray(events, dtype=bool)
        if ((months < 1) | (months > n_periods)).any():
            raise DataError(f"months must lie in 1..{n_periods}")
        if ((groups < 0) | (groups > 1)).any():
            raise DataError("group index must be 0 or 1")
        deaths = np.zeros((2, n_periods), dtype=np.int64)
        cens = np.zeros((2, n_periods), dtype=np.int64)
        np.add.at(deaths, (groups[events], months[events] - 1), 1)
        np.add.at(cens, (groups[~events], months[~events] - 1), 1)
        return cls(deaths, cens, group_sizes)

    def add(self, other):
        return EventTable(self.deaths + other.deaths, self.censored + other.censored, self.group_sizes)

    def through(self, t):
        """Copy keeping only months ``<= t``."""
        d = self.deaths.copy()
        cz = self.censored.copy()
        d[:, t:] = 0
        cz[:, t:] = 0
        return EventTable(d, cz, self.group_sizes)


def _logrank_parts(deaths, at_risk):
    """Numerator sum(n_X - e_X) and variance sum(V_j), vectorised over leading axes."""
    d = deaths.sum(axis=-2).astype(float)
    m = at_risk.sum(axis=-2).astype(float)
    m_x = at_risk[..., 0, :].astype(float)
    m_y = at_risk[..., 1, :].astype(float)
    use = (d > 0) & (m >= 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        e_x = np.where(use, d * m_x / m, 0.0)
        v = np.where(use, e_x * (1.0 - d / m) * m_y / (m - 1.0), 0.0)
    num = np.where(use, deaths[..., 0, :] - e_x, 0.0).sum(axis=-1)
    return num, v.sum(axis=-1)


def logrank_statistic(table):
    """Squared log-rank statistic ``(sum(n_X - e_X))^2 / sum(V_j)``; chi-square(1) under H0."""
    at_risk = table.at_risk()
    total_deaths = table.deaths.sum(axis=0)
    if ((total_deaths > 0) & (at_risk.sum(axis=0) <= 0)).any():
        raise DataError("events recorded in a month with an empty risk set")
    num, var = _logrank_parts(table.deaths, at_risk)
    return float(num * num / var) if var > 0 else 0.0


def logrank_z(table):
    """Signed version ``(O_X - E_X) / sqrt(V)``."""
    num, var = _logrank_parts(table.deaths, table.at_risk())
    return float(num / math.sqrt(var)) if var > 0 else 0.0


def logrank_critical_value(alpha_tilde):
    """Chi-square(1) upper quantile; about 3.93 at alpha_tilde = 0.0475."""
    return float(stats.chi2.isf(alpha_tilde, 1))


def pooled_monthly_hazard(table, t):
    deaths = table.deaths[:, :t].sum()
    exposure = table.at_risk()[:, :t].sum()
    return deaths / exposure if exposure > 0 else 0.0


def logrank_q_t(table, t, c_seq, b, rng):
    """Q estimate after month ``t`` for the squared log-rank test (region ``> c_seq``).

    Everyone still at risk after month ``t`` receives a death month drawn
    from a constant monthly hazard pooled over both groups, or survives to
    the end of follow-up. Censoring after ``t`` is not simulated. When no
    death has been observed yet the death month is drawn uniformly and a
    RuntimeWarning is issued.
    """
    n_periods = table.n_periods
    if t < 0:
        raise DataError(f"negative analysis month {t}")
    if (table.deaths[:, t:] > 0).any() or (table.censored[:, t:] > 0).any():
        raise DataError(f"events recorded after month {t}")
    if t >= n_periods:
        return QEstimate.exact(float(logrank_statistic(table) > c_seq))
    left = n_periods - t
    hazard = pooled_monthly_hazard(table, t)
    if hazard <= 0.0:
        warnings.warn("no deaths observed yet; completing with uniform death months", RuntimeWarning)
        probs = np.full(left + 1, 1.0 / (left + 1))
    else:
        hazard = min(hazard, 1.0)
        j = np.arange(left)
        probs = np.empty(left + 1)
        probs[:left] = hazard * (1.0 - hazard) ** j
        probs[left] = max(0.0, 1.0 - probs[:left].sum())
        probs /= probs.sum()
    remaining_at_risk = table.at_risk_after()[:, t - 1] if t > 0 else np.asarray(table.group_sizes)
    hits = 0
    todo = b
    while todo:
        k = min(_CHUNK, todo)
        deaths = np.broadcast_to(table.deaths, (k, 2, n_periods)).copy()
        for g in (0, 1):
            draw = rng.multinomial(int(remaining_at_risk[g]), probs, size=k)
            deaths[:, g, t:] = draw[:, :left]
        sizes = np.asarray(table.group_sizes, dtype=np.int64)[None, :, None]
        leaving = deaths + table.censored[None]
        at_risk = sizes - (np.cumsum(leaving, axis=2) - leaving)
        num, var = _logrank_parts(deaths, at_risk)
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = np.where(var > 0, num * num / var, 0.0)
        hits += int(np.count_nonzero(stat > c_seq))
        todo -= k
    return QEstimate.from_hits(hits, b)


# -------------------------------------------------------- discrete periods


def _event_proportions(events, n_per_group):
    events = np.asarray(events, dtype=np.int64)
    leaving = np.cumsum(events, axis=-1) - events
    at_risk = n_per_group - leaving
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(at_risk > 0, events / np.maximum(at_risk, 1), 0.0)
    return p, at_risk


def discrete_event_statistic(events, n_per_group):
    """``S_T = sum_t |p_0t - p_1t|``; an exhausted group contributes proportion 0.

    ``events`` has shape ``(..., 2, T)``.
    """
    p, _ = _event_proportions(events, n_per_group)
    return np.abs(p[..., 0, :] - p[..., 1, :]).sum(axis=-1)


def _check_discrete(events, n_per_group):
    ev = np.asarray(events, dtype=np.int64)
    if ev.ndim != 2 or ev.shape[0] != 2:
        raise DataError("event counts must have shape (2, t)")
    if (ev < 0).any():
        raise DataError("negative event counts")
    if (ev.sum(axis=1) > n_per_group).any():
        raise DataError("events exceed the group size")
    return ev


def discrete_event_complete(events, n_per_group, n_periods, k, rng, q=0.5):
    """Extend observed counts to ``n_periods`` with binomial(at-risk, q) events per period."""
    ev = _check_discrete(events, n_per_group)
    return complete_event_batch(np.broadcast_to(ev, (k,) + ev.shape), n_per_group, n_periods, rng, q)


def complete_event_batch(events, n_per_group, n_periods, rng, q=0.5):
    """Like ``discrete_event_complete`` for a stack of observed states, shape ``(k, 2, t)``."""
    ev = np.asarray(events, dtype=np.int64)
    k, _, t = ev.shape
    out = np.zeros((k, 2, n_periods), dtype=np.int64)
    out[:, :, :t] = ev
    at_risk = n_per_group - ev.sum(axis=2)
    for s in range(t, n_periods):
        step = rng.binomial(at_risk, q)
        out[:, :, s] = step
        at_risk -= step
    return out


def discrete_event_q_t(events, n_per_group, n_periods, c, b, rng, q=0.5):
    """Q estimate after ``t = events.shape[1]`` periods; rejection is ``S_T > c``."""
    ev = _check_discrete(events, n_per_group)
    t = ev.shape[1]
    if t > n_periods:
        raise DataError(f"{t} periods observed but the horizon is {n_periods}")
    if t == n_periods:
        return QEstimate.exact(float(discrete_event_statistic(ev, n_per_group) > c))
    hits = 0
    todo = b
    while todo:
        k = min(_CHUNK, todo)
        full = discrete_event_complete(ev, n_per_group, n_periods, k, rng, q)
        hits += int(np.count_nonzero(discrete_event_statistic(full, n_per_group) > c))
        todo -= k
    return QEstimate.from_hits(hits, b)


def discrete_event_null(n_per_group, n_periods, q=0.5):
    """Calibration generator for the discrete-period statistic."""

    def generate(k, rng):
        empty = np.zeros((2, 0), dtype=np.int64)
        return discrete_event_statistic(discrete_event_complete(empty, n_per_group, n_periods, k, rng, q), n_per_group)

    return generate


# ------------------------------------------------------------ survival I/O


@dataclass
class SurvivalData:
    ids: list
    group: np.ndarray
    time: np.ndarray
    event: np.ndarray
    entry_time: np.ndarray
    labels: tuple

    def __len__(self):
        return self.group.size

    def group_sizes(self):
        return (int(np.count_nonzero(self.group == 0)), int(np.count_nonzero(self.group == 1)))

    def months(self, n_periods):
        """Follow-up month 1..J of each record; times beyond J are folded into month J."""
        return np.clip(np.ceil(self.time).astype(np.int64), 1, n_periods)

    def table(self, n_periods, through=None):
        """Event table, optionally restricted to records resolved by month ``through``."""
        months = self.months(n_periods)
        event = self.event.copy()
        # anyone followed beyond the horizon is a survivor censored at J
        event[self.time > n_periods] = False
        keep = np.ones(len(self), dtype=bool) if through is None else months <= through
        return EventTable.from_records(self.group[keep], months[keep], event[keep], self.group_sizes(), n_periods)


def read_survival_csv(source, labels=None):
    """Parse ``id,group,time,event_flag[,entry_time]`` rows.

    ``source`` is a path or an open text file. Group labels are mapped to 0
    and 1 in order of ``labels`` (default: sorted distinct labels).
    """
    if hasattr(source, "read"):
        return _parse_survival(source, labels)
    with open(source, newline="") as fh:
        return _parse_survival(fh, labels)


def _parse_survival(fh, labels):
    reader = csv.DictReader(fh)
    needed = {"id", "group", "time", "event_flag"}
    if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
        raise DataError(f"survival CSV needs columns {sorted(needed)}", line=1)
    ids, raw_groups, times, flags, entries = [], [], [], [], []
    for row in reader:
        line = reader.line_num
        try:
            t = float(row["time"])
            flag = int(row["event_flag"])
            entry = float(row["entry_time"]) if row.get("entry_time") not in (None, "") else 0.0
        except (TypeError, ValueError) as exc:
            raise DataError(f"unparsable value: {exc}", line=line) from None
        if not math.isfinite(t) or t <= 0:
            raise DataError(f"event time must be positive, got {row['time']}", line=line)
        if flag not in (0, 1):
            raise DataError(f"event_flag must be 0 or 1, got {flag}", line=line)
        if not math.isfinite(entry) or entry < 0:
            raise DataError(f"entry_time must be nonnegative, got {entry}", line=line)
        ids.append(row["id"])
        raw_groups.append(row["group"])
        times.append(t)
        flags.append(flag)
        entries.append(entry)
    distinct = tuple(labels) if labels is not None else tuple(sorted(set(raw_groups)))
    if len(distinct) != 2:
        raise DataError(f"expected exactly two groups, found {list(distinct)}")
    index = {lab: i for i, lab in enumerate(distinct)}
    try:
        group = np.array([index[g] for g in raw_groups], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"unknown group label {exc}") from None
    return SurvivalData(ids, group, np.array(times), np.array(flags, dtype=bool), np.array(entries), distinct)


def write_survival_csv(path, data):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "group", "time", "event_flag", "entry_time"])
        for i in range(len(data)):
            w.writerow([data.ids[i], data.labels[data.group[i]], f"{data.time[i]:.6g}",
                        int(data.event[i]), f"{data.entry_time[i]:.6g}"])


def simulate_survival(rng, sizes=(9071, 10326), death_fractions=(1897 / 9071, 2462 / 10326),
                      n_periods=15, decay=1.0, censor_fraction=0.02, labels=("X", "Y")):
    """Synthetic two-arm survival data with a front-loaded hazard.

    Within each arm the death-time density on (0, J] decays like
    ``exp(-decay * t)`` and the expected fraction dying by J matches
    ``death_fractions``. A small fraction is censored uniformly during
    follow-up; everyone else alive at J is censored at J.
    """
    if n_periods < 1:
        raise ConfigError("need at least one period", field="n_periods")
    groups, times, events = [], [], []
    for g, (size, frac) in enumerate(zip(sizes, death_fractions)):
        if not 0.0 <= frac < 1.0:
            raise ConfigError(f"death fraction must lie in [0, 1), got {frac}", field="death_fractions")
        dies = rng.random(size) < frac
        u = rng.random(size)
        # inverse CDF of the truncated exponential on (0, J]
        death_time = -np.log1p(-u * (1.0 - math.exp(-decay * n_periods))) / decay
        t = np.where(dies, death_time, n_periods + 1.0)
        censor = rng.random(size) < censor_fraction
        censor_time = rng.uniform(0.0, n_periods, size)
        cens_first = censor & (censor_time < t)
        t = np.where(cens_first, censor_time, t)
        ev = dies & ~cens_first
        t = np.where(ev | cens_first, t, float(n_periods))
        groups.append(np.full(size, g))
        times.append(np.maximum(t, 1e-6))
        events.append(ev)
    group = np.concatenate(groups)
    time = np.concatenate(times)
    event = np.concatenate(events)
    ids = [str(i + 1) for i in range(group.size)]
    return SurvivalData(ids, group, time, event, np.zeros(group.size), tuple(labels))

