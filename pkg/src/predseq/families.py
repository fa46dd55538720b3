"""Per-family glue between the monitor and the statistics.

Each adapter turns raw observations into a JSON-serialisable summary and
evaluates Q (and, where available, Q*) from it. Ordinal families index looks
by sample count; time-indexed families by analysis time.
"""

import math
from enum import Enum

import numpy as np
from scipy import stats

from . import gaussian as g
from . import mc
from . import nonparam as npm
from .errors import ConfigError, DataError
from .futility import q_star_final, q_star_gaussian
from .mc import QEstimate


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    TWO_SAMPLE_NORMAL = "two_sample_normal"
    GROUP_MEANS = "group_means"
    POOLED_NORMAL = "pooled_normal"
    BERNOULLI = "bernoulli"
    MLE_NORMAL = "mle_normal"
    KS_ONE_SAMPLE = "ks_one_sample"
    KS_TWO_SAMPLE_TIME = "ks_two_sample_time"
    CONTINUOUS_EVENT = "continuous_event"
    LOGRANK = "logrank"
    DISCRETE_EVENT = "discrete_event"


def _finite(values, what="observation"):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"non-finite {what}: {values!r}")
    return arr


def _fields(record, names):
    """Pull ``names`` from a dict or a positional sequence."""
    if isinstance(record, dict):
        try:
            return [record[k] for k in names]
        except KeyError as exc:
            raise DataError(f"missing field {exc}") from None
    seq = list(record) if isinstance(record, (list, tuple)) else [record]
    if len(seq) != len(names):
        raise DataError(f"expected {len(names)} fields ({', '.join(names)}), got {len(seq)}")
    return seq


def _param(spec, key, default=None, required=False):
    if key in spec.params:
        return spec.params[key]
    if required:
        raise ConfigError(f"family {spec.family} needs parameter {key!r}", field=f"params.{key}")
    return default


class Adapter:
    time_indexed = False
    monotone = False

    def validate(self, spec):
        pass

    def terminal(self, spec):
        return spec.n_max

    def parse(self, spec, record):
        return record

    def init(self, spec):
        raise NotImplementedError

    def ingest(self, spec, summary, batch, n):
        raise NotImplementedError

    def q(self, spec, summary, index, rng, b):
        raise NotImplementedError

    def final(self, spec, summary):
        raise NotImplementedError

    def q_star(self, spec, summary, index, rng, b):
        raise ConfigError(f"no updated Type-II error for family {spec.family}", field="futility")


class GaussianAdapter(Adapter):
    """Unit-variance (after scaling by sigma) normal mean; one or two sided."""

    monotone = True

    def validate(self, spec):
        if _param(spec, "sigma", 1.0) <= 0:
            raise ConfigError("must be positive", field="params.sigma")

    def parse(self, spec, record):
        return float(_fields(record, ["x"])[0])

    def init(self, spec):
        return {"t": 0.0}

    def ingest(self, spec, summary, batch, n):
        t = summary["t"]
        for x in _finite(batch).ravel() / _param(spec, "sigma", 1.0):
            t += float(x)
        return {"t": t}

    def _shifted(self, spec, summary, n):
        return summary["t"] - n * _param(spec, "theta0", 0.0)

    def q(self, spec, summary, index, rng, b):
        t = self._shifted(spec, summary, index)
        fn = g.q_one_sided if spec.sides == "one" else g.q_two_sided
        return QEstimate.exact(fn(t, index, spec.n_max, spec.alpha_tilde))

    def final(self, spec, summary):
        t = self._shifted(spec, summary, spec.n_max)
        fn = g.final_reject_one_sided if spec.sides == "one" else g.final_reject_two_sided
        return bool(fn(t, spec.n_max, spec.alpha_tilde))

    def q_star(self, spec, summary, index, rng, b):
        if spec.sides != "one":
            raise ConfigError("updated Type-II error is defined for the one-sided test", field="sides")
        theta = _param(spec, "theta_star", required=True)
        t = self._shifted(spec, summary, index)
        if index >= spec.n_max:
            return QEstimate.exact(float(q_star_final(t, spec.n_max, spec.alpha_tilde)))
        return QEstimate.exact(q_star_gaussian(t, index, spec.n_max, spec.alpha_tilde, theta))


class TwoSampleNormalAdapter(Adapter):
    """Paired accrual, known common variance; observation = (x, y)."""

    def parse(self, spec, record):
        return [float(v) for v in _fields(record, ["x", "y"])]

    def init(self, spec):
        return {"d": 0.0}

    def ingest(self, spec, summary, batch, n):
        d = summary["d"]
        for x, y in _finite(batch).reshape(-1, 2) / _param(spec, "sigma", 1.0):
            d += float(x - y)
        return {"d": d}

    def q(self, spec, summary, index, rng, b):
        return QEstimate.exact(g.q_two_sample_known_var(summary["d"], index, spec.n_max, spec.alpha_tilde))

    def final(self, spec, summary):
        return bool(g.final_reject_two_sample(summary["d"], spec.n_max, spec.alpha_tilde))


class GroupMeansAdapter(Adapter):
    """Each observation is a pair of group means with sizes and variances."""

    names = ["x_mean", "y_mean", "m_x", "m_y", "s2_x", "s2_y"]

    def parse(self, spec, record):
        return [float(v) for v in _fields(record, self.names)]

    def init(self, spec):
        return {"t": 0.0}

    def ingest(self, spec, summary, batch, n):
        rows = _finite(batch).reshape(-1, 6)
        unequal = bool(_param(spec, "unequal", False))
        t = summary["t"]
        for r in rows:
            t += mc.group_mean_z(r[0], r[1], int(r[2]), int(r[3]), r[4], r[5], unequal=unequal)
        return {"t": float(t)}

    def q(self, spec, summary, index, rng, b):
        fn = g.q_one_sided if spec.sides == "one" else g.q_two_sided
        return QEstimate.exact(fn(summary["t"], index, spec.n_max, spec.alpha_tilde))

    def final(self, spec, summary):
        fn = g.final_reject_one_sided if spec.sides == "one" else g.final_reject_two_sided
        return bool(fn(summary["t"], spec.n_max, spec.alpha_tilde))


class PooledNormalAdapter(Adapter):
    """Unknown common variance; plug-in pooled normal completion, region ``|T| > c``."""

    def validate(self, spec):
        _param(spec, "c", required=True)

    def parse(self, spec, record):
        return [float(v) for v in _fields(record, ["x", "y"])]

    def init(self, spec):
        return mc.pooled_normal_summary([], [])

    def ingest(self, spec, summary, batch, n):
        for x, y in _finite(batch).reshape(-1, 2):
            summary = mc.pooled_normal_update(summary, x, y)
        return summary

    def _region(self, spec):
        return mc.Region("two_sided", float(spec.params["c"]))

    def q(self, spec, summary, index, rng, b):
        if index < 2:
            return None
        return mc.estimate_q(summary, mc.pooled_normal_sampler(spec.n_max),
                             mc.pooled_normal_final_statistic(spec.n_max), self._region(spec), b, rng)

    def final(self, spec, summary):
        t = mc.pooled_t_statistic(summary["mean_x"], summary["m2_x"], summary["mean_y"], summary["m2_y"],
                                  spec.n_max)
        return bool(self._region(spec).contains(t))


class BernoulliAdapter(Adapter):
    """Two Bernoulli arms, plug-in pooled rate; Q evaluated after the burn-in ``n0``."""

    def validate(self, spec):
        _param(spec, "c", required=True)
        if int(_param(spec, "n0", 5)) < 1:
            raise ConfigError("must be >= 1", field="params.n0")

    def parse(self, spec, record):
        return [int(v) for v in _fields(record, ["x", "y"])]

    def init(self, spec):
        return {"n": 0, "s_x": 0, "s_y": 0}

    def ingest(self, spec, summary, batch, n):
        pairs = np.asarray(batch).reshape(-1, 2)
        if not np.isin(pairs, (0, 1)).all():
            raise DataError("Bernoulli outcomes must be 0 or 1")
        return {"n": summary["n"] + len(pairs), "s_x": summary["s_x"] + int(pairs[:, 0].sum()),
                "s_y": summary["s_y"] + int(pairs[:, 1].sum())}

    def _region(self, spec):
        return mc.Region("upper", float(spec.params["c"]))

    def q(self, spec, summary, index, rng, b):
        if index <= int(_param(spec, "n0", 5)):
            return None
        return mc.estimate_q(summary, mc.pooled_bernoulli_sampler(spec.n_max),
                             mc.bernoulli_final_statistic(spec.n_max), self._region(spec), b, rng)

    def final(self, spec, summary):
        return bool(self._region(spec).contains(mc.bernoulli_statistic(summary["s_x"], summary["s_y"], spec.n_max)))


class MleNormalAdapter(Adapter):
    """Normal mean, H0: theta <= 0, constrained-MLE density-ratio statistic."""

    def parse(self, spec, record):
        return float(_fields(record, ["x"])[0])

    def init(self, spec):
        return {"n": 0, "sum": 0.0, "log_ratio": 0.0}

    def ingest(self, spec, summary, batch, n):
        for x in _finite(batch).ravel():
            summary = mc.mle_update(summary, x)
        return summary

    def _region(self, spec):
        c = _param(spec, "c", None)
        return mc.Region("upper", math.log(1.0 / spec.alpha_tilde) if c is None else float(c), strict=False)

    def q(self, spec, summary, index, rng, b):
        if index < 2:
            return None
        return mc.estimate_q(summary, mc.mle_sampler(spec.n_max), mc.mle_final_statistic,
                             self._region(spec), b, rng)

    def final(self, spec, summary):
        return bool(self._region(spec).contains(summary["log_ratio"]))


def _distribution(spec):
    name = _param(spec, "dist", "uniform")
    args = _param(spec, "dist_args", [])
    try:
        return getattr(stats, name)(*args)
    except (AttributeError, TypeError) as exc:
        raise ConfigError(f"unknown null distribution {name}{tuple(args)}: {exc}", field="params.dist") from None


class KsOneSampleAdapter(Adapter):
    def parse(self, spec, record):
        return float(_fields(record, ["x"])[0])

    def _c(self, spec):
        c = _param(spec, "c", None)
        return npm.ks1_critical_value(spec.n_max, spec.alpha_tilde) if c is None else float(c)

    def init(self, spec):
        return {"u": []}

    def ingest(self, spec, summary, batch, n):
        x = _finite(batch).ravel()
        return {"u": summary["u"] + [float(v) for v in _distribution(spec).cdf(x)]}

    def q(self, spec, summary, index, rng, b):
        return npm.ks1_q(summary["u"], spec.n_max, self._c(spec), b, rng)

    def final(self, spec, summary):
        return bool(npm.ks_one_sample_statistic(np.asarray(summary["u"])) >= self._c(spec))


class _EventTimeAdapter(Adapter):
    """Two groups of event times monitored at calendar times."""

    time_indexed = True

    def sizes(self, spec):
        raise NotImplementedError

    def horizon(self, spec):
        raise NotImplementedError

    def terminal(self, spec):
        return self.horizon(spec)

    def parse(self, spec, record):
        grp, t = _fields(record, ["group", "time"])
        return [int(grp), float(t)]

    def init(self, spec):
        return {"x": [], "y": []}

    def ingest(self, spec, summary, batch, n):
        out = {"x": list(summary["x"]), "y": list(summary["y"])}
        for grp, t in batch:
            if grp not in (0, 1):
                raise DataError(f"group must be 0 or 1, got {grp}")
            if not math.isfinite(t) or t < 0:
                raise DataError(f"invalid event time {t}")
            if t > self.horizon(spec):
                raise DataError(f"event time {t} beyond horizon {self.horizon(spec)}")
            out["x" if grp == 0 else "y"].append(float(t))
        nx, ny = self.sizes(spec)
        if len(out["x"]) > nx or len(out["y"]) > ny:
            raise DataError("more events than subjects in a group")
        return out


class KsTwoSampleTimeAdapter(_EventTimeAdapter):
    def validate(self, spec):
        _param(spec, "n_x", required=True)
        _param(spec, "n_y", required=True)

    def sizes(self, spec):
        return int(spec.params["n_x"]), int(spec.params["n_y"])

    def horizon(self, spec):
        return float(_param(spec, "horizon", 1.0))

    def _c(self, spec):
        c = _param(spec, "c", None)
        nx, ny = self.sizes(spec)
        return npm.ks2_critical_value(nx, ny, spec.alpha) if c is None else float(c)

    def q(self, spec, summary, index, rng, b):
        nx, ny = self.sizes(spec)
        return npm.ks2_q_time(summary["x"], summary["y"], index, nx, ny, self.horizon(spec), self._c(spec), b, rng)

    def final(self, spec, summary):
        nx, ny = self.sizes(spec)
        q = npm.ks2_q_time(summary["x"], summary["y"], self.horizon(spec), nx, ny, self.horizon(spec),
                           self._c(spec), 1, None)
        return q.q_hat == 1.0


class ContinuousEventAdapter(_EventTimeAdapter):
    def validate(self, spec):
        _param(spec, "n_per_group", required=True)
        _param(spec, "c", required=True)

    def sizes(self, spec):
        n = int(spec.params["n_per_group"])
        return n, n

    def horizon(self, spec):
        return 1.0

    def q(self, spec, summary, index, rng, b):
        return npm.continuous_event_q_t(summary["x"], summary["y"], index, int(spec.params["n_per_group"]),
                                        float(spec.params["c"]), b, rng)

    def final(self, spec, summary):
        q = npm.continuous_event_q_t(summary["x"], summary["y"], 1.0, int(spec.params["n_per_group"]),
                                     float(spec.params["c"]), 1, None)
        return q.q_hat == 1.0


class LogrankAdapter(Adapter):
    """Monthly-binned survival records ``(group, time, event_flag)``."""

    time_indexed = True

    def validate(self, spec):
        sizes = _param(spec, "group_sizes", required=True)
        if len(sizes) != 2 or min(sizes) < 1:
            raise ConfigError("need two positive group sizes", field="params.group_sizes")
        if int(_param(spec, "n_periods", 0)) < 2:
            raise ConfigError("need at least two periods", field="params.n_periods")

    def terminal(self, spec):
        return int(spec.params["n_periods"])

    def _c(self, spec):
        c = _param(spec, "c", None)
        return npm.logrank_critical_value(spec.alpha_tilde) if c is None else float(c)

    def parse(self, spec, record):
        grp, t, ev = _fields(record, ["group", "time", "event_flag"])
        return [int(grp), float(t), int(ev)]

    def init(self, spec):
        j = int(spec.params["n_periods"])
        return {"deaths": [[0] * j, [0] * j], "censored": [[0] * j, [0] * j]}

    def table(self, spec, summary):
        return npm.EventTable(np.array(summary["deaths"]), np.array(summary["censored"]),
                              tuple(spec.params["group_sizes"]))

    def ingest(self, spec, summary, batch, n):
        j = int(spec.params["n_periods"])
        deaths = np.array(summary["deaths"], dtype=np.int64)
        cens = np.array(summary["censored"], dtype=np.int64)
        for grp, t, ev in batch:
            if grp not in (0, 1) or ev not in (0, 1):
                raise DataError(f"bad survival record {(grp, t, ev)}")
            if not math.isfinite(t) or t <= 0:
                raise DataError(f"event time must be positive, got {t}")
            month = min(max(int(math.ceil(t)), 1), j)
            if ev and t <= j:
                deaths[grp, month - 1] += 1
            else:
                cens[grp, month - 1] += 1
        table = npm.EventTable(deaths, cens, tuple(spec.params["group_sizes"]))
        return {"deaths": table.deaths.tolist(), "censored": table.censored.tolist()}

    def q(self, spec, summary, index, rng, b):
        return npm.logrank_q_t(self.table(spec, summary), int(index), self._c(spec), b, rng)

    def final(self, spec, summary):
        return npm.logrank_statistic(self.table(spec, summary)) > self._c(spec)


class DiscreteEventAdapter(Adapter):
    """Per-period event counts ``(n_x, n_y)``; looks indexed by period."""

    def validate(self, spec):
        _param(spec, "n_per_group", required=True)
        _param(spec, "c", required=True)

    def parse(self, spec, record):
        return [int(v) for v in _fields(record, ["n_x", "n_y"])]

    def init(self, spec):
        return {"events": [[], []]}

    def ingest(self, spec, summary, batch, n):
        rows = np.asarray(batch, dtype=np.int64).reshape(-1, 2)
        ev = np.concatenate([np.asarray(summary["events"], dtype=np.int64).reshape(2, -1), rows.T], axis=1)
        npm._check_discrete(ev, int(spec.params["n_per_group"]))
        return {"events": ev.tolist()}

    def q(self, spec, summary, index, rng, b):
        return npm.discrete_event_q_t(np.asarray(summary["events"]).reshape(2, -1), int(spec.params["n_per_group"]),
                                      spec.n_max, float(spec.params["c"]), b, rng,
                                      float(_param(spec, "q", 0.5)))

    def final(self, spec, summary):
        ev = np.asarray(summary["events"]).reshape(2, -1)
        return bool(npm.discrete_event_statistic(ev, int(spec.params["n_per_group"])) > float(spec.params["c"]))


REGISTRY = {
    Family.GAUSSIAN: GaussianAdapter(),
    Family.TWO_SAMPLE_NORMAL: TwoSampleNormalAdapter(),
    Family.GROUP_MEANS: GroupMeansAdapter(),
    Family.POOLED_NORMAL: PooledNormalAdapter(),
    Family.BERNOULLI: BernoulliAdapter(),
    Family.MLE_NORMAL: MleNormalAdapter(),
    Family.KS_ONE_SAMPLE: KsOneSampleAdapter(),
    Family.KS_TWO_SAMPLE_TIME: KsTwoSampleTimeAdapter(),
    Family.CONTINUOUS_EVENT: ContinuousEventAdapter(),
    Family.LOGRANK: LogrankAdapter(),
    Family.DISCRETE_EVENT: DiscreteEventAdapter(),
}


def adapter(family):
    try:
        return REGISTRY[Family(family)]
    except ValueError:
        raise ConfigError(f"unknown family {family!r}; choose from {[f.value for f in Family]}",
                          field="family") from None


def calibrate_family(family, alpha_tilde, params, b_cal, rng, seed=None):
    """Critical value for ``family`` at level ``alpha_tilde``.

    Simulated where no formula exists (pooled normal, Bernoulli, discrete and
    continuous event tests); exact or asymptotic otherwise.
    """
    fam = Family(family) if family in {f.value for f in Family} else None
    if fam is None:
        raise ConfigError(f"unknown family {family!r}", field="family")

    def need(key):
        if key not in params:
            raise ConfigError(f"calibration of {family} needs {key!r}", field=f"params.{key}")
        return params[key]

    def formula(c):
        return mc.CalibrationResult(float(c), alpha_tilde, alpha_tilde, 0, True, fam.value, dict(params), seed)

    if fam is Family.POOLED_NORMAL:
        n = int(need("n_max"))
        gen = mc.pooled_normal_null(n, int(params.get("n_start", 2)))
        return mc.calibrate_critical_value(lambda k, r: np.abs(gen(k, r)), None, alpha_tilde, b_cal, rng,
                                           family=fam.value, params=params, seed=seed)
    if fam is Family.BERNOULLI:
        gen = mc.pooled_bernoulli_null(int(need("n_max")), int(params.get("n0", 5)))
        return mc.calibrate_critical_value(gen, None, alpha_tilde, b_cal, rng, family=fam.value,
                                           params=params, seed=seed)
    if fam is Family.DISCRETE_EVENT:
        gen = npm.discrete_event_null(int(need("n_per_group")), int(need("n_periods")), float(params.get("q", 0.5)))
        return mc.calibrate_critical_value(gen, None, alpha_tilde, b_cal, rng, family=fam.value,
                                           params=params, seed=seed)
    if fam is Family.CONTINUOUS_EVENT:
        n = int(need("n_per_group"))
        return mc.calibrate_critical_value(lambda k, r: npm.ks2_null_statistics(n, n, k, r), None, alpha_tilde,
                                           b_cal, rng, family=fam.value, params=params, seed=seed)
    if fam is Family.KS_TWO_SAMPLE_TIME:
        return formula(npm.ks2_critical_value(int(need("n_x")), int(need("n_y")), alpha_tilde))
    if fam is Family.KS_ONE_SAMPLE:
        return formula(npm.ks1_critical_value(int(need("n_max")), alpha_tilde))
    if fam is Family.LOGRANK:
        return formula(npm.logrank_critical_value(alpha_tilde))
    if fam is Family.MLE_NORMAL:
        return formula(math.log(1.0 / alpha_tilde))
    raise ConfigError(f"family {family} uses a closed-form region; nothing to calibrate", field="family")
