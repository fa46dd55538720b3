"""Operating characteristics of the predictive test on the normal-mean model.

Each replicate draws its own counter-keyed stream ``(seed, replicate)``, so
results do not depend on blocking or on the number of worker threads; blocks
are always concatenated in replicate order before summarising.
"""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gaussian as g
from .baselines import e_first_crossing
from .confseq import ci_one_sided_mean, ci_two_sided_mean, df_band_halfwidth
from .errors import ConfigError, PredseqError
from .futility import DEFAULT_GAMMA_F, q_star_paths
from .normal import upper_quantile
from .rng import stream

SCENARIO_VERSION = 1
METHODS = ("predictive", "fixed", "e_process", "predictive_futility")
_BLOCK = 250

GAMMA_GRID = (0.99, 0.97, 0.95, 0.93, 0.90, 0.85, 0.80, 0.75, 0.70, 0.65, 0.60)
TABLE_S1_SIZES = (10, 20, 50, 100, 500, 1000)


@dataclass(frozen=True)
class Scenario:
    """One-sided unit-variance normal mean experiment.

    ``n_max`` is the fixed-sample size N; the predictive and e-process
    methods run to ``n_inflated`` (N', default N). Data have mean ``theta``.
    """

    n_max: int
    alpha: float = 0.05
    gamma: float = 0.95
    theta: float = 0.0
    replicates: int = 10_000
    seed: int = 0
    n_inflated: int | None = None
    methods: tuple = ("predictive", "fixed", "e_process")
    theta_star: float | None = None
    gamma_f: float = DEFAULT_GAMMA_F
    name: str = ""

    def __post_init__(self):
        if self.n_max < 1:
            raise ConfigError("must be >= 1", field="n_max")
        if self.replicates < 1:
            raise ConfigError("must be >= 1", field="replicates")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("must lie in (0, 1)", field="alpha")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("must lie in (0, 1]", field="gamma")
        if self.n_inflated is not None and self.n_inflated < self.n_max:
            raise ConfigError("must be >= n_max", field="n_inflated")
        object.__setattr__(self, "methods", tuple(self.methods))
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}", field="methods")
        if "predictive_futility" in self.methods and (self.theta_star is None or self.theta_star <= 0):
            raise ConfigError("futility needs a positive theta_star", field="theta_star")

    @property
    def horizon(self):
        return self.n_inflated or self.n_max

    @property
    def alpha_tilde(self):
        return self.alpha * self.gamma

    def to_json(self):
        record = asdict(self)
        record["methods"] = list(self.methods)
        return json.dumps({"version": SCENARIO_VERSION, "scenario": record}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("version") != SCENARIO_VERSION:
            raise ConfigError(f"scenario version {doc.get('version')!r}, expected {SCENARIO_VERSION}",
                              field="version")
        try:
            return cls(**doc["scenario"])
        except TypeError as exc:
            raise ConfigError(str(exc), field="scenario") from None


@dataclass
class MethodSummary:
    method: str
    rate: float
    rate_se: float
    tau_mean: float
    tau_se: float
    tau_median: float
    tau_q25: float
    tau_q75: float
    n_reject: int
    cond_tau_mean: float
    cond_tau_se: float
    cond_tau_median: float
    futility_rate: float = 0.0
    futility_se: float = 0.0

    def row(self):
        return asdict(self)


def _rate(hits, r):
    p = hits / r
    return p, math.sqrt(p * (1.0 - p) / r)


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    sd = x.std(ddof=1) if x.size > 1 else 0.0
    return float(x.mean()), float(sd / math.sqrt(x.size))


def summarise(method, reject, tau, futile=None):
    r = reject.size
    rate, rate_se = _rate(int(reject.sum()), r)
    mean, se = _mean_se(tau)
    q25, med, q75 = np.quantile(tau, [0.25, 0.5, 0.75])
    cond = tau[reject]
    cmean, cse = _mean_se(cond)
    cmed = float(np.median(cond)) if cond.size else math.nan
    fr, fse = _rate(int(futile.sum()), r) if futile is not None else (0.0, 0.0)
    return MethodSummary(method, rate, rate_se, mean, se, float(med), float(q25), float(q75),
                         int(reject.sum()), cmean, cse, cmed, fr, fse)


@dataclass
class OperatingCharacteristics:
    scenario: Scenario
    methods: dict
    outcomes: dict = field(repr=False, default_factory=dict)
    failures: list = field(default_factory=list)

    def rows(self):
        return [dict(theta=self.scenario.theta, gamma=self.scenario.gamma, n_max=self.scenario.n_max,
                     horizon=self.scenario.horizon, **s.row()) for s in self.methods.values()]


def _first_index(mask):
    hit = mask.any(axis=1)
    return hit, np.where(hit, mask.argmax(axis=1) + 1, 0)


def _paths(scenario, start, stop):
    n = scenario.horizon
    rows = [stream(scenario.seed, r).standard_normal(n) for r in range(start, stop)]
    x = np.vstack(rows) + scenario.theta
    return np.cumsum(x, axis=1)


def _block(scenario, start, stop):
    sums = _paths(scenario, start, stop)
    n_prime = scenario.horizon
    out = {}
    need_q = {"predictive", "predictive_futility"} & set(scenario.methods)
    if need_q:
        q = g.q_paths(sums, n_prime, scenario.alpha_tilde, "one")
        cross = q >= scenario.gamma
        cross[:, -1] = q[:, -1] == 1.0
        hit, first = _first_index(cross)
        if "predictive" in scenario.methods:
            out["predictive"] = (hit, np.where(hit, first, n_prime), np.zeros_like(hit))
        if "predictive_futility" in scenario.methods:
            qs = q_star_paths(sums, n_prime, scenario.alpha_tilde, scenario.theta_star)
            fut = qs >= scenario.gamma_f
            fut[:, -1] = False
            fhit, ffirst = _first_index(fut)
            futile = fhit & (~hit | (ffirst < first))
            reject = hit & ~futile
            tau = np.where(reject, first, np.where(futile, ffirst, n_prime))
            out["predictive_futility"] = (reject, tau, futile)
    if "fixed" in scenario.methods:
        cut = math.sqrt(scenario.n_max) * upper_quantile(scenario.alpha)
        rej = sums[:, scenario.n_max - 1] > cut
        out["fixed"] = (rej, np.full(rej.shape, scenario.n_max), np.zeros_like(rej))
    if "e_process" in scenario.methods:
        rej, first = e_first_crossing(sums, scenario.alpha)
        out["e_process"] = (rej, np.where(rej, first, n_prime), np.zeros_like(rej))
    return out


def run_replicates(scenario, threads=1, block=_BLOCK):
    """Simulate ``scenario.replicates`` experiments and summarise each method."""
    bounds = [(s, min(s + block, scenario.replicates)) for s in range(0, scenario.replicates, block)]
    failures = []

    def work(b):
        try:
            return _block(scenario, *b)
        except (PredseqError, FloatingPointError) as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, bounds))
    else:
        results = [work(b) for b in bounds]
    parts = []
    for b, res in zip(bounds, results):
        if isinstance(res, Exception):
            failures.append({"replicates": list(b), "error": str(res)})
        else:
            parts.append(res)
    if not parts:
        raise PredseqError(f"all replicate blocks failed: {failures[0]['error']}")
    outcomes = {}
    for m in scenario.methods:
        outcomes[m] = tuple(np.concatenate([p[m][i] for p in parts]) for i in range(3))
    summaries = {m: summarise(m, o[0], o[1], o[2] if m == "predictive_futility" else None)
                 for m, o in outcomes.items()}
    return OperatingCharacteristics(scenario, summaries, outcomes, failures)


def _with(scenario, **changes):
    record = asdict(scenario)
    record.update(changes)
    return Scenario(**record)


def power_curve(scenario, theta_grid, threads=1):
    if len(theta_grid) == 0:
        raise ConfigError("theta grid is empty", field="theta_grid")
    rows = []
    for theta in theta_grid:
        oc = run_replicates(_with(scenario, theta=float(theta)), threads)
        for s in oc.methods.values():
            rows.append({"theta": float(theta), "method": s.method, "power": s.rate, "se": s.rate_se})
    return rows


def stopping_distribution(scenario, method="predictive", threads=1):
    """(tau values, empirical CDF) over 1..N'; no-stop runs sit at N'."""
    oc = run_replicates(scenario, threads)
    tau = oc.outcomes[method][1]
    grid = np.arange(1, scenario.horizon + 1)
    counts = np.bincount(tau, minlength=scenario.horizon + 1)[1:]
    return grid, np.cumsum(counts) / tau.size, oc


def planned_scenario(n_fixed, alpha, gamma, power=0.9, replicates=10_000, seed=0, methods=("predictive",)):
    """Scenario at N' with the effect giving ``power`` at (N', alpha*gamma)."""
    n_prime = g.inflate_sample_size(n_fixed, alpha, gamma, power)
    theta = g.design_theta(n_prime, alpha * gamma, power)
    return Scenario(n_max=n_fixed, alpha=alpha, gamma=gamma, theta=theta, replicates=replicates, seed=seed,
                    n_inflated=n_prime, methods=methods)


def gamma_tradeoff(n_fixed=500, alpha=0.05, power=0.9, gamma_grid=GAMMA_GRID, replicates=10_000, seed=0,
                   threads=1):
    rows = []
    for gamma in gamma_grid:
        if not 0.0 < gamma < 1.0:
            raise ConfigError(f"gamma {gamma} outside (0, 1)", field="gamma_grid")
        sc = planned_scenario(n_fixed, alpha, gamma, power, replicates, seed)
        s = run_replicates(sc, threads).methods["predictive"]
        rows.append({"gamma": gamma, "n_inflated": sc.horizon, "theta": sc.theta, "tau_mean": s.tau_mean,
                     "tau_se": s.tau_se, "tau_median": s.tau_median, "tau_q25": s.tau_q25, "tau_q75": s.tau_q75,
                     "power": s.rate, "power_se": s.rate_se})
    return rows


def table_s1(sizes=TABLE_S1_SIZES, alpha=0.05, gamma=0.95, power=0.9, replicates=10_000, seed=0, threads=1):
    rows = []
    for n in sizes:
        sc = planned_scenario(n, alpha, gamma, power, replicates, seed)
        s = run_replicates(sc, threads).methods["predictive"]
        extra = sc.horizon - n
        rows.append({"n": n, "n_inflated": sc.horizon, "extra": extra, "pct_increase": 100.0 * extra / n,
                     "tau_mean": s.tau_mean, "tau_se": s.tau_se, "tau_median": s.tau_median,
                     "tau_q25": s.tau_q25, "tau_q75": s.tau_q75})
    return rows


# ------------------------------------------------------------ CI coverage


def ci_coverage(kind, n_max=1000, alpha=0.05, gamma=0.98, theta=2.0, replicates=10_000, seed=0):
    """Fraction of replicates whose interval sequence contains theta at every look.

    ``kind`` is ``"one_sided"``, ``"two_sided"`` or ``"df_band"`` (uniform data,
    ``theta`` ignored).
    """
    n = np.arange(1, n_max + 1)
    covered = 0
    for start in range(0, replicates, _BLOCK):
        stop = min(start + _BLOCK, replicates)
        if kind == "df_band":
            h = np.array([df_band_halfwidth(k, n_max, alpha, gamma) for k in n])
            u = np.vstack([stream(seed, r).random(n_max) for r in range(start, stop)])
            covered += int((_running_ks(u) <= h).all(axis=1).sum())
            continue
        x = np.vstack([stream(seed, r).standard_normal(n_max) for r in range(start, stop)]) + theta
        s = np.cumsum(x, axis=1)
        if kind == "one_sided":
            ok = ci_one_sided_mean(s, n, n_max, alpha, gamma) <= theta
        elif kind == "two_sided":
            lo, hi = ci_two_sided_mean(s / n, n, n_max, alpha, gamma)
            ok = (lo <= theta) & (theta <= hi)
        else:
            raise ConfigError(f"unknown interval kind {kind!r}", field="kind")
        covered += int(ok.all(axis=1).sum())
    p, se = _rate(covered, replicates)
    return {"kind": kind, "coverage": p, "se": se, "replicates": replicates}


def _running_ks(u):
    """sup_s |F_n(s) - s| for every prefix of each row of uniforms ``u``."""
    u = np.atleast_2d(u)
    out = np.empty(u.shape)
    for k in range(1, u.shape[1] + 1):
        v = np.sort(u[:, :k], axis=1)
        i = np.arange(1, k + 1)
        out[:, k - 1] = np.maximum((i / k - v).max(axis=1), (v - (i - 1) / k).max(axis=1))
    return out


# ---------------------------------------------------------------- output


def write_csv(path, rows, columns=None):
    rows = list(rows)
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in columns})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def stopping_cdf_rows(grid, cdf, label="predictive"):
    return [{"method": label, "tau": int(t), "cdf": float(c)} for t, c in zip(grid, cdf)]
