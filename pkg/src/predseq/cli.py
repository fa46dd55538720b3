"""``predseq`` command-line interface.

Subcommands: plan, calibrate, monitor, simulate, ci, futility, replay. Each
takes a JSON config (``schema_version: 1``), appends to an audit JSON-lines
file, and exits 0 on success, 2 on config errors, 3 on data errors and 4 on
numerical failures.
"""

import argparse
import json
import math
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from . import gaussian as g
from . import sim
from .confseq import ci_df_band, ci_one_sided_mean, ci_two_sided_mean
from .core import AuditLog, MonitorState, QRecord, Status, TestSpec, decide, evaluation_records, load_checkpoint, \
    save_checkpoint, step
from .errors import ConfigError, DataError, PredseqError
from .families import adapter, calibrate_family
from .futility import FutilitySpec, q_star_gaussian, screen_with_q
from .mc import DEFAULT_B
from .nonparam import Ecdf
from .rng import stream

SCHEMA_VERSION = 1


# ------------------------------------------------------------------ config


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", field="config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", field="config") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object", field="config")
    version = doc.get("schema_version", doc.get("version"))
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version!r}", field="schema_version")
    return doc


def _get(cfg, key, kind, default=None, section=""):
    path = f"{section}.{key}" if section else key
    if key not in cfg:
        if default is None:
            raise ConfigError("required field missing", field=path)
        return default
    value = cfg[key]
    try:
        if kind is int and (isinstance(value, bool) or int(value) != value):
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {kind.__name__}, got {value!r}", field=path) from None


def resolve_seed(args, cfg):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PREDSEQ_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"not an integer: {env!r}", field="PREDSEQ_SEED") from None
    return _get(cfg, "seed", int, 0)


def resolve_threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("PREDSEQ_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"not an integer: {env!r}", field="PREDSEQ_THREADS") from None
    return 1


def _spec_from(cfg, section="spec"):
    if section not in cfg or not isinstance(cfg[section], dict):
        raise ConfigError("missing test definition object", field=section)
    try:
        return TestSpec.from_dict(cfg[section])
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], field=f"{section}.{exc.field}" if exc.field else section)
    except TypeError as exc:
        raise ConfigError(str(exc), field=section) from None


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _emit(out, record):
    out.write(json.dumps(record, sort_keys=True) + "\n")
    out.flush()


# ------------------------------------------------------------------- input


class RecordReader:
    """Observation lines: CSV fields or a JSON object; blank lines are flush marks.

    A first line that is not numeric CSV is taken as a header naming the fields.
    """

    def __init__(self, fh):
        self.fh = fh
        self.header = None
        self.lineno = 0

    def __iter__(self):
        for raw in self.fh:
            self.lineno += 1
            line = raw.strip()
            if not line:
                yield self.lineno, None
                continue
            if line.startswith("{"):
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"bad JSON: {exc.msg}", line=self.lineno) from None
                if not isinstance(rec, dict):
                    raise DataError("JSON record must be an object", line=self.lineno)
                yield self.lineno, rec
                continue
            fields = [f.strip() for f in line.split(",")]
            if self.header is None and self.lineno == 1 and not _numeric(fields[0]):
                self.header = fields
                continue
            if self.header is not None:
                if len(fields) != len(self.header):
                    raise DataError(f"expected {len(self.header)} fields, got {len(fields)}", line=self.lineno)
                yield self.lineno, dict(zip(self.header, fields))
            else:
                yield self.lineno, fields


def _numeric(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def _parse(spec, fam, lineno, rec):
    if isinstance(rec, dict) and "group" in rec and "labels" in spec.params:
        labels = [str(x) for x in spec.params["labels"]]
        if str(rec["group"]) not in labels:
            raise DataError(f"unknown group label {rec['group']!r}", line=lineno)
        rec = dict(rec, group=labels.index(str(rec["group"])))
    try:
        obs = fam.parse(spec, rec)
    except (TypeError, ValueError) as exc:
        raise DataError(f"cannot parse observation: {exc}", line=lineno) from None
    values = obs if isinstance(obs, list) else [obs]
    if any(isinstance(v, float) and not math.isfinite(v) for v in values):
        raise DataError("non-finite value", line=lineno)
    return obs


def _open_data(path):
    if path in (None, "-"):
        return sys.stdin, False
    try:
        return open(path), True
    except OSError as exc:
        raise DataError(f"cannot open data: {exc}") from None


# ------------------------------------------------------------------ monitor


def _time_grid(spec, cfg):
    fam = adapter(spec.family)
    end = fam.terminal(spec)
    grid = cfg.get("grid")
    if grid is None:
        if spec.family == "logrank":
            grid = list(range(1, int(end)))
        else:
            grid = [end * j / 11 for j in range(1, 11)]
    grid = [float(x) for x in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])) or any(not 0 < x < end for x in grid):
        raise ConfigError(f"grid must be strictly increasing inside (0, {end})", field="monitor.grid")
    return grid


def _subjects(spec):
    p = spec.params
    if spec.family == "logrank":
        return int(sum(p["group_sizes"]))
    if spec.family == "continuous_event":
        return 2 * int(p["n_per_group"])
    return int(p["n_x"]) + int(p["n_y"])


class Monitor:
    """Drives ``step`` over a record stream, writing decisions, audit and checkpoints."""

    def __init__(self, state, out, audit, checkpoint_path=None, grid=None):
        self.state = state
        self.out = out
        self.audit = audit
        self.checkpoint_path = checkpoint_path
        self.grid = grid

    def _advance(self, batch, **kw):
        before = self.state
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            self.state = step(before, batch, **kw)
        for rec in evaluation_records(before, self.state):
            if caught:
                rec["flags"] = sorted({str(w.message) for w in caught})
            _emit(self.out, rec)
            self.audit.append(dict(rec, event="evaluation"))
        if self.checkpoint_path:
            save_checkpoint(self.state, self.checkpoint_path)

    def run(self, records):
        spec = self.state.spec
        fam = adapter(spec.family)
        skip = self.state.n
        if self.state.terminal:
            for _lineno, rec in records:
                if rec is not None:
                    if skip:
                        skip -= 1
                        continue
                    raise DataError(f"experiment already stopped ({self.state.status.value})", line=_lineno)
            return 0
        pending = []
        ignored = 0
        last_time = -math.inf
        gi = 0
        if fam.time_indexed and self.state.time is not None:
            gi = sum(1 for x in self.grid if x <= self.state.time)
        for lineno, rec in records:
            if self.state.terminal:
                ignored += rec is not None
                continue
            if rec is None:
                if pending and not fam.time_indexed:
                    self._advance(pending, evaluate=True)
                    pending = []
                continue
            if skip:
                skip -= 1
                continue
            obs = _parse(spec, fam, lineno, rec)
            if fam.time_indexed:
                t = obs[1]
                if t < last_time:
                    raise DataError(f"records out of time order ({t} after {last_time})", line=lineno)
                last_time = t
                while gi < len(self.grid) and t > self.grid[gi] and not self.state.terminal:
                    self._advance(pending, at=self.grid[gi])
                    pending = []
                    gi += 1
                if self.state.terminal:
                    ignored += 1
                    continue
                pending.append(obs)
            else:
                pending.append(obs)
                total = self.state.n + len(pending)
                if total > spec.n_max:
                    raise DataError(f"more than n_max={spec.n_max} observations", line=lineno)
                if total % self.state.cadence == 0 or total == spec.n_max:
                    try:
                        self._advance(pending, evaluate=True)
                    except DataError as exc:
                        raise DataError(str(exc), line=lineno) from None
                    pending = []
        if not self.state.terminal:
            if fam.time_indexed:
                if self.state.n + len(pending) == _subjects(spec):
                    for x in self.grid[gi:]:
                        if self.state.terminal:
                            break
                        self._advance(pending, at=x)
                        pending = []
                    if not self.state.terminal:
                        self._advance(pending, at=fam.terminal(spec))
            elif pending:
                self._advance(pending, evaluate=False)
        return ignored


def cmd_monitor(args, cfg, audit):
    settings = cfg.get("monitor", {})
    if args.resume:
        if not args.checkpoint:
            raise ConfigError("--resume needs --checkpoint", field="checkpoint")
        state = load_checkpoint(args.checkpoint)
        if "spec" in cfg and _spec_from(cfg).to_dict() != state.spec.to_dict():
            raise ConfigError("checkpoint belongs to a different test definition", field="spec")
    else:
        spec = _spec_from(cfg)
        b = args.b if args.b is not None else _get(settings, "b", int, DEFAULT_B, "monitor")
        cadence = args.cadence if args.cadence is not None else _get(settings, "cadence", int, 1, "monitor")
        conservative = args.conservative_stop or bool(settings.get("conservative_stop", False))
        gamma_f = settings.get("gamma_f")
        state = MonitorState.start(spec, resolve_seed(args, cfg), b=b, cadence=cadence,
                                   conservative=conservative, gamma_f=gamma_f)
    grid = _time_grid(state.spec, settings) if adapter(state.spec.family).time_indexed else None
    audit.append({"event": "monitor_start", "resume": bool(args.resume), "spec": state.spec.to_dict(),
                  "seed": state.seed, "b": state.b, "cadence": state.cadence,
                  "conservative": state.conservative, "gamma_f": state.gamma_f})
    fh, close = _open_data(args.data)
    try:
        mon = Monitor(state, sys.stdout, audit, args.checkpoint, grid)
        ignored = mon.run(RecordReader(fh))
    finally:
        if close:
            fh.close()
    if ignored:
        print(f"predseq: ignored {ignored} record(s) after the terminal decision", file=sys.stderr)
    audit.append({"event": "monitor_end", "status": mon.state.status.value, "tau": mon.state.tau,
                  "n": mon.state.n, "ignored_records": ignored})
    return 0


# ------------------------------------------------------------------- plan


def cmd_plan(args, cfg, audit):
    n_fixed = _get(cfg, "n_fixed", int, cfg.get("n_max"))
    alpha = _get(cfg, "alpha", float)
    gamma = _get(cfg, "gamma", float)
    power = _get(cfg, "power", float, 0.9)
    theta = cfg.get("theta_star")
    design = g.DesignPoint.plan(n_fixed, alpha, gamma, power, theta)
    report = {
        "n_fixed": design.n_fixed,
        "n_inflated": design.n_inflated,
        "extra": design.extra,
        "pct_increase": design.percent_increase,
        "alpha": alpha,
        "gamma": gamma,
        "alpha_tilde": design.alpha_tilde,
        "theta_star": design.theta_star,
        "power_target": power,
        "fixed_power": design.fixed_power(),
        "tightened_power_same_n": g.tightened_power(alpha, gamma, power),
        "sequential_power_bound": design.sequential_power_bound(),
    }
    if "gamma_f" in cfg:
        fut = FutilitySpec.for_gaussian(design.n_inflated, design.alpha_tilde, design.theta_star,
                                        _get(cfg, "gamma_f", float))
        report.update(gamma_f=fut.gamma_f, q0_star=fut.q0_star, futility_budget=fut.budget)
    out = _outdir(args)
    with open(os.path.join(out, "plan.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    width = max(map(len, report))
    for k, v in report.items():
        print(f"{k:<{width}}  {v:.6g}" if isinstance(v, float) else f"{k:<{width}}  {v}")
    sizes = cfg.get("table_sizes")
    if sizes:
        rows = []
        for n in sizes:
            n_prime = g.inflate_sample_size(int(n), alpha, gamma, power)
            rows.append({"N": int(n), "N_prime": n_prime, "m": n_prime - int(n),
                         "pct_increase": 100.0 * (n_prime - int(n)) / int(n)})
        sim.write_csv(os.path.join(out, "plan_table.csv"), rows)
    audit.append({"event": "plan", **report})
    return 0


# -------------------------------------------------------------- calibrate


def cmd_calibrate(args, cfg, audit):
    family = cfg.get("family")
    if not isinstance(family, str):
        raise ConfigError("required field missing", field="family")
    if "alpha_tilde" in cfg:
        level = _get(cfg, "alpha_tilde", float)
    else:
        level = _get(cfg, "alpha", float) * _get(cfg, "gamma", float, 1.0)
    b_cal = args.b if args.b is not None else _get(cfg, "b_cal", int, 100_000)
    seed = resolve_seed(args, cfg)
    params = cfg.get("params", {})
    result = calibrate_family(family, level, params, b_cal, stream(seed, 0), seed=seed)
    out = _outdir(args)
    result.save(os.path.join(out, "calibration.json"))
    se = math.sqrt(level * (1 - level) / b_cal) if b_cal else 0.0
    print(f"family {family}  alpha_tilde {level:g}  c {result.c:.6g}  "
          f"achieved {result.achieved_level_estimate:.5f} (se {se:.5f}, b_cal {result.b_cal})")
    audit.append({"event": "calibrate", "family": family, "alpha_tilde": level, "c": result.c,
                  "achieved": result.achieved_level_estimate, "b_cal": result.b_cal, "seed": seed})
    return 0


# --------------------------------------------------------------- simulate


def _scenario(cfg, key="scenario"):
    if key not in cfg:
        raise ConfigError("missing scenario object", field=key)
    try:
        return sim.Scenario(**cfg[key])
    except TypeError as exc:
        raise ConfigError(str(exc), field=key) from None


def cmd_simulate(args, cfg, audit):
    kind = cfg.get("kind", "scenario")
    threads = resolve_threads(args)
    seed = resolve_seed(args, cfg)
    out = _outdir(args)
    reps = _get(cfg, "replicates", int, 10_000)
    written = []

    def emit(name, rows, plotter=None):
        path = os.path.join(out, name)
        sim.write_csv(path, rows)
        written.append(path)
        if args.plot and plotter is not None:
            png = path[:-4] + ".png"
            plotter(rows, png)
            written.append(png)

    from . import plotting

    if kind == "scenario":
        sc = _scenario(cfg)
        sc = sim._with(sc, seed=seed) if (args.seed is not None or "PREDSEQ_SEED" in os.environ) else sc
        oc = sim.run_replicates(sc, threads)
        emit("oc.csv", oc.rows())
        if oc.failures:
            audit.append({"event": "replicate_failures", "failures": oc.failures})
    elif kind == "table_s1":
        rows = sim.table_s1(tuple(cfg.get("sizes", sim.TABLE_S1_SIZES)), _get(cfg, "alpha", float, 0.05),
                            _get(cfg, "gamma", float, 0.95), _get(cfg, "power", float, 0.9), reps, seed, threads)
        emit("table_s1.csv", rows, plotting.table_s1)
    elif kind == "power_curve":
        sc = sim._with(_scenario(cfg), seed=seed, replicates=reps)
        rows = sim.power_curve(sc, cfg.get("thetas", [0.0, 0.05, 0.1, 0.13, 0.15, 0.2]), threads)
        emit("fig4_power.csv", rows, plotting.power_curves)
    elif kind == "stopping_cdf":
        base = sim._with(_scenario(cfg), seed=seed, replicates=reps)
        rows = []
        for gamma in cfg.get("gammas", [base.gamma]):
            grid, cdf, _ = sim.stopping_distribution(sim._with(base, gamma=float(gamma)), threads=threads)
            rows += sim.stopping_cdf_rows(grid, cdf, f"gamma={gamma:g}")
        emit("fig3_stopping_cdf.csv", rows, plotting.stopping_cdf)
    elif kind == "gamma_tradeoff":
        rows = sim.gamma_tradeoff(_get(cfg, "n_fixed", int, 500), _get(cfg, "alpha", float, 0.05),
                                  _get(cfg, "power", float, 0.9), tuple(cfg.get("gammas", sim.GAMMA_GRID)),
                                  reps, seed, threads)
        emit("gamma_tradeoff.csv", rows, plotting.gamma_tradeoff)
    elif kind == "coverage":
        rows = [sim.ci_coverage(k, _get(cfg, "n_max", int, 1000), _get(cfg, "alpha", float, 0.05),
                                _get(cfg, "gamma", float, 0.98), _get(cfg, "theta", float, 2.0), reps, seed)
                for k in cfg.get("kinds", ["one_sided"])]
        emit("ci_coverage.csv", rows)
    else:
        raise ConfigError(f"unknown simulation kind {kind!r}", field="kind")
    for path in written:
        print(path)
    audit.append({"event": "simulate", "kind": kind, "seed": seed, "threads": threads, "outputs": written})
    return 0


# --------------------------------------------------------------------- ci


def _values(path, lineno_field="x"):
    fh, close = _open_data(path)
    values = []
    try:
        for lineno, rec in RecordReader(fh):
            if rec is None:
                continue
            try:
                v = float(rec[lineno_field] if isinstance(rec, dict) else rec[0])
            except (KeyError, IndexError, ValueError) as exc:
                raise DataError(f"cannot parse value: {exc}", line=lineno) from None
            if not math.isfinite(v):
                raise DataError("non-finite value", line=lineno)
            values.append(v)
    finally:
        if close:
            fh.close()
    return np.asarray(values)


def cmd_ci(args, cfg, audit):
    kind = cfg.get("kind", "one_sided")
    n_max = _get(cfg, "n_max", int)
    alpha = _get(cfg, "alpha", float)
    gamma = _get(cfg, "gamma", float)
    sigma = _get(cfg, "sigma", float, 1.0)
    x = _values(args.data)
    if x.size > n_max:
        raise DataError(f"{x.size} observations exceed n_max={n_max}")
    if x.size == 0:
        raise DataError("no observations")
    n = np.arange(1, x.size + 1)
    rows = []
    if kind == "one_sided":
        lo = ci_one_sided_mean(np.cumsum(x / sigma), n, n_max, alpha, gamma) * sigma
        rows = [{"n": int(k), "lower": float(a), "upper": math.inf} for k, a in zip(n, lo)]
    elif kind == "two_sided":
        lo, hi = ci_two_sided_mean(np.cumsum(x / sigma) / n, n, n_max, alpha, gamma)
        rows = [{"n": int(k), "lower": float(a) * sigma, "upper": float(b) * sigma} for k, a, b in zip(n, lo, hi)]
    elif kind == "df_band":
        points = cfg.get("points")
        if not points:
            raise ConfigError("band needs evaluation points", field="points")
        for k in n:
            lo, hi = ci_df_band(Ecdf(x[:k])(np.asarray(points, dtype=float)), int(k), n_max, alpha, gamma)
            rows += [{"n": int(k), "s": float(s), "lower": float(a), "upper": float(b)}
                     for s, a, b in zip(points, lo, hi)]
    else:
        raise ConfigError(f"unknown interval kind {kind!r}", field="kind")
    out = _outdir(args)
    path = os.path.join(out, "intervals.csv")
    sim.write_csv(path, rows)
    if args.plot and kind != "df_band":
        from . import plotting

        plotting.intervals(rows, path[:-4] + ".png")
    print(path)
    audit.append({"event": "ci", "kind": kind, "n": int(x.size), "output": path})
    return 0


# --------------------------------------------------------------- futility


def cmd_futility(args, cfg, audit):
    spec = _spec_from(cfg)
    if spec.family != "gaussian" or spec.sides != "one":
        raise ConfigError("futility report supports the one-sided gaussian family", field="spec.family")
    theta = spec.params.get("theta_star")
    if theta is None:
        raise ConfigError("required field missing", field="spec.params.theta_star")
    gamma_f = _get(cfg, "gamma_f", float, 0.99)
    fut = FutilitySpec.for_gaussian(spec.n_max, spec.alpha_tilde, float(theta), gamma_f)
    x = _values(args.data)
    sigma = spec.params.get("sigma", 1.0)
    t = 0.0
    rows = []
    state = MonitorState.start(spec, resolve_seed(args, cfg), gamma_f=gamma_f)
    for v in x:
        if state.terminal:
            break
        state = step(state, [float(v)])
        t += float(v) / sigma
        rec = state.q_history[-1]
        n = state.n
        if n < spec.n_max:
            qs = q_star_gaussian(t - n * spec.params.get("theta0", 0.0), n, spec.n_max, spec.alpha_tilde,
                                 float(theta))
            needs = screen_with_q(rec.q, gamma_f)
        else:
            qs, needs = 1.0 - rec.q, True
        rows.append({"n": n, "q": rec.q, "q_star": float(qs), "needs_q_star": needs,
                     "decision": decide(state).verdict, "basis": decide(state).basis or ""})
    out = _outdir(args)
    path = os.path.join(out, "futility.csv")
    sim.write_csv(path, rows)
    print(f"q0_star {fut.q0_star:.6g}  gamma_f {fut.gamma_f:g}  futility budget {fut.budget:.6g}")
    print(f"status {state.status.value}  tau {state.tau}")
    print(path)
    if args.plot and rows:
        from . import plotting

        recs = [{"index": r["n"], "q": r["q_star"]} for r in rows]
        plotting.q_trajectory(recs, gamma_f, path[:-4] + ".png", label="Q*")
    audit.append({"event": "futility", "q0_star": fut.q0_star, "budget": fut.budget,
                  "status": state.status.value, "tau": state.tau})
    return 0


# ----------------------------------------------------------------- replay


def replay_audit(records):
    """Rebuild the decision of the latest monitored experiment from its audit records."""
    start = None
    for i, rec in enumerate(records):
        if rec.get("event") == "monitor_start" and not rec.get("resume"):
            start = i
    if start is None:
        raise DataError("audit log has no monitored experiment")
    head = records[start]
    state = MonitorState.start(TestSpec.from_dict(head["spec"]), head["seed"], b=head["b"],
                               cadence=head["cadence"], conservative=head["conservative"],
                               gamma_f=head["gamma_f"])
    logged = None
    for rec in records[start + 1:]:
        if rec.get("event") != "evaluation":
            continue
        target = state.q_history if rec["kind"] == "efficacy" else state.qstar_history
        target.append(QRecord(rec["index"], rec["q"], rec["se"]))
        logged = rec
    d = decide(state)
    consistent = logged is None or (logged["decision"] == d.verdict and logged["basis"] == d.basis)
    return d, consistent


def cmd_replay(args, cfg, audit):
    if args.checkpoint and not args.audit_in:
        state = load_checkpoint(args.checkpoint)
        d = decide(state)
        _emit(sys.stdout, {"verdict": d.verdict, "at": d.at_n, "q": d.q_value, "basis": d.basis,
                           "status": state.status.value, "n": state.n})
        return 0
    if not args.audit_in:
        raise ConfigError("replay needs --from-audit or --checkpoint", field="audit")
    try:
        log = AuditLog(args.audit_in).records()
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read audit log: {exc}") from None
    d, consistent = replay_audit(log)
    _emit(sys.stdout, {"verdict": d.verdict, "at": d.at_n, "q": d.q_value, "basis": d.basis,
                       "consistent": consistent})
    if not consistent:
        raise DataError("replayed decision differs from the logged one")
    return 0


# ------------------------------------------------------------------ main


COMMANDS = {
    "plan": cmd_plan,
    "calibrate": cmd_calibrate,
    "monitor": cmd_monitor,
    "simulate": cmd_simulate,
    "ci": cmd_ci,
    "futility": cmd_futility,
    "replay": cmd_replay,
}


def build_parser():
    p = argparse.ArgumentParser(prog="predseq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config (schema_version 1)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--audit", default=None, help="audit JSON-lines file (default <out>/predseq_audit.jsonl)")
        sp.add_argument("--plot", action="store_true", help="also render PNG figures")
        if name in ("monitor", "ci", "futility"):
            sp.add_argument("--data", default="-", help="observation file, '-' for stdin")
        if name in ("monitor", "replay"):
            sp.add_argument("--checkpoint")
        if name == "monitor":
            sp.add_argument("--resume", action="store_true")
            sp.add_argument("--cadence", type=int)
            sp.add_argument("--conservative-stop", action="store_true")
        if name in ("monitor", "calibrate"):
            sp.add_argument("--b", type=int, help="Monte Carlo replicates")
        if name == "replay":
            sp.add_argument("--from-audit", dest="audit_in")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    audit_path = args.audit or os.path.join(args.out, "predseq_audit.jsonl")
    code = 0
    started = time.time()
    audit = None
    try:
        os.makedirs(os.path.dirname(os.path.abspath(audit_path)), exist_ok=True)
        audit = AuditLog(audit_path)
        audit.append({"event": "run_start", "command": args.command, "argv": list(sys.argv[1:] if argv is None
                                                                                   else argv)})
        if args.config:
            cfg = load_config(args.config)
        elif args.command in ("replay",) or getattr(args, "resume", False):
            cfg = {}
        else:
            raise ConfigError("required option missing", field="--config")
        code = COMMANDS[args.command](args, cfg, audit)
    except PredseqError as exc:
        print(f"predseq: error: {exc}", file=sys.stderr)
        code = exc.exit_code
    except OSError as exc:
        print(f"predseq: error: {exc}", file=sys.stderr)
        code = 1
    if audit is not None:
        try:
            audit.append({"event": "run_end", "command": args.command, "exit_code": code,
                          "seconds": round(time.time() - started, 3)})
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())
