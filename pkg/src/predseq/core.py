"""Experiment lifecycle: test definition, monitor state, decisions, checkpoints."""

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import CheckpointError, ConfigError, DataError
from .families import Family, adapter
from .mc import DEFAULT_B
from .rng import stream

CHECKPOINT_VERSION = 1


def derive_predictive_level(alpha, gamma):
    """Level ``alpha * gamma`` of the fixed-sample test embedded in Q."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"must lie in (0, 1), got {alpha!r}", field="alpha")
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"must lie in (0, 1], got {gamma!r}", field="gamma")
    return alpha * gamma


@dataclass(frozen=True)
class TestSpec:
    """Fixed-sample test made sequential: family, planned size, target level, threshold."""

    __test__ = False  # keep pytest from collecting this

    family: str
    n_max: int
    alpha: float
    gamma: float
    sides: str = "one"
    params: dict = field(default_factory=dict)
    alpha_tilde: float = field(init=False)

    def __post_init__(self):
        fam = Family(self.family).value if self.family in {f.value for f in Family} else None
        if fam is None:
            adapter(self.family)  # raises with the list of valid names
        object.__setattr__(self, "family", fam)
        if isinstance(self.n_max, bool) or int(self.n_max) != self.n_max or self.n_max < 1:
            raise ConfigError(f"must be a positive integer, got {self.n_max!r}", field="n_max")
        object.__setattr__(self, "n_max", int(self.n_max))
        object.__setattr__(self, "alpha_tilde", derive_predictive_level(self.alpha, self.gamma))
        if self.sides not in ("one", "two"):
            raise ConfigError(f"must be 'one' or 'two', got {self.sides!r}", field="sides")
        object.__setattr__(self, "params", dict(self.params))
        adapter(fam).validate(self)

    def to_dict(self):
        return {"family": self.family, "n_max": self.n_max, "alpha": self.alpha, "gamma": self.gamma,
                "sides": self.sides, "params": copy.deepcopy(self.params)}

    @classmethod
    def from_dict(cls, record):
        known = {"family", "n_max", "alpha", "gamma", "sides", "params"}
        extra = set(record) - known - {"alpha_tilde"}
        if extra:
            raise ConfigError(f"unexpected keys {sorted(extra)}", field="spec")
        missing = {"family", "n_max", "alpha", "gamma"} - set(record)
        if missing:
            raise ConfigError(f"missing keys {sorted(missing)}", field="spec")
        return cls(**{k: v for k, v in record.items() if k in known})


class Status(str, Enum):
    RUNNING = "running"
    REJECTED = "rejected"
    COMPLETED_NO_REJECT = "completed_no_reject"
    STOPPED_FUTILE = "stopped_futile"


@dataclass(frozen=True)
class QRecord:
    index: float
    q: float
    se: float = 0.0

    def to_list(self):
        return [self.index, self.q, self.se]


@dataclass(frozen=True)
class Decision:
    verdict: str
    at_n: float
    q_value: float
    basis: str | None

    def __post_init__(self):
        if self.verdict == "reject" and self.basis not in ("threshold_cross", "final_indicator"):
            raise ValueError(f"rejection needs a threshold or final basis, got {self.basis}")


@dataclass
class MonitorState:
    spec: TestSpec
    seed: int = 0
    n: int = 0
    time: float | None = None
    summary: dict = field(default_factory=dict)
    q_history: list = field(default_factory=list)
    qstar_history: list = field(default_factory=list)
    status: Status = Status.RUNNING
    tau: float | None = None
    evaluations: int = 0
    b: int = DEFAULT_B
    cadence: int = 1
    conservative: bool = False
    gamma_f: float | None = None

    @classmethod
    def start(cls, spec, seed=0, *, b=DEFAULT_B, cadence=1, conservative=False, gamma_f=None):
        if b < 1:
            raise ConfigError(f"must be >= 1, got {b}", field="b")
        if cadence < 1:
            raise ConfigError(f"must be >= 1, got {cadence}", field="cadence")
        if gamma_f is not None and not 0.0 < gamma_f < 1.0:
            raise ConfigError(f"must lie in (0, 1), got {gamma_f}", field="gamma_f")
        if int(seed) < 0:
            raise ConfigError("seed must be nonnegative", field="seed")
        return cls(spec=spec, seed=int(seed), summary=adapter(spec.family).init(spec), b=int(b),
                   cadence=int(cadence), conservative=bool(conservative), gamma_f=gamma_f)

    @property
    def terminal(self):
        return self.status is not Status.RUNNING

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "seed": self.seed,
            "n": self.n,
            "time": self.time,
            "summary": copy.deepcopy(self.summary),
            "q_history": [r.to_list() for r in self.q_history],
            "qstar_history": [r.to_list() for r in self.qstar_history],
            "status": self.status.value,
            "tau": self.tau,
            "evaluations": self.evaluations,
            "b": self.b,
            "cadence": self.cadence,
            "conservative": self.conservative,
            "gamma_f": self.gamma_f,
        }

    @classmethod
    def from_dict(cls, record):
        rec = dict(record)
        rec["spec"] = TestSpec.from_dict(rec["spec"])
        rec["q_history"] = [QRecord(*r) for r in rec["q_history"]]
        rec["qstar_history"] = [QRecord(*r) for r in rec["qstar_history"]]
        rec["status"] = Status(rec["status"])
        return cls(**rec)


def _crosses(record, gamma, conservative):
    value = record.q - 2.0 * record.se if conservative else record.q
    return value >= gamma


def decide(state):
    """Verdict implied by the recorded Q sequence (and Q*, when futility is on)."""
    spec = state.spec
    end = adapter(spec.family).terminal(spec)
    for rec in state.q_history:
        final = rec.index >= end
        if final and rec.q == 1.0:
            return Decision("reject", rec.index, rec.q, "final_indicator")
        if not final and _crosses(rec, spec.gamma, state.conservative):
            return Decision("reject", rec.index, rec.q, "threshold_cross")
        if state.gamma_f is not None:
            for qs in state.qstar_history:
                if qs.index == rec.index and qs.q >= state.gamma_f and not final:
                    return Decision("no_reject", rec.index, qs.q, "futility")
    if state.q_history:
        last = state.q_history[-1]
        if last.index >= end:
            return Decision("no_reject", last.index, last.q, "final_indicator")
        return Decision("continue", last.index, last.q, None)
    return Decision("continue", state.n, math.nan, None)


def _validate_ordinal(batch):
    if len(batch) == 0:
        raise DataError("empty batch")


def step(state, batch, q_eval=None, *, at=None, evaluate=None):
    """Ingest ``batch``, evaluate Q when due and update the status.

    Ordinal families index looks by sample count and evaluate every
    ``state.cadence`` observations (always at ``n_max``); ``evaluate=True``
    forces a look. Time-indexed families need ``at`` and evaluate there.
    ``q_eval(spec, summary, index, rng, b)`` overrides the family's evaluator.
    Returns a new state; the input is left untouched.
    """
    if state.terminal:
        raise DataError(f"experiment already stopped ({state.status.value}); observation rejected")
    spec = state.spec
    fam = adapter(spec.family)
    batch = list(batch)
    new = replace(state, q_history=list(state.q_history), qstar_history=list(state.qstar_history))

    if fam.time_indexed:
        if at is None:
            raise DataError("time-indexed family needs an analysis time")
        at = float(at)
        if not math.isfinite(at) or at < 0:
            raise DataError(f"invalid analysis time {at}")
        if state.time is not None and at <= state.time:
            raise DataError(f"analysis time {at} not after previous {state.time}")
        if at > fam.terminal(spec):
            raise DataError(f"analysis time {at} beyond the horizon {fam.terminal(spec)}")
        index = at
        due = True if evaluate is None else evaluate
        new.time = at
    else:
        _validate_ordinal(batch)
        if state.n + len(batch) > spec.n_max:
            raise DataError(f"{state.n + len(batch)} observations exceed n_max={spec.n_max}")
        index = state.n + len(batch)
        due = evaluate if evaluate is not None else (index % state.cadence == 0)
        due = due or index == spec.n_max

    if batch:
        new.summary = fam.ingest(spec, copy.deepcopy(state.summary), batch, state.n)
    new.n = state.n + len(batch)
    if not due:
        return new

    end = fam.terminal(spec)
    rng = stream(state.seed, state.evaluations, new.n)
    if index >= end:
        rec = QRecord(index, 1.0 if fam.final(spec, new.summary) else 0.0, 0.0)
    else:
        est = (q_eval or fam.q)(spec, new.summary, index, rng, state.b)
        rec = None if est is None else QRecord(index, est.q_hat, est.std_err)
    new.evaluations = state.evaluations + 1
    if rec is None:
        return new
    new.q_history.append(rec)

    if state.gamma_f is not None and index < end and not _crosses(rec, spec.gamma, state.conservative):
        qs = fam.q_star(spec, new.summary, index, stream(state.seed, state.evaluations, new.n, 1), state.b)
        new.qstar_history.append(QRecord(index, qs.q_hat, qs.std_err))

    verdict = decide(new)
    if verdict.verdict == "reject":
        new.status, new.tau = Status.REJECTED, verdict.at_n
    elif verdict.basis == "futility":
        new.status, new.tau = Status.STOPPED_FUTILE, verdict.at_n
    elif verdict.verdict == "no_reject":
        new.status, new.tau = Status.COMPLETED_NO_REJECT, verdict.at_n
    return new


def _digest(payload):
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def checkpoint(state):
    """Versioned, checksummed JSON text for ``state``."""
    payload = state.to_dict()
    return json.dumps({"version": CHECKPOINT_VERSION, "state": payload, "sha256": _digest(payload)},
                      sort_keys=True)


def restore(record):
    try:
        doc = json.loads(record)
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "state" not in doc:
        raise CheckpointError("checkpoint lacks a state record")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {doc.get('version')!r}, expected {CHECKPOINT_VERSION}")
    if doc.get("sha256") != _digest(doc["state"]):
        raise CheckpointError("checkpoint digest mismatch (corrupted record)")
    try:
        return MonitorState.from_dict(doc["state"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint state: {exc}") from None


def save_checkpoint(state, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(checkpoint(state))
    os.replace(tmp, path)


def load_checkpoint(path):
    try:
        with open(path) as fh:
            return restore(fh.read())
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from None


class AuditLog:
    """Append-only JSON-lines log."""

    def __init__(self, path):
        self.path = path

    def append(self, record):
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def records(self):
        if not os.path.exists(self.path):
            return []
        with open(self.path) as fh:
            return [json.loads(line) for line in fh if line.strip()]


def evaluation_records(before, after):
    """Log entries for the looks added between two states."""
    out = []
    new_q = after.q_history[len(before.q_history):]
    new_qs = after.qstar_history[len(before.qstar_history):]
    verdict = decide(after)
    for rec in new_q:
        entry = {"kind": "efficacy", "index": rec.index, "n": after.n, "q": rec.q, "se": rec.se,
                 "decision": "continue", "basis": None}
        if rec is new_q[-1] and verdict.verdict != "continue" and not new_qs:
            entry["decision"], entry["basis"] = verdict.verdict, verdict.basis
        out.append(entry)
    for rec in new_qs:
        entry = {"kind": "futility", "index": rec.index, "n": after.n, "q": rec.q, "se": rec.se,
                 "decision": "continue", "basis": None}
        if verdict.basis == "futility" and verdict.at_n == rec.index:
            entry["decision"], entry["basis"] = "no_reject", "futility"
        elif verdict.verdict != "continue":
            entry["decision"], entry["basis"] = verdict.verdict, verdict.basis
        out.append(entry)
    return out
