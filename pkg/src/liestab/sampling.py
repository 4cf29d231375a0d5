"""Partitions of the half-line and feedback sampling processes.

A sampling process restarts a multiflow at every partition time: step j
holds the schedule of the label chosen at the sampled state ``x_j`` for
the step duration, the endpoint becomes the next sample, and a running
integral cost accumulates on the same dense grid as the state.

Two step-size regimes are provided.  Multirank-scaled processes choose
each step inside ``[(k-1)/k * d_l, d_l]`` where ``l`` is the degree of the
label at the current sample; rank partitions follow the per-index band
``[(k-1)/(2k) * delta/j^(1/k), delta]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .brackets import ControlLabel
from .fields import PolyVectorField
from .flows import (
    DEFAULT_OPTIONS,
    STATUS_ALIVE,
    STATUS_BLOWN_UP,
    STATUS_REACHED,
    IntegrationOptions,
    TargetSet,
    Trajectory,
    _integrate_plan,
)
from .schedules import control_plan

STATUS_HORIZON = "horizon"
STATUS_STOPPED = "stopped"


@dataclass(frozen=True)
class Multirank:
    """Per-degree step bounds ``(d_1, ..., d_k)``, all positive."""

    deltas: tuple[float, ...]

    def __post_init__(self):
        if not self.deltas:
            raise ValueError("multirank must have at least one entry")
        if any(not d > 0 for d in self.deltas):
            raise ValueError(f"multirank entries must be positive, got {self.deltas}")

    def __len__(self) -> int:
        return len(self.deltas)

    def delta(self, degree: int) -> float:
        if not 1 <= degree <= len(self.deltas):
            raise ValueError(
                f"no step bound for degree {degree} in multirank of length {len(self.deltas)}"
            )
        return self.deltas[degree - 1]


def scaled_step_band(multirank: Multirank, k: int, degree: int) -> tuple[float, float]:
    """Admissible step interval ``[(k-1)/k * d_l, d_l]`` for a degree-l label."""
    d = multirank.delta(degree)
    return ((k - 1) / k) * d, d


def rank_step_band(delta: float, k: int, j: int) -> tuple[float, float]:
    """Admissible step interval for the j-th step of a degree-k rank-delta
    partition: ``[(k-1)/(2k) * delta/j^(1/k), delta]``."""
    if j < 1:
        raise ValueError("step index must be >= 1")
    return ((k - 1) / (2 * k)) * delta / j ** (1.0 / k), delta


class Partition:
    """A strictly increasing sequence of times starting at 0.

    Materialized lazily from a step rule when one is attached; finite
    explicit partitions simply run out.  Steps are stored as generated so
    band audits see them exactly, not as differences of accumulated times.
    """

    def __init__(self, times=None, step_rule=None):
        self._times = [0.0] if times is None else [float(t) for t in times]
        if self._times[0] != 0.0:
            raise ValueError("partitions start at 0")
        for a, b in zip(self._times, self._times[1:]):
            if not b > a:
                raise ValueError("partition times must be strictly increasing")
        self._steps = [b - a for a, b in zip(self._times, self._times[1:])]
        self._rule = step_rule

    @classmethod
    def uniform(cls, step: float, count: int = 0) -> "Partition":
        if not step > 0:
            raise ValueError("step must be positive")
        p = cls(step_rule=lambda j: step)
        p.ensure(count)
        return p

    @classmethod
    def from_steps(cls, steps) -> "Partition":
        times = [0.0]
        kept = []
        for s in steps:
            if not s > 0:
                raise ValueError("steps must be positive")
            times.append(times[-1] + float(s))
            kept.append(float(s))
        p = cls(times=times)
        p._steps = kept
        return p

    @classmethod
    def rank(cls, delta: float, k: int, count: int = 0) -> "Partition":
        """Default degree-k rank-delta partition with steps ``delta/j^(1/k)``."""
        if not delta > 0 or k < 1:
            raise ValueError("need delta > 0 and k >= 1")
        p = cls(step_rule=lambda j: delta / j ** (1.0 / k))
        p.ensure(count)
        return p

    def ensure(self, j: int) -> None:
        while len(self._times) <= j:
            if self._rule is None:
                raise IndexError(f"partition exhausted at index {len(self._times) - 1}")
            jj = len(self._times)
            step = float(self._rule(jj))
            if not step > 0:
                raise ValueError(f"step rule produced non-positive step {step} at j={jj}")
            self._times.append(self._times[-1] + step)
            self._steps.append(step)

    def time(self, j: int) -> float:
        self.ensure(j)
        return self._times[j]

    def has_time(self, j: int) -> bool:
        try:
            self.ensure(j)
        except IndexError:
            return False
        return True

    @property
    def times(self) -> np.ndarray:
        return np.array(self._times)

    def steps(self) -> np.ndarray:
        return np.array(self._steps)

    def __len__(self) -> int:
        return len(self._times)


def make_rank_partition(delta: float, k: int, count: int) -> Partition:
    """Materialize ``count`` steps of the default degree-k rank-delta
    partition; the step rule stays attached for lazy extension."""
    return Partition.rank(delta, k, count)


# Step-choice policies inside an admissible band, seeded rng for "random".
STEP_POLICIES = {
    "min": lambda lo, hi, rng: lo if lo > 0 else 0.25 * hi,
    "mid": lambda lo, hi, rng: 0.5 * (lo + hi),
    "max": lambda lo, hi, rng: hi,
    "random": lambda lo, hi, rng: rng.uniform(max(lo, 1e-3 * hi), hi),
}


@dataclass
class FeedbackGenerator:
    """A state-feedback choice of control label, with its degree bound."""

    fn: "callable"
    k: int
    m: int
    name: str = ""
    _validated: set = dc_field(default_factory=set, repr=False)

    def __call__(self, x) -> ControlLabel:
        label = self.fn(x)
        if not isinstance(label, ControlLabel):
            raise TypeError(f"generator {self.name!r} returned {type(label)!r}")
        key = id(label)
        if key not in self._validated:
            label.validate_against(self.m, self.k)
            if len(self._validated) < 4096:
                self._validated.add(key)
        return label


class Lagrangian:
    """A running-cost integrand ``l(x, a) >= 0`` over states and controls."""

    def __init__(self, kind: str, params: dict | None = None, fn=None):
        self.kind = kind
        self.params = dict(params or {})
        if kind == "zero":
            self._fast = lambda y, axis, sgn: 0.0
        elif kind == "norm":
            c = float(self.params.get("c", 1.0))
            self._fast = lambda y, axis, sgn: c * math.sqrt(sum(v * v for v in y))
        elif kind == "squared_norm":
            c = float(self.params.get("c", 1.0))
            self._fast = lambda y, axis, sgn: c * sum(v * v for v in y)
        elif kind == "custom":
            if fn is None:
                raise ValueError("custom Lagrangian needs fn(y, axis, sign)")
            self._fast = fn
        else:
            raise ValueError(f"unknown Lagrangian kind {kind!r}")

    def fast(self, y, axis: int, sign: int) -> float:
        return self._fast(y, axis, sign)

    def __call__(self, x, a) -> float:
        a = np.asarray(a, dtype=float)
        nz = np.nonzero(a)[0]
        axis = int(nz[0]) + 1 if len(nz) else 1
        sign = int(np.sign(a[axis - 1])) if len(nz) else 1
        return self._fast(tuple(float(v) for v in np.asarray(x, dtype=float)), axis, sign)

    def spot_check_nonneg(self, points, rng=None) -> bool:
        for p in points:
            for axis in (1,):
                for sgn in (+1, -1):
                    if self._fast(tuple(float(v) for v in p), axis, sgn) < 0:
                        return False
        return True

    def to_json_dict(self) -> dict:
        if self.kind == "custom":
            raise ValueError("custom Lagrangians are not JSON-serializable")
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Lagrangian":
        return cls(d["kind"], d.get("params", {}))


@dataclass
class StepRecord:
    """One completed sampling step: its interval, label, band, and the
    index range of its dense samples in the concatenated arrays.

    ``duration`` is the step length exactly as generated (the integrator's
    local final time); truncated steps end early at hit or blow-up.
    """

    index: int
    s_start: float
    s_end: float
    duration: float
    state: tuple[float, ...]
    label: ControlLabel
    degree: int
    switch: int
    band: tuple[float, float] | None
    i0: int
    i1: int
    truncated: bool = False


@dataclass
class SamplingProcess:
    """A feedback sampling process with its trajectory and running cost."""

    x0: np.ndarray
    times: np.ndarray
    states: np.ndarray
    ctrl_axis: np.ndarray
    ctrl_sign: np.ndarray
    cost: np.ndarray
    steps: list[StepRecord]
    status: str
    stop_index: int | None
    sigma: float | None
    horizon: float
    meta: dict = dc_field(default_factory=dict)

    @property
    def admissible(self) -> bool:
        """Blow-up is the one inadmissible outcome; a process that reaches
        the target approaches it by construction, and a horizon-limited run
        is admissible as far as it was observed."""
        return self.status != STATUS_BLOWN_UP

    @property
    def duration(self) -> float:
        return float(self.times[-1]) if len(self.times) else 0.0

    def endpoint(self) -> np.ndarray:
        return self.states[-1].copy()

    def step_trajectory(self, record: StepRecord) -> Trajectory:
        """The dense slice of one step, shifted to local time."""
        sl = slice(record.i0, record.i1 + 1)
        csl = slice(record.i0, record.i1)
        return Trajectory(
            times=self.times[sl] - record.s_start,
            states=self.states[sl].copy(),
            ctrl_axis=self.ctrl_axis[csl].copy(),
            ctrl_sign=self.ctrl_sign[csl].copy(),
            status=STATUS_ALIVE,
        )

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("j,s_start,s_end,degree,switch,label,x,cost\n")
            for r in self.steps:
                x_txt = ";".join(repr(v) for v in r.state)
                fh.write(
                    f"{r.index},{r.s_start!r},{r.s_end!r},{r.degree},{r.switch},"
                    f"{r.label.text()},{x_txt},{self.cost[r.i0]!r}\n"
                )

    def trace_csv(self, path) -> None:
        n = self.states.shape[1]
        with open(path, "w") as fh:
            fh.write("s," + ",".join(f"y{i + 1}" for i in range(n)) + ",i_active,sign_active,cost\n")
            for i, t in enumerate(self.times):
                k = min(i, len(self.ctrl_axis) - 1)
                row = ",".join(repr(v) for v in self.states[i])
                fh.write(f"{t!r},{row},{self.ctrl_axis[k]},{self.ctrl_sign[k]},{self.cost[i]!r}\n")

    def summary(self) -> dict:
        return {
            "status": self.status,
            "steps": len(self.steps),
            "duration": self.duration,
            "endpoint": [float(v) for v in self.states[-1]],
            "total_cost": float(self.cost[-1]),
            "stop_index": self.stop_index,
            "sigma": self.sigma,
            "meta": dict(self.meta),
        }


def _execute_process(
    gen: FeedbackGenerator,
    fields: list[PolyVectorField],
    lagrangian: Lagrangian | None,
    target: TargetSet,
    x,
    step_fn,
    horizon: float,
    opts: IntegrationOptions,
    stop_condition=None,
    meta: dict | None = None,
) -> SamplingProcess:
    """Shared runner: ``step_fn(j, state, label) -> (t_j, band)``.

    Raising StopIteration from step_fn ends the run (partition exhausted).
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if target.contains(x):
        raise ValueError("sampling process must start outside the target")

    fns = [f.compiled() for f in fields]
    lag = lagrangian.fast if lagrangian is not None else (lambda y, a, s: 0.0)

    x0 = np.asarray(x, dtype=float)
    y = tuple(float(v) for v in x0)
    times = [0.0]
    states = [y]
    ctrl_ax: list[int] = []
    ctrl_sg: list[int] = []
    cost = [0.0]
    steps: list[StepRecord] = []
    status = STATUS_HORIZON
    stop_index = None
    sigma = None

    s_prev = 0.0
    j = 0
    while s_prev < horizon:
        j += 1
        try:
            label = gen(y)
        except Exception as exc:  # surfaces with the failing step index
            raise ProcessStepError(j, exc) from exc
        try:
            t_j, band = step_fn(j, y, label)
        except StopIteration:
            j -= 1
            break
        plan = control_plan(label, t_j)
        lt, ls, lax, lsg, lcost, st, hit = _integrate_plan(
            fns, plan, y, opts, target=target, lagr_fast=lag
        )
        base_t = s_prev
        base_c = cost[-1]
        i0 = len(times) - 1
        times.extend(base_t + tt for tt in lt[1:])
        states.extend(ls[1:])
        ctrl_ax.extend(lax)
        ctrl_sg.extend(lsg)
        cost.extend(base_c + cc for cc in lcost[1:])
        s_end = times[-1]
        steps.append(
            StepRecord(
                index=j,
                s_start=base_t,
                s_end=s_end,
                duration=lt[-1],
                state=y,
                label=label,
                degree=label.degree,
                switch=label.switch,
                band=band,
                i0=i0,
                i1=len(times) - 1,
                truncated=st != STATUS_ALIVE,
            )
        )
        if st == STATUS_REACHED:
            status = STATUS_REACHED
            stop_index = j
            sigma = base_t + hit
            break
        if st == STATUS_BLOWN_UP:
            status = STATUS_BLOWN_UP
            stop_index = j
            sigma = s_end
            break
        y = ls[-1]
        s_prev = base_t + t_j
        # Keep partition bookkeeping exact: the stored step end is the
        # integrator's final time, equal to t_j by construction.
        if stop_condition is not None and stop_condition(s_prev, y):
            status = STATUS_STOPPED
            break

    return SamplingProcess(
        x0=x0,
        times=np.array(times),
        states=np.array(states),
        ctrl_axis=np.array(ctrl_ax, dtype=int),
        ctrl_sign=np.array(ctrl_sg, dtype=int),
        cost=np.array(cost),
        steps=steps,
        status=status,
        stop_index=stop_index,
        sigma=sigma,
        horizon=horizon,
        meta=dict(meta or {}),
    )


class ProcessStepError(RuntimeError):
    """A feedback generator failed during a sampling step."""

    def __init__(self, step_index: int, cause: Exception):
        super().__init__(f"generator failed at step {step_index}: {cause}")
        self.step_index = step_index


def run_sampling_process(
    gen: FeedbackGenerator,
    fields: list[PolyVectorField],
    lagrangian: Lagrangian | None,
    target: TargetSet,
    x,
    partition: Partition,
    horizon: float,
    opts: IntegrationOptions | None = None,
    stop_condition=None,
) -> SamplingProcess:
    """Run the process along a given partition up to the horizon."""

    def step_fn(j, state, label):
        if not partition.has_time(j):
            raise StopIteration
        return partition.time(j) - partition.time(j - 1), None

    return _execute_process(
        gen,
        fields,
        lagrangian,
        target,
        x,
        step_fn,
        horizon,
        opts or DEFAULT_OPTIONS,
        stop_condition=stop_condition,
        meta={"mode": "partition"},
    )


def make_scaled_partition(
    gen: FeedbackGenerator,
    fields: list[PolyVectorField],
    lagrangian: Lagrangian | None,
    target: TargetSet,
    x,
    multirank: Multirank,
    k: int,
    horizon: float,
    opts: IntegrationOptions | None = None,
    policy: str = "mid",
    rng: np.random.Generator | None = None,
    stop_condition=None,
) -> tuple[Partition, SamplingProcess]:
    """Build a multirank-scaled partition online and run its process.

    At each step the band is read off the degree of the label at the
    current sample; the policy picks a step inside it (midpoint default).
    """
    if len(multirank) < k:
        raise ValueError(
            f"multirank of length {len(multirank)} cannot serve degree bound {k}"
        )
    choose = STEP_POLICIES[policy]
    rng = rng or np.random.default_rng(0)

    def step_fn(j, state, label):
        lo, hi = scaled_step_band(multirank, k, label.degree)
        t_j = min(max(float(choose(lo, hi, rng)), lo), hi)
        return t_j, (lo, hi)

    proc = _execute_process(
        gen,
        fields,
        lagrangian,
        target,
        x,
        step_fn,
        horizon,
        opts or DEFAULT_OPTIONS,
        stop_condition=stop_condition,
        meta={"mode": "scaled", "policy": policy, "k": k, "multirank": list(multirank.deltas)},
    )
    partition = Partition.from_steps([r.duration for r in proc.steps])
    return partition, proc


def run_rank_process(
    gen: FeedbackGenerator,
    fields: list[PolyVectorField],
    lagrangian: Lagrangian | None,
    target: TargetSet,
    x,
    delta: float,
    k: int,
    horizon: float,
    opts: IntegrationOptions | None = None,
    policy: str = "default",
    rng: np.random.Generator | None = None,
    stop_condition=None,
) -> tuple[Partition, SamplingProcess]:
    """Run a process along a degree-k rank-delta partition.

    Policies: 'default' takes ``delta/j^(1/k)``, 'max' the constant upper
    bound, 'min' the band's lower edge (``delta/j`` when k = 1 leaves it
    open), 'random' draws inside the band.
    """
    rng = rng or np.random.default_rng(0)

    def step_fn(j, state, label):
        lo, hi = rank_step_band(delta, k, j)
        if policy == "default":
            t_j = delta / j ** (1.0 / k)
        elif policy == "max":
            t_j = hi
        elif policy == "min":
            t_j = lo if lo > 0 else delta / j
        elif policy == "random":
            t_j = rng.uniform(max(lo, 1e-3 * delta / j ** (1.0 / k)), hi)
        else:
            raise ValueError(f"unknown rank policy {policy!r}")
        return min(max(t_j, lo), hi) if lo > 0 else min(t_j, hi), (lo, hi)

    proc = _execute_process(
        gen,
        fields,
        lagrangian,
        target,
        x,
        step_fn,
        horizon,
        opts or DEFAULT_OPTIONS,
        stop_condition=stop_condition,
        meta={"mode": "rank", "policy": policy, "k": k, "delta": delta},
    )
    partition = Partition.from_steps([r.duration for r in proc.steps])
    return partition, proc


def audit_scaled_process(proc: SamplingProcess, multirank: Multirank, k: int) -> list[str]:
    """Post-hoc check of the multirank band from recorded labels and step
    durations; band arithmetic is recomputed independently so the
    comparison is exact."""
    issues = []
    for r in proc.steps:
        lo, hi = scaled_step_band(multirank, k, r.degree)
        if r.truncated:
            if r.duration > hi:
                issues.append(f"step {r.index}: truncated step {r.duration} above bound {hi}")
            continue
        if not (lo <= r.duration <= hi):
            issues.append(
                f"step {r.index}: {r.duration} outside [{lo}, {hi}] for degree {r.degree}"
            )
    return issues


def audit_rank_partition(partition: Partition, delta: float, k: int) -> list[str]:
    """Check every materialized step against the rank-delta band."""
    issues = []
    steps = partition.steps()
    for j, step in enumerate(steps, start=1):
        lo, hi = rank_step_band(delta, k, j)
        if not (lo <= step <= hi):
            issues.append(f"step {j}: {step} outside [{lo}, {hi}]")
    return issues


def trajectory_cost(times, states, ctrl_axis, ctrl_sign, lagrangian: Lagrangian) -> np.ndarray:
    """Recompute the cumulative cost of a stored trace with the same
    per-interval trapezoid rule used during integration: both endpoint
    values of an interval use that interval's control."""
    out = np.zeros(len(times))
    acc = 0.0
    for i in range(1, len(times)):
        axis = int(ctrl_axis[i - 1])
        sign = int(ctrl_sign[i - 1])
        l0 = lagrangian.fast(tuple(states[i - 1]), axis, sign)
        l1 = lagrangian.fast(tuple(states[i]), axis, sign)
        acc += 0.5 * (times[i] - times[i - 1]) * (l0 + l1)
        out[i] = acc
    return out
