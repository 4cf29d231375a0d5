"""Stabilizability certificates, their checkers, and the controllability
witness constructor.

A certificate packages the gauge U, the gain maps (phi, Gamma), the time
budget T(R, r), the multirank map d(R, r), and the cost-bound data
(Lambda, Psi, bilateral sequence u_i).  The regulated-stabilizability
checker samples multirank-scaled processes and tests, per run:

  (i)   overshoot:      d(y(s)) <= Gamma(R) on the horizon,
  (ii)  attractiveness: the first time U(y) <= phi(r) is <= T(R, r),
  (iii) trapping:       after any such time, d(y(s)) <= r,
  (iv)  cost:           J at that time is <= Lambda(R) * Psi(U(x), U(y)).

The witness constructor replays the staged recursion that turns a passing
certificate into an open-loop trajectory: thresholds u~_i anchored at
U(x), radii rho_i = phi^{-1}(u~_i), one scaled process per strip cut at
its first crossing, concatenated, with the telescoped cost envelope
W(x) = Lambda(phi^{-1}(U(x))) * Phi(U(x)) as the certified total cost.

Universal quantifiers over partitions and initial states are checked by
seeded sampling; reports state their coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .families import (
    BilateralSeq,
    CostSplit,
    GrowthMap,
    MonotoneMap,
    MultirankMap,
    StateNorm,
    TimeBudget,
)
from .fields import PolyVectorField
from .flows import STATUS_BLOWN_UP, STATUS_REACHED, IntegrationOptions, TargetSet, _rk4_step
from .sampling import (
    FeedbackGenerator,
    Lagrangian,
    SamplingProcess,
    make_scaled_partition,
    run_rank_process,
)


class CertificateConfigError(ValueError):
    """Certificate data violating its structural requirements."""


class WitnessConstructionError(RuntimeError):
    """A stage of the controllability construction failed."""

    def __init__(self, stage: int, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


def build_phi(
    psi: CostSplit,
    useq: BilateralSeq,
    u: float,
    rel_tol: float = 1e-14,
    max_terms: int = 10**6,
) -> float:
    """The telescoped cost envelope Phi.

    For u in the strip (u_{i+1}, u_i] this is ``Psi(u, u_{i+1}) plus the
    tail sum of Psi(u_j, u_{j+1})`` for j > i, truncated once increments
    fall below ``rel_tol`` relative to the accumulated value.  Phi(0) = 0.
    """
    u = float(u)
    if u < 0:
        raise ValueError(f"Phi is defined on [0, inf), got {u}")
    if u == 0.0:
        return 0.0
    i = useq.strip_index(u)
    head = psi(u, useq.u(i + 1))
    tail = 0.0
    for j in range(i + 1, i + 1 + max_terms):
        term = psi(useq.u(j), useq.u(j + 1))
        tail += term
        if term <= rel_tol * (head + tail):
            return head + tail
    raise CertificateConfigError(
        "cost-split series did not converge; the (Psi, u_i) family is not summable"
    )


@dataclass
class Certificate:
    """All data needed by the stabilizability checkers and the witness
    constructor."""

    u: StateNorm
    phi: MonotoneMap
    gamma: MonotoneMap
    t_bound: TimeBudget
    multirank: MultirankMap
    lam: GrowthMap
    psi: CostSplit
    useq: BilateralSeq
    k: int
    d_env: MonotoneMap | None = None
    notes: str = ""

    def __post_init__(self):
        if self.k < 1:
            raise CertificateConfigError("degree bound k must be >= 1")
        if self.k == 1 and not self.lam.is_const_one():
            raise CertificateConfigError("the degree-1 cost factor must be constant 1")
        if self.multirank.k < self.k:
            raise CertificateConfigError(
                f"multirank map covers {self.multirank.k} degrees, need {self.k}"
            )
        # Summability of the cost-split family; raises when the series
        # cannot be truncated.
        build_phi(self.psi, self.useq, self.useq.u(0))

    # -- evaluation helpers -------------------------------------------------

    def u_many(self, states) -> np.ndarray:
        return np.asarray(self.u(states), dtype=float)

    def u_scalar(self, y) -> float:
        return self.u.scalar(y)

    def phi_envelope(self, u: float) -> float:
        return build_phi(self.psi, self.useq, u)

    def w_bound(self, x) -> float:
        """Certified total cost from x: Lambda(phi^{-1}(U(x))) * Phi(U(x))."""
        u0 = self.u_scalar(tuple(float(v) for v in np.asarray(x, dtype=float)))
        return self.lam(self.phi.inverse(u0)) * self.phi_envelope(u0)

    def d_env_inverse(self, big_r: float) -> float:
        if self.d_env is None:
            raise CertificateConfigError(
                "certificate lacks a distance lower envelope; attach d_env or a GridEnvelope"
            )
        return self.d_env.inverse(big_r)

    def spot_check(self, target: TargetSet, box_lo, box_hi, rng=None, samples: int = 200) -> list[str]:
        """Cheap sampled sanity checks: positivity of U off the target and
        monotonicity of the gain maps on a grid."""
        rng = rng or np.random.default_rng(0)
        lo = np.asarray(box_lo, dtype=float)
        hi = np.asarray(box_hi, dtype=float)
        pts = rng.uniform(lo, hi, size=(samples, len(lo)))
        d = target.dist_many(pts)
        uvals = self.u_many(pts)
        issues = []
        outside = d > max(target.eps_hit, 1e-6)
        if np.any(uvals[outside] <= 0):
            issues.append("U is not positive at some sampled state outside the target")
        grid = np.linspace(1e-6, 10.0, 64)
        for name, m in (("phi", self.phi), ("gamma", self.gamma)):
            vals = [m(g) for g in grid]
            if any(b <= a for a, b in zip(vals, vals[1:])):
                issues.append(f"{name} is not strictly increasing on the check grid")
        lam_vals = [self.lam(g) for g in grid]
        if any(b < a for a, b in zip(lam_vals, lam_vals[1:])):
            issues.append("Lambda is not increasing on the check grid")
        return issues

    def to_json_dict(self) -> dict:
        out = {
            "u": self.u.to_json_dict(),
            "phi": self.phi.to_json_dict(),
            "gamma": self.gamma.to_json_dict(),
            "t_bound": self.t_bound.to_json_dict(),
            "multirank": self.multirank.to_json_dict(),
            "lambda": self.lam.to_json_dict(),
            "psi": self.psi.to_json_dict(),
            "u_seq": self.useq.to_json_dict(),
            "k": self.k,
            "notes": self.notes,
        }
        if self.d_env is not None:
            out["d_env"] = self.d_env.to_json_dict()
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "Certificate":
        return cls(
            u=StateNorm.from_json_dict(d["u"]),
            phi=MonotoneMap.from_json_dict(d["phi"]),
            gamma=MonotoneMap.from_json_dict(d["gamma"]),
            t_bound=TimeBudget.from_json_dict(d["t_bound"]),
            multirank=MultirankMap.from_json_dict(d["multirank"]),
            lam=GrowthMap.from_json_dict(d["lambda"]),
            psi=CostSplit.from_json_dict(d["psi"]),
            useq=BilateralSeq.from_json_dict(d["u_seq"]),
            k=int(d["k"]),
            d_env=MonotoneMap.from_json_dict(d["d_env"]) if "d_env" in d else None,
            notes=d.get("notes", ""),
        )


# ---------------------------------------------------------------------------
# Distance lower envelope


def d_lower_envelope(
    u_fn,
    target: TargetSet,
    u: float,
    box_lo,
    box_hi,
    pts: int = 33,
    refine: bool = True,
) -> float:
    """Grid-approximated ``inf { d(x) : U(x) >= u }`` over a search box.

    With ``refine`` the best grid point is pushed toward its target
    projection by bisection while keeping the constraint, which removes
    the grid-step bias for radially monotone U.  Returns +inf when no
    grid point satisfies the constraint.
    """
    if u < 0:
        raise ValueError("u must be >= 0")
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    axes = [np.linspace(lo[i], hi[i], pts) for i in range(len(lo))]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    uvals = np.asarray(u_fn(points), dtype=float)
    d = target.dist_many(points)
    feasible = uvals >= u
    if not np.any(feasible):
        return math.inf
    idx = int(np.argmin(np.where(feasible, d, np.inf)))
    best = points[idx]
    best_d = float(d[idx])
    if not refine:
        return best_d
    proj = target.project(best)
    if proj is None:
        return best_d
    if float(np.asarray(u_fn(proj[None, :]))[0]) >= u:
        return float(target.dist_many(proj[None, :])[0])

    def feas(s: float) -> bool:
        x = best + s * (proj - best)
        return float(np.asarray(u_fn(x[None, :]))[0]) >= u

    lo_s, hi_s = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo_s + hi_s)
        if feas(mid):
            lo_s = mid
        else:
            hi_s = mid
    x_star = best + lo_s * (proj - best)
    return float(target.dist_many(x_star[None, :])[0])


class GridEnvelope:
    """Precomputed distance lower envelope with a monotone inverse.

    Sorts sampled (U, d) pairs by U and takes suffix minima of d, so a
    query is a binary search.  ``inverse(R)`` is the largest sampled u
    whose envelope value stays <= R.
    """

    def __init__(self, u_fn, target: TargetSet, box_lo, box_hi, pts: int = 41):
        lo = np.asarray(box_lo, dtype=float)
        hi = np.asarray(box_hi, dtype=float)
        axes = [np.linspace(lo[i], hi[i], pts) for i in range(len(lo))]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=-1)
        uvals = np.asarray(u_fn(points), dtype=float)
        d = target.dist_many(points)
        order = np.argsort(uvals)
        self.u_sorted = uvals[order]
        self.d_suffix_min = np.minimum.accumulate(d[order][::-1])[::-1]

    def __call__(self, u: float) -> float:
        i = int(np.searchsorted(self.u_sorted, u, side="left"))
        if i >= len(self.u_sorted):
            return math.inf
        return float(self.d_suffix_min[i])

    def inverse(self, big_r: float) -> float:
        ok = self.d_suffix_min <= big_r
        if not np.any(ok):
            return 0.0
        return float(self.u_sorted[np.nonzero(ok)[0][-1]])


# ---------------------------------------------------------------------------
# Reports


@dataclass
class ConditionResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "margin": float(self.margin),
            "detail": self.detail,
        }


@dataclass
class RunRecord:
    big_r: float
    r: float
    x0: list
    policy: str
    status: str
    horizon: float
    conditions: list
    t_hit_u: float | None = None
    t_hit_dist: float | None = None
    steps: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def to_json_dict(self) -> dict:
        return {
            "R": self.big_r,
            "r": self.r,
            "x0": [float(v) for v in self.x0],
            "policy": self.policy,
            "status": self.status,
            "horizon": self.horizon,
            "t_hit_u": self.t_hit_u,
            "t_hit_dist": self.t_hit_dist,
            "steps": self.steps,
            "passed": self.passed,
            "conditions": [c.to_json_dict() for c in self.conditions],
        }


@dataclass
class CheckReport:
    notion: str
    passed: bool
    runs: list
    coverage: dict
    audits: list = dc_field(default_factory=list)
    notes: str = ""

    def worst_margins(self) -> dict:
        worst: dict[str, float] = {}
        for run in self.runs:
            for c in run.conditions:
                if c.name not in worst or c.margin < worst[c.name]:
                    worst[c.name] = c.margin
        return worst

    def to_json_dict(self) -> dict:
        return {
            "notion": self.notion,
            "passed": bool(self.passed),
            "coverage": self.coverage,
            "worst_margins": {k: float(v) for k, v in sorted(self.worst_margins().items())},
            "audits": list(self.audits),
            "notes": self.notes,
            "runs": [r.to_json_dict() for r in self.runs],
        }

    def table(self) -> str:
        lines = [
            f"notion: {self.notion}   passed: {self.passed}",
            f"coverage: {self.coverage}",
        ]
        if self.audits:
            lines.append("audits:")
            lines.extend(f"  - {a}" for a in self.audits)
        header = f"{'R':>8} {'r':>8} {'policy':>8} {'status':>10} {'pass':>5}  worst condition"
        lines.append(header)
        lines.append("-" * len(header))
        for run in self.runs:
            worst = min(run.conditions, key=lambda c: c.margin) if run.conditions else None
            desc = f"{worst.name} margin {worst.margin:.3g}" if worst else "-"
            lines.append(
                f"{run.big_r:>8.3g} {run.r:>8.3g} {run.policy:>8} {run.status:>10} "
                f"{str(run.passed):>5}  {desc}"
            )
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# State sampling


def default_state_sampler(target: TargetSet, dim: int, big_r: float, count: int, rng) -> list[np.ndarray]:
    """Seeded states with d(x) <= R: the two extreme points along the last
    axis first (the singular directions of bracket benchmarks), then
    alternating sphere (d = R) and interior draws in random directions."""
    if target.kind != "ball":
        raise ValueError("the default sampler needs a ball target; pass explicit states")
    center = np.asarray(target.params["center"], dtype=float)
    radius = target.params["radius"]
    out = []
    for i in range(count):
        if i == 0 or i == 1:
            u = np.zeros(dim)
            u[-1] = 1.0 if i == 0 else -1.0
            want = big_r
        else:
            v = rng.normal(size=dim)
            u = v / np.linalg.norm(v)
            want = big_r if i % 2 == 0 else big_r * rng.uniform(0.25, 0.95)
        out.append(center + (radius + want) * u)
    return out


# ---------------------------------------------------------------------------
# Regulated stabilizability checker


def _first_crossing(times, values, threshold):
    """First time a sampled curve reaches <= threshold, linearly
    interpolated; None when it never does."""
    below = values <= threshold
    if not np.any(below):
        return None, None
    i = int(np.argmax(below))
    if i == 0:
        return float(times[0]), 0
    v0, v1 = values[i - 1], values[i]
    t0, t1 = times[i - 1], times[i]
    if v0 == v1:
        return float(t1), i
    frac = (v0 - threshold) / (v0 - v1)
    return float(t0 + frac * (t1 - t0)), i


def check_stabilizability(
    gen: FeedbackGenerator,
    fields: list[PolyVectorField],
    lagrangian: Lagrangian,
    target: TargetSet,
    cert: Certificate,
    trials,
    states_per_pair: int = 20,
    policies=("min", "mid", "max", "random"),
    horizon: float | None = None,
    seed: int = 0,
    opts: IntegrationOptions | None = None,
    states=None,
    trap_window: float | None = None,
) -> CheckReport:
    """Sample multirank-scaled processes over trial (R, r) pairs and test
    the four regulated-stabilizability conditions on each.

    Processes run just past the time budget; once the gauge threshold is
    crossed they continue for a trapping window, and for-all-time claims
    are horizon-limited by construction (flagged in the coverage notes).
    """
    rng = np.random.default_rng(seed)
    runs: list[RunRecord] = []
    audits: list[str] = []
    horizon_limited = 0

    for (big_r, r) in trials:
        if not (big_r > r > 0):
            raise ValueError(f"trial pair needs R > r > 0, got ({big_r}, {r})")
        mr = cert.multirank(big_r, r)
        t_budget = cert.t_bound(big_r, r)
        phi_r = cert.phi(r)
        gamma_r = cert.gamma(big_r)
        hor = horizon if horizon is not None else 1.05 * t_budget
        window = trap_window if trap_window is not None else max(1.0, 0.02 * t_budget)
        pair_states = (
            states
            if states is not None
            else default_state_sampler(target, fields[0].dim, big_r, states_per_pair, rng)
        )

        for x0 in pair_states:
            dx0 = float(target.dist_many(np.asarray(x0)[None, :])[0])
            inv_u0 = cert.phi.inverse(cert.u_scalar(tuple(float(v) for v in x0)))
            if inv_u0 < dx0 - 1e-9:
                audits.append(
                    f"certificate inconsistency: phi^-1(U(x)) = {inv_u0:.6g} < d(x) = "
                    f"{dx0:.6g} at x = {list(map(float, x0))}"
                )
            for policy in policies:
                found = [None]

                def stopper(s, y, _found=found):
                    if _found[0] is None and cert.u_scalar(y) <= phi_r:
                        _found[0] = s
                    return _found[0] is not None and s >= _found[0] + window

                _, proc = make_scaled_partition(
                    gen,
                    fields,
                    lagrangian,
                    target,
                    x0,
                    mr,
                    cert.k,
                    hor,
                    opts=opts,
                    policy=policy,
                    rng=rng,
                    stop_condition=stopper,
                )
                rec = _evaluate_regulated_run(
                    proc, target, cert, big_r, r, phi_r, gamma_r, t_budget, policy, hor
                )
                if rec.status not in (STATUS_REACHED,):
                    horizon_limited += 1
                runs.append(rec)

    passed = all(r.passed for r in runs) and not audits
    coverage = {
        "pairs": len(list(trials)),
        "states_per_pair": states_per_pair if states is None else len(states),
        "policies": list(policies),
        "runs": len(runs),
        "horizon_limited_runs": horizon_limited,
        "seed": seed,
    }
    return CheckReport(
        notion="degree-k sample stabilizability with regulated cost",
        passed=passed,
        runs=runs,
        coverage=coverage,
        audits=audits,
        notes=cert.notes,
    )


def _evaluate_regulated_run(
    proc: SamplingProcess,
    target: TargetSet,
    cert: Certificate,
    big_r: float,
    r: float,
    phi_r: float,
    gamma_r: float,
    t_budget: float,
    policy: str,
    hor: float,
) -> RunRecord:
    conditions = []
    admissible = proc.admissible
    conditions.append(
        ConditionResult(
            "admissible",
            admissible,
            math.inf if admissible else -math.inf,
            "" if admissible else f"process {proc.status}",
        )
    )
    if not admissible:
        for name in ("overshoot", "attractiveness", "trapping", "cost"):
            conditions.append(ConditionResult(name, False, -math.inf, "process inadmissible"))
        return RunRecord(
            big_r, r, [float(v) for v in proc.x0], policy, proc.status, hor, conditions,
            steps=len(proc.steps),
        )

    d_arr = target.dist_many(proc.states)
    u_arr = cert.u_many(proc.states)

    # (i) overshoot
    max_d = float(np.max(d_arr))
    conditions.append(
        ConditionResult("overshoot", max_d <= gamma_r, gamma_r - max_d, f"max d = {max_d:.6g}")
    )

    # (ii) attractiveness; entering the target counts (the trajectory
    # freezes on the target with d -> 0, the gauge being merely small
    # rather than exactly zero on the boundary).
    t_u, idx = _first_crossing(proc.times, u_arr, phi_r)
    if t_u is not None:
        # Gauge value at the crossing itself: the threshold at an interior
        # crossing, the actual initial value when already inside.
        u_at_t = float(u_arr[0]) if idx == 0 else phi_r
    elif proc.status == STATUS_REACHED:
        t_u = proc.sigma
        idx = len(proc.times) - 1
        u_at_t = float(u_arr[idx])
    if t_u is None:
        conditions.append(
            ConditionResult(
                "attractiveness",
                False,
                -math.inf,
                f"U never reached phi(r) = {phi_r:.6g} within the horizon",
            )
        )
        conditions.append(ConditionResult("trapping", True, math.inf, "vacuous: no crossing"))
        conditions.append(ConditionResult("cost", True, math.inf, "vacuous: no crossing"))
        return RunRecord(
            big_r, r, [float(v) for v in proc.x0], policy, proc.status, hor, conditions,
            steps=len(proc.steps),
        )
    conditions.append(
        ConditionResult("attractiveness", t_u <= t_budget + 1e-9, t_budget - t_u, f"t = {t_u:.6g}")
    )

    # (iii) trapping from the first sampled crossing onward
    suffix_max = float(np.max(d_arr[idx:]))
    conditions.append(
        ConditionResult("trapping", suffix_max <= r, r - suffix_max, f"suffix max d = {suffix_max:.6g}")
    )

    # (iv) cost through the crossing
    j_t = float(np.interp(t_u, proc.times, proc.cost))
    bound = cert.lam(big_r) * cert.psi(cert.u_scalar(tuple(float(v) for v in proc.x0)), u_at_t)
    conditions.append(
        ConditionResult("cost", j_t <= bound + 1e-12, bound - j_t, f"J = {j_t:.6g} vs {bound:.6g}")
    )

    t_d, _ = _first_crossing(proc.times, d_arr, r)
    return RunRecord(
        big_r,
        r,
        [float(v) for v in proc.x0],
        policy,
        proc.status,
        hor,
        conditions,
        t_hit_u=t_u,
        t_hit_dist=t_d,
        steps=len(proc.steps),
    )


# ---------------------------------------------------------------------------
# Plain degree-k sample stabilizability (rank partitions)


def check_sample_stab_degree_k(
    gen: FeedbackGenerator,
    fields: list[PolyVectorField],
    target: TargetSet,
    gamma: MonotoneMap,
    s_bound,
    delta_fn,
    trials,
    k: int,
    states_per_pair: int = 10,
    policies=("default", "random"),
    horizon: float | None = None,
    seed: int = 0,
    opts: IntegrationOptions | None = None,
    states=None,
) -> CheckReport:
    """Check overshoot and uniform attractiveness over rank-delta
    partitions: d(y(s)) <= Gamma(R) always and d(y(s)) <= r for s >= S(R, r)."""
    rng = np.random.default_rng(seed)
    runs: list[RunRecord] = []
    horizon_limited = 0

    for (big_r, r) in trials:
        if not (big_r > r > 0):
            raise ValueError(f"trial pair needs R > r > 0, got ({big_r}, {r})")
        delta = float(delta_fn(big_r, r))
        s_settle = float(s_bound(big_r, r))
        gamma_r = gamma(big_r)
        hor = horizon if horizon is not None else 1.05 * s_settle
        pair_states = (
            states
            if states is not None
            else default_state_sampler(target, fields[0].dim, big_r, states_per_pair, rng)
        )
        for x0 in pair_states:
            for policy in policies:
                _, proc = run_rank_process(
                    gen, fields, None, target, x0, delta, k, hor,
                    opts=opts, policy=policy, rng=rng,
                )
                conditions = []
                admissible = proc.admissible
                conditions.append(
                    ConditionResult(
                        "admissible", admissible, math.inf if admissible else -math.inf,
                        "" if admissible else f"process {proc.status}",
                    )
                )
                if admissible:
                    d_arr = target.dist_many(proc.states)
                    max_d = float(np.max(d_arr))
                    conditions.append(
                        ConditionResult("overshoot", max_d <= gamma_r, gamma_r - max_d, "")
                    )
                    after = proc.times >= s_settle
                    if np.any(after):
                        tail_max = float(np.max(d_arr[after]))
                        conditions.append(
                            ConditionResult(
                                "attractiveness", tail_max <= r, r - tail_max,
                                f"max d after S = {tail_max:.6g}",
                            )
                        )
                    elif proc.status == STATUS_REACHED:
                        conditions.append(
                            ConditionResult("attractiveness", True, r, "target reached before S")
                        )
                    else:
                        conditions.append(
                            ConditionResult(
                                "attractiveness", False, -math.inf,
                                "horizon ended before the settling time",
                            )
                        )
                else:
                    conditions.append(
                        ConditionResult("overshoot", False, -math.inf, "process inadmissible")
                    )
                    conditions.append(
                        ConditionResult("attractiveness", False, -math.inf, "process inadmissible")
                    )
                if proc.status != STATUS_REACHED:
                    horizon_limited += 1
                runs.append(
                    RunRecord(
                        big_r, r, [float(v) for v in x0], policy, proc.status, hor,
                        conditions, steps=len(proc.steps),
                    )
                )

    coverage = {
        "pairs": len(list(trials)),
        "states_per_pair": states_per_pair if states is None else len(states),
        "policies": list(policies),
        "runs": len(runs),
        "horizon_limited_runs": horizon_limited,
        "seed": seed,
    }
    return CheckReport(
        notion="degree-k sample stabilizability (rank partitions)",
        passed=all(r.passed for r in runs),
        runs=runs,
        coverage=coverage,
    )


# ---------------------------------------------------------------------------
# Controllability witness


@dataclass
class GacStage:
    index: int
    rho_prev: float
    rho: float
    u_target: float
    t_budget: float
    t_used: float
    cost_used: float
    cost_bound: float
    u_at_cut: float

    def to_json_dict(self) -> dict:
        return {
            "index": self.index,
            "rho_prev": self.rho_prev,
            "rho": self.rho,
            "u_target": self.u_target,
            "t_budget": self.t_budget,
            "t_used": self.t_used,
            "cost_used": self.cost_used,
            "cost_bound": self.cost_bound,
            "u_at_cut": self.u_at_cut,
        }


@dataclass
class GacWitness:
    """A concatenated open-loop control-trajectory-cost triple built from
    staged scaled processes, with its certified bounds."""

    x0: np.ndarray
    big_r: float
    r: float
    j_bar: int
    i_r: int
    i_big_r: int
    zeta: float
    gamma_bound: float
    s_bound: float
    w_bound: float
    u_tilde: list
    rho: list
    breakpoints: list
    times: np.ndarray
    states: np.ndarray
    cost: np.ndarray
    stages: list
    status: str
    terminal_distance: float

    def total_cost(self) -> float:
        return float(self.cost[-1])

    def summary(self) -> dict:
        return {
            "x0": [float(v) for v in self.x0],
            "R": self.big_r,
            "r": self.r,
            "j_bar": self.j_bar,
            "i_r": self.i_r,
            "i_R": self.i_big_r,
            "zeta": self.zeta,
            "gamma_bound": self.gamma_bound,
            "s_bound": self.s_bound,
            "w_bound": self.w_bound,
            "stages": [s.to_json_dict() for s in self.stages],
            "breakpoints": [float(b) for b in self.breakpoints],
            "duration": float(self.times[-1]) if len(self.times) else 0.0,
            "total_cost": self.total_cost(),
            "status": self.status,
            "terminal_distance": self.terminal_distance,
        }


def construct_gac_witness(
    gen: FeedbackGenerator,
    fields: list[PolyVectorField],
    lagrangian: Lagrangian,
    target: TargetSet,
    cert: Certificate,
    x,
    big_r: float,
    r: float,
    opts: IntegrationOptions | None = None,
    policy: str = "mid",
    rng: np.random.Generator | None = None,
    stage_surplus: int = 8,
    stop_frac: float = 0.1,
    max_stages: int = 64,
) -> GacWitness:
    """Build the staged open-loop witness for controllability from x.

    Runs one multirank-scaled process per gauge strip, cut at its first
    crossing of the strip threshold (refined by partial-step bisection),
    and concatenates trajectories and costs.  Stops once the distance
    drops to ``stop_frac * r`` or after the strip count for r plus a
    surplus.  A stage that misses its threshold inside its time budget
    raises :class:`WitnessConstructionError` naming the stage.
    """
    x0 = np.asarray(x, dtype=float)
    if not (0 < r < big_r):
        raise ValueError(f"need 0 < r < R, got r={r}, R={big_r}")
    if target.contains(x0):
        raise ValueError("witness must start outside the target")
    dx0 = float(target.dist_many(x0[None, :])[0])
    if dx0 > big_r + 1e-12:
        raise ValueError(f"d(x) = {dx0} exceeds R = {big_r}")
    rng = rng or np.random.default_rng(0)

    u0 = cert.u_scalar(tuple(float(v) for v in x0))
    j_bar = cert.useq.strip_index(u0)

    def u_tilde(i: int) -> float:
        if i == 0:
            return u0
        if i >= 1:
            return cert.useq.u(j_bar + i)
        return cert.useq.u(j_bar + i + 1)

    def rho(i: int) -> float:
        return cert.phi.inverse(u_tilde(i))

    def stage_of(v: float) -> int:
        """Integer i with u~(i) < v <= u~(i-1)."""
        i = 0
        if u_tilde(0) >= v:
            while u_tilde(i) >= v:
                i += 1
                if i > 10**4:
                    raise CertificateConfigError("strip search diverged")
            return i
        while u_tilde(i) < v:
            i -= 1
            if i < -(10**4):
                raise CertificateConfigError("strip search diverged")
        return i + 1

    d_inv_r = cert.d_env_inverse(big_r)
    zeta = cert.phi.inverse(d_inv_r)
    gamma_bound = cert.gamma(zeta)
    i_r = stage_of(cert.phi(cert.gamma.inverse(r)))
    i_big_r = stage_of(d_inv_r) - 1
    n_strips = i_r - i_big_r
    if n_strips <= 0:
        raise CertificateConfigError(
            f"strip indices out of order: i(r) = {i_r} <= i(R) = {i_big_r}"
        )
    s_bound = n_strips * cert.t_bound(rho(i_big_r), rho(i_r))
    w_bound = cert.lam(cert.phi.inverse(u0)) * cert.phi_envelope(u0)

    fns = [f.compiled() for f in fields]
    times = [np.array([0.0])]
    states = [x0[None, :]]
    costs = [np.array([0.0])]
    breakpoints: list[float] = []
    stages: list[GacStage] = []
    u_list = [u0]
    rho_list = [rho(0)]
    status = "complete"
    current = x0
    t_off = 0.0
    c_off = 0.0
    stage_cap = max(i_r, 0) + stage_surplus

    for i in range(1, max_stages + 1):
        rho_prev, rho_i = rho(i - 1), rho(i)
        u_i = u_tilde(i)
        u_list.append(u_i)
        rho_list.append(rho_i)
        mr = cert.multirank(rho_prev, rho_i)
        t_budget = cert.t_bound(rho_prev, rho_i)

        hit = [None]

        def stopper(s, y, _hit=hit, _u=u_i):
            if _hit[0] is None and cert.u_scalar(y) <= _u:
                _hit[0] = s
                return True
            return False

        _, proc = make_scaled_partition(
            gen, fields, lagrangian, target, current, mr, cert.k,
            1.05 * t_budget + 1e-9, opts=opts, policy=policy, rng=rng,
            stop_condition=stopper,
        )

        u_arr = cert.u_many(proc.states)
        cut = _refined_stage_cut(proc, u_arr, u_i, cert, fns, lagrangian)
        if cut is None:
            if proc.status == STATUS_REACHED:
                # Entered the target before reaching the threshold: the
                # witness terminates here with the hit tail attached.
                times.append(t_off + proc.times[1:])
                states.append(proc.states[1:])
                costs.append(c_off + proc.cost[1:])
                stages.append(
                    GacStage(
                        i, rho_prev, rho_i, u_i, t_budget, float(proc.times[-1]),
                        float(proc.cost[-1]),
                        cert.lam(rho_prev) * cert.psi(u_tilde(i - 1), u_i),
                        float(u_arr[-1]),
                    )
                )
                breakpoints.append(t_off + float(proc.times[-1]))
                status = "target_reached"
                break
            if proc.status == STATUS_BLOWN_UP:
                raise WitnessConstructionError(i, "scaled process blew up")
            raise WitnessConstructionError(
                i,
                f"gauge never reached {u_i:.6g} within the stage budget "
                f"T = {t_budget:.6g}",
            )
        t_cut, y_cut, c_cut, idx = cut
        if t_cut > t_budget + 1e-9:
            raise WitnessConstructionError(
                i, f"threshold reached at {t_cut:.6g} > budget {t_budget:.6g}"
            )
        if idx == 0:
            # Already inside the strip at the stage start: zero-length stage.
            stages.append(
                GacStage(
                    i, rho_prev, rho_i, u_i, t_budget, 0.0, 0.0,
                    cert.lam(rho_prev) * cert.psi(u_tilde(i - 1), u_i),
                    float(u_arr[0]),
                )
            )
            breakpoints.append(t_off)
            if i >= stage_cap:
                break
            continue
        times.append(t_off + np.append(proc.times[1:idx], t_cut))
        states.append(np.vstack([proc.states[1:idx], np.asarray(y_cut)[None, :]]))
        costs.append(c_off + np.append(proc.cost[1:idx], c_cut))
        stages.append(
            GacStage(
                i, rho_prev, rho_i, u_i, t_budget, t_cut, c_cut,
                cert.lam(rho_prev) * cert.psi(u_tilde(i - 1), u_i),
                cert.u_scalar(tuple(float(v) for v in y_cut)),
            )
        )
        t_off += t_cut
        c_off += c_cut
        breakpoints.append(t_off)
        current = np.asarray(y_cut, dtype=float)

        if float(target.dist_many(current[None, :])[0]) <= stop_frac * r:
            break
        if i >= stage_cap:
            break

    all_times = np.concatenate(times)
    all_states = np.vstack(states)
    all_costs = np.concatenate(costs)
    terminal_d = float(target.dist_many(all_states[-1][None, :])[0])
    return GacWitness(
        x0=x0,
        big_r=big_r,
        r=r,
        j_bar=j_bar,
        i_r=i_r,
        i_big_r=i_big_r,
        zeta=zeta,
        gamma_bound=gamma_bound,
        s_bound=s_bound,
        w_bound=w_bound,
        u_tilde=u_list,
        rho=rho_list,
        breakpoints=breakpoints,
        times=all_times,
        states=all_states,
        cost=all_costs,
        stages=stages,
        status=status,
        terminal_distance=terminal_d,
    )


def _refined_stage_cut(proc: SamplingProcess, u_arr, threshold, cert, fns, lagrangian):
    """Locate the first dense crossing of the gauge below a threshold and
    refine it inside its substep by bisection on partial RK4 steps.

    Returns (t_cut, state, cost, sample_index_after) or None when the
    stored samples never cross.
    """
    below = u_arr <= threshold
    if not np.any(below):
        return None
    idx = int(np.argmax(below))
    if idx == 0:
        return 0.0, proc.states[0].copy(), 0.0, 0

    y_prev = tuple(proc.states[idx - 1])
    h = float(proc.times[idx] - proc.times[idx - 1])
    axis = int(proc.ctrl_axis[idx - 1])
    sgn = int(proc.ctrl_sign[idx - 1])
    fn = fns[axis - 1]
    hs = h * sgn

    def state_at(theta: float):
        return _rk4_step(fn, y_prev, hs * theta)

    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if cert.u_scalar(state_at(mid)) <= threshold:
            hi = mid
        else:
            lo = mid
    y_cut = state_at(hi)
    t_cut = float(proc.times[idx - 1]) + hi * h
    if lagrangian is not None:
        l0 = lagrangian.fast(y_prev, axis, sgn)
        l1 = lagrangian.fast(y_cut, axis, sgn)
        c_cut = float(proc.cost[idx - 1]) + 0.5 * hi * h * (l0 + l1)
    else:
        c_cut = float(proc.cost[idx - 1])
    return t_cut, np.array(y_cut, dtype=float), c_cut, idx


def check_gac(
    witness: GacWitness,
    target: TargetSet,
    gamma_bound: float,
    s_bound: float,
    w_bound: float,
    terminal_tol: float | None = None,
) -> CheckReport:
    """Evaluate the four controllability conditions on a stored witness."""
    d_arr = target.dist_many(witness.states)
    conditions = []

    max_d = float(np.max(d_arr))
    conditions.append(
        ConditionResult("overshoot", max_d <= gamma_bound, gamma_bound - max_d, f"max d = {max_d:.6g}")
    )

    after = witness.times >= s_bound
    if np.any(after):
        tail = float(np.max(d_arr[after]))
        conditions.append(
            ConditionResult("uniform_attractiveness", tail <= witness.r, witness.r - tail, "")
        )
    else:
        term = float(d_arr[-1])
        conditions.append(
            ConditionResult(
                "uniform_attractiveness",
                term <= witness.r,
                witness.r - term,
                "witness ends before S; frozen continuation checked",
            )
        )

    tol = terminal_tol if terminal_tol is not None else witness.r / 10.0
    duration = float(witness.times[-1]) if len(witness.times) else 0.0
    decade = witness.times >= duration / 10.0
    slope = 0.0
    if np.sum(decade) >= 2 and duration > 0:
        slope = float(np.polyfit(witness.times[decade], d_arr[decade], 1)[0])
    term_d = float(d_arr[-1])
    trend_ok = (slope < 0 or term_d <= target.eps_hit) and term_d <= tol
    conditions.append(
        ConditionResult(
            "total_attractiveness", trend_ok, tol - term_d,
            f"terminal d = {term_d:.6g}, last-decade slope = {slope:.3g}",
        )
    )

    total = witness.total_cost()
    conditions.append(
        ConditionResult("cost", total <= w_bound + 1e-12, w_bound - total, f"total = {total:.6g}")
    )

    run = RunRecord(
        witness.big_r, witness.r, [float(v) for v in witness.x0], "witness",
        witness.status, duration, conditions,
    )
    return CheckReport(
        notion="global asymptotic controllability with regulated cost",
        passed=run.passed,
        runs=[run],
        coverage={"witness_stages": len(witness.stages)},
    )


def witness_cost_audit(witness: GacWitness, cert: Certificate) -> list[str]:
    """Telescoping audit: recorded stage costs against their per-stage
    bounds in aggregate, and the bound sum against Lambda(rho_0)*Phi(U(x))."""
    issues = []
    recorded = sum(s.cost_used for s in witness.stages)
    bound_sum = sum(s.cost_bound for s in witness.stages)
    envelope = cert.lam(witness.rho[0]) * cert.phi_envelope(witness.u_tilde[0])
    if recorded > bound_sum + 1e-9 * (1.0 + abs(bound_sum)):
        issues.append(
            f"recorded stage costs {recorded:.6g} exceed the telescoped bound sum {bound_sum:.6g}"
        )
    if bound_sum > envelope + 1e-9 * (1.0 + abs(envelope)):
        issues.append(
            f"stage bound sum {bound_sum:.6g} exceeds the envelope {envelope:.6g}"
        )
    if witness.total_cost() > witness.w_bound + 1e-9 * (1.0 + abs(witness.w_bound)):
        issues.append(
            f"total cost {witness.total_cost():.6g} exceeds W(x) = {witness.w_bound:.6g}"
        )
    return issues
