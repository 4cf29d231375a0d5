"""Ready-made benchmark systems with feedback generators and certificates.

Two systems ship:

* ``brockett_system`` -- the nonholonomic integrator on R^3 with fields
  f1 = (1, 0, -x2), f2 = (0, 1, x1).  No continuous static feedback
  stabilizes it; the shipped degree-2 generator uses the bracket direction
  [f1, f2] = (0, 0, 2) near the vertical axis and steepest descent of an
  anisotropic gauge elsewhere.
* ``scalar_linear_system`` -- unit-speed bang-bang descent on the line, the
  degree-1 sanity case with an exact certificate.

Certificate constants (time budgets, multiranks, overshoot gains, cost
factors) are calibrated empirically by pilot sweeps of the shipped
checkers and carry safety margins; the gauges and their envelopes are
exact closed forms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .brackets import ControlLabel, Letter, Pair
from .certify import Certificate
from .families import (
    BilateralSeq,
    CostSplit,
    GrowthMap,
    MonotoneMap,
    MultirankMap,
    StateNorm,
    TimeBudget,
    affine_diff_budget,
    affine_growth,
    const_growth,
    geometric_seq,
    identity_map,
    max_power_map,
    min_power_map,
    per_degree_multirank,
    power_map,
    ratio_budget,
    shifted_map,
)
from .fields import PolyVectorField
from .flows import IntegrationOptions, TargetSet
from .sampling import FeedbackGenerator, Lagrangian


@dataclass
class RankCertificate:
    """Data for the rank-partition stabilizability notion: overshoot gain,
    settling-time map, and the rank map delta(R, r)."""

    gamma: MonotoneMap
    s_bound: TimeBudget
    delta: TimeBudget

    def to_json_dict(self) -> dict:
        return {
            "gamma": self.gamma.to_json_dict(),
            "s_bound": self.s_bound.to_json_dict(),
            "delta": self.delta.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RankCertificate":
        return cls(
            gamma=MonotoneMap.from_json_dict(d["gamma"]),
            s_bound=TimeBudget.from_json_dict(d["s_bound"]),
            delta=TimeBudget.from_json_dict(d["delta"]),
        )


@dataclass
class BenchmarkSystem:
    name: str
    fields: list
    target: TargetSet
    lagrangian: Lagrangian
    generator: FeedbackGenerator
    certificate: Certificate
    rank_certificate: RankCertificate
    trial_grid: list
    opts: IntegrationOptions
    generator_config: dict = dc_field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.fields[0].dim

    @property
    def m(self) -> int:
        return len(self.fields)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "fields": [f.to_json_dict() for f in self.fields],
            "target": self.target.to_json_dict(),
            "lagrangian": self.lagrangian.to_json_dict(),
            "generator": dict(self.generator_config),
            "certificate": self.certificate.to_json_dict(),
            "rank_certificate": self.rank_certificate.to_json_dict(),
            "trial_grid": [[float(a), float(b)] for a, b in self.trial_grid],
            "integration": {
                "h_max": self.opts.h_max,
                "min_substeps": self.opts.min_substeps,
                "blowup_norm": self.opts.blowup_norm,
            },
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Brockett (nonholonomic integrator)

_X1 = Letter(1)
_X2 = Letter(2)
_B12 = Pair(_X1, _X2)

_LBL_BRACKET_PLUS = ControlLabel(_B12, (1, 2), +1)
_LBL_BRACKET_MINUS = ControlLabel(_B12, (1, 2), -1)
_LBL_F1_PLUS = ControlLabel(_X1, (1,), +1)
_LBL_F1_MINUS = ControlLabel(_X1, (1,), -1)
_LBL_F2_PLUS = ControlLabel(_X1, (2,), +1)
_LBL_F2_MINUS = ControlLabel(_X1, (2,), -1)


def brockett_generator(c: float = 1.0, gamma_u: float = 1.0) -> FeedbackGenerator:
    """Degree-2 feedback rule for the nonholonomic integrator.

    Above the paraboloid |x3| > c*(x1^2+x2^2) the bracket direction is the
    only efficient descent: the label is ([X1,X2], (f1,f2), -sign(x3)).
    Below it the signed letter maximizing descent of the gauge
    ((x1^2+x2^2)^2 + gamma_u*x3^2)^(1/4) is chosen; with gamma_u*c < 2 the
    two letter derivatives cannot vanish simultaneously there, so a strict
    descent direction always exists.
    """
    half_g = 0.5 * gamma_u

    def rule(x) -> ControlLabel:
        x1 = float(x[0])
        x2 = float(x[1])
        x3 = float(x[2])
        rho2 = x1 * x1 + x2 * x2
        if abs(x3) > c * rho2:
            return _LBL_BRACKET_MINUS if x3 > 0 else _LBL_BRACKET_PLUS
        a = rho2 * x1 - half_g * x3 * x2
        b = rho2 * x2 + half_g * x3 * x1
        if abs(a) >= abs(b):
            return _LBL_F1_MINUS if a > 0 else _LBL_F1_PLUS
        return _LBL_F2_MINUS if b > 0 else _LBL_F2_PLUS

    return FeedbackGenerator(fn=rule, k=2, m=2, name="brockett-degree2")


def brockett_system(c: float = 1.0, gamma_u: float = 1.0) -> BenchmarkSystem:
    """The nonholonomic integrator with its calibrated degree-2 certificate.

    The gauge weight defaults to gamma_u = 1 so the letter-descent region
    is free of stationary points of the rule (this needs gamma_u * c < 2).
    """
    f1 = PolyVectorField.from_terms(
        3, [[(1.0, (0, 0, 0))], [], [(-1.0, (0, 1, 0))]]
    )
    f2 = PolyVectorField.from_terms(
        3, [[], [(1.0, (0, 0, 0))], [(1.0, (1, 0, 0))]]
    )
    target = TargetSet.ball((0.0, 0.0, 0.0), 1e-3)
    lagrangian = Lagrangian("squared_norm")
    gen = brockett_generator(c, gamma_u)

    cert = Certificate(
        u=StateNorm("aniso_quartic", {"gamma": gamma_u}),
        # phi(v) = 0.5*min(v, sqrt(v)): its inverse max(2u, 4u^2) dominates
        # the distance on every gauge level set, with a factor-2 margin.
        phi=min_power_map(0.5, 1.0, 0.5, 0.5),
        gamma=max_power_map(1.6, 1.0, 1.6, 2.0),
        t_bound=ratio_budget(c0=5.0, c1=14.0, pR=1.0, pr=1.0),
        multirank=per_degree_multirank((0.1, 1.0, 0.05), (0.8, 1.0, 0.5)),
        lam=affine_growth(140.0, 140.0, 1.0),
        psi=CostSplit("difference"),
        useq=geometric_seq(1.0, 0.5),
        k=2,
        d_env=shifted_map(min_power_map(1.0, 1.0, 1.0, 2.0), 1e-3),
        notes=(
            "time budget, multirank, overshoot gain, and cost factor "
            "calibrated by pilot simulation sweeps with safety margins"
        ),
    )
    rank_cert = RankCertificate(
        gamma=max_power_map(2.6, 1.0, 2.6, 2.0),
        s_bound=ratio_budget(c0=10.0, c1=7.0, pR=1.0, pr=1.0),
        delta=ratio_budget(c0=1.0, c1=0.0, pR=0.0, pr=1.0),
    )
    return BenchmarkSystem(
        name="brockett",
        fields=[f1, f2],
        target=target,
        lagrangian=lagrangian,
        generator=gen,
        certificate=cert,
        rank_certificate=rank_cert,
        trial_grid=[(1.0, 0.05)],
        opts=IntegrationOptions(h_max=0.5, min_substeps=2),
        generator_config={"kind": "brockett", "c": c, "gamma_u": gamma_u},
    )


# ---------------------------------------------------------------------------
# Scalar line

_LBL_SCALAR_PLUS = ControlLabel(_X1, (1,), +1)
_LBL_SCALAR_MINUS = ControlLabel(_X1, (1,), -1)


def scalar_sign_generator() -> FeedbackGenerator:
    """Unit-speed descent toward the origin: -X1 right of it, +X1 left."""

    def rule(x) -> ControlLabel:
        return _LBL_SCALAR_MINUS if float(x[0]) > 0 else _LBL_SCALAR_PLUS

    return FeedbackGenerator(fn=rule, k=1, m=1, name="scalar-sign")


def scalar_linear_system() -> BenchmarkSystem:
    """Bang-bang descent on the line with the exact degree-1 certificate.

    With unit speed, |y(s)| = |x| - s until the target interval is hit, so
    phi = Gamma = identity, T(R, r) = R - r + 1, and steps bounded by
    min(r/2, 1) are exact.  The cost condition with the difference shape
    needs |x| + r <= 2, so trial grids keep R + r below 2.
    """
    f1 = PolyVectorField.from_terms(1, [[(1.0, (0,))]])
    target = TargetSet.ball((0.0,), 1e-3)
    lagrangian = Lagrangian("norm")
    gen = scalar_sign_generator()

    cert = Certificate(
        u=StateNorm("norm"),
        phi=identity_map(),
        gamma=identity_map(),
        t_bound=affine_diff_budget(1.0, 1.0, 1.0),
        multirank=per_degree_multirank((0.5, 1.0, 1.0)),
        lam=const_growth(1.0),
        psi=CostSplit("difference"),
        useq=geometric_seq(1.0, 0.5),
        k=1,
        d_env=shifted_map(power_map(1.0, 1.0), 1e-3),
        notes="exact closed-form certificate; cost shape valid for |x| + r <= 2",
    )
    rank_cert = RankCertificate(
        gamma=identity_map(),
        s_bound=affine_diff_budget(1.0, 1.0, 0.0),
        delta=ratio_budget(c0=0.0, c1=0.5, pR=0.0, pr=-1.0),
    )
    grid = [
        (big_r, r)
        for big_r in (0.4, 0.6, 0.8, 1.0, 1.2)
        for r in (0.04, 0.08, 0.15, 0.25, 0.4)
    ]
    return BenchmarkSystem(
        name="scalar",
        fields=[f1],
        target=target,
        lagrangian=lagrangian,
        generator=gen,
        certificate=cert,
        rank_certificate=rank_cert,
        trial_grid=grid,
        opts=IntegrationOptions(h_max=0.05, min_substeps=2),
        generator_config={"kind": "scalar_sign"},
    )


# ---------------------------------------------------------------------------
# Loading and hypothesis checks

_BUILTIN = {"brockett": brockett_system, "scalar": scalar_linear_system}

_GENERATORS = {
    "brockett": lambda cfg: brockett_generator(cfg.get("c", 1.0), cfg.get("gamma_u", 1.0)),
    "scalar_sign": lambda cfg: scalar_sign_generator(),
}


def load_system(name_or_path: str) -> BenchmarkSystem:
    """A builtin system by name, or one reconstructed from a JSON file."""
    if name_or_path in _BUILTIN:
        return _BUILTIN[name_or_path]()
    with open(name_or_path) as fh:
        d = json.load(fh)
    return system_from_json_dict(d)


def system_from_json_dict(d: dict) -> BenchmarkSystem:
    gen_cfg = d["generator"]
    kind = gen_cfg.get("kind")
    if kind not in _GENERATORS:
        raise ValueError(f"unknown generator kind {kind!r}")
    integ = d.get("integration", {})
    return BenchmarkSystem(
        name=d["name"],
        fields=[PolyVectorField.from_json_dict(f) for f in d["fields"]],
        target=TargetSet.from_json_dict(d["target"]),
        lagrangian=Lagrangian.from_json_dict(d["lagrangian"]),
        generator=_GENERATORS[kind](gen_cfg),
        certificate=Certificate.from_json_dict(d["certificate"]),
        rank_certificate=RankCertificate.from_json_dict(d["rank_certificate"]),
        trial_grid=[(float(a), float(b)) for a, b in d["trial_grid"]],
        opts=IntegrationOptions(
            h_max=float(integ.get("h_max", 0.05)),
            min_substeps=int(integ.get("min_substeps", 8)),
            blowup_norm=float(integ.get("blowup_norm", 1e6)),
        ),
        generator_config=dict(gen_cfg),
    )


def check_hypotheses(system: BenchmarkSystem) -> dict:
    """Runtime-checkable preconditions of the sampling framework.

    Control values are signed basis vectors by construction; the target
    must be closed with compact boundary; polynomial fields are smooth of
    every order with bounded derivatives on bounded sets; the shipped
    Lagrangian kinds are locally Lipschitz in the state.
    """
    notes = {}
    notes["control_set_signed_basis"] = True
    notes["target_closed_compact_boundary"] = system.target.kind in ("ball",)
    notes["fields_smooth"] = all(isinstance(f, PolyVectorField) for f in system.fields)
    notes["lagrangian_locally_lipschitz"] = system.lagrangian.kind in (
        "zero",
        "norm",
        "squared_norm",
    )
    rng = np.random.default_rng(0)
    pts = rng.uniform(-2, 2, size=(64, system.dim))
    notes["lagrangian_nonnegative_sampled"] = bool(
        system.lagrangian.spot_check_nonneg(pts)
    )
    notes["generator_degree_bound"] = system.generator.k == system.certificate.k
    return notes


def _brockett_axis_floor(delta2: float, gamma_u: float) -> float:
    """Gauge oscillation floor of pure bracket stepping on the vertical
    axis: the largest post-overshoot |x3| is one step's displacement."""
    kick = 2.0 * (delta2 / 4.0) ** 2
    return (gamma_u * kick * kick) ** 0.25


def brockett_step_diagnostics(r: float, system: BenchmarkSystem) -> dict:
    """Closed-form step-scale margins backing the calibration notes."""
    mr = system.certificate.multirank(1.0, r)
    phi_r = system.certificate.phi(r)
    return {
        "delta1": mr.delta(1),
        "delta2": mr.delta(2),
        "axis_gauge_floor": _brockett_axis_floor(mr.delta(2), 1.0),
        "phi_r": phi_r,
        "in_step_excursion": math.sqrt(2.0) * mr.delta(2) / 4.0,
    }
