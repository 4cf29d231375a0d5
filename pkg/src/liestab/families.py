"""Named function families used by stabilizability certificates.

Certificates are configured from small parametric families so they can be
round-tripped through JSON and rebuilt deterministically: monotone gain
maps with exact inverses, cost-difference shapes, bilateral threshold
sequences, time budgets, and multirank maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .sampling import Multirank


@dataclass(frozen=True)
class MonotoneMap:
    """A continuous, strictly increasing, unbounded map on [0, inf) with a
    usable (right-)inverse.

    Kinds: ``identity``; ``power`` (c*u**p); ``max_power`` / ``min_power``
    over two powers; ``shifted`` (max(base(u) - shift, 0), whose inverse at
    v returns the largest u with value <= v, i.e. base_inv(v + shift)).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __call__(self, u: float) -> float:
        u = float(u)
        if u < 0:
            raise ValueError(f"monotone maps are defined on [0, inf), got {u}")
        k = self.kind
        p = self.params
        if k == "identity":
            return u
        if k == "power":
            return p["c"] * u ** p["p"]
        if k == "max_power":
            return max(p["c1"] * u ** p["p1"], p["c2"] * u ** p["p2"])
        if k == "min_power":
            return min(p["c1"] * u ** p["p1"], p["c2"] * u ** p["p2"])
        if k == "shifted":
            return max(self._base()(u) - p["shift"], 0.0)
        raise ValueError(f"unknown monotone map kind {k!r}")

    def inverse(self, v: float) -> float:
        v = float(v)
        if v < 0:
            raise ValueError(f"inverse arguments must be >= 0, got {v}")
        k = self.kind
        p = self.params
        if k == "identity":
            return v
        if k == "power":
            return (v / p["c"]) ** (1.0 / p["p"])
        if k == "max_power":
            return min((v / p["c1"]) ** (1.0 / p["p1"]), (v / p["c2"]) ** (1.0 / p["p2"]))
        if k == "min_power":
            return max((v / p["c1"]) ** (1.0 / p["p1"]), (v / p["c2"]) ** (1.0 / p["p2"]))
        if k == "shifted":
            return self._base().inverse(v + p["shift"])
        raise ValueError(f"unknown monotone map kind {k!r}")

    def _base(self) -> "MonotoneMap":
        return self.params["base"]

    def to_json_dict(self) -> dict:
        if self.kind == "shifted":
            return {
                "kind": "shifted",
                "params": {"base": self._base().to_json_dict(), "shift": self.params["shift"]},
            }
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "MonotoneMap":
        kind = d["kind"]
        params = dict(d.get("params", {}))
        if kind == "shifted":
            params["base"] = cls.from_json_dict(params["base"])
        return cls(kind, params)


def identity_map() -> MonotoneMap:
    return MonotoneMap("identity")


def power_map(c: float, p: float = 1.0) -> MonotoneMap:
    if c <= 0 or p <= 0:
        raise ValueError("power map needs c > 0 and p > 0")
    return MonotoneMap("power", {"c": float(c), "p": float(p)})


def max_power_map(c1: float, p1: float, c2: float, p2: float) -> MonotoneMap:
    return MonotoneMap(
        "max_power", {"c1": float(c1), "p1": float(p1), "c2": float(c2), "p2": float(p2)}
    )


def min_power_map(c1: float, p1: float, c2: float, p2: float) -> MonotoneMap:
    return MonotoneMap(
        "min_power", {"c1": float(c1), "p1": float(p1), "c2": float(c2), "p2": float(p2)}
    )


def shifted_map(base: MonotoneMap, shift: float) -> MonotoneMap:
    return MonotoneMap("shifted", {"base": base, "shift": float(shift)})


@dataclass(frozen=True)
class CostSplit:
    """The two-argument decrement shape in integral-cost bounds.

    ``difference``: v1 - v2 (clipped at 0); ``power_difference`` with
    exponent p: v1**p - v2**p.  Increasing and unbounded in the first
    argument, strictly decreasing in the second on v2 <= v1.
    """

    kind: str = "difference"
    params: dict = field(default_factory=dict)

    def __call__(self, v1: float, v2: float) -> float:
        if self.kind == "difference":
            return max(v1 - v2, 0.0)
        if self.kind == "power_difference":
            p = self.params["p"]
            return max(v1 ** p - v2 ** p, 0.0)
        raise ValueError(f"unknown cost split kind {self.kind!r}")

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "CostSplit":
        return cls(d["kind"], dict(d.get("params", {})))


@dataclass(frozen=True)
class BilateralSeq:
    """Strictly decreasing bilateral sequence ``u_i``, i in Z, with
    ``u_i -> inf`` as i -> -inf and ``u_i -> 0`` as i -> +inf.

    The geometric family ``u0 * ratio**i`` (0 < ratio < 1) is shipped.
    """

    kind: str = "geometric"
    params: dict = field(default_factory=lambda: {"u0": 1.0, "ratio": 0.5})

    def __post_init__(self):
        if self.kind == "geometric":
            u0 = self.params["u0"]
            q = self.params["ratio"]
            if not (u0 > 0 and 0 < q < 1):
                raise ValueError("geometric sequence needs u0 > 0 and 0 < ratio < 1")

    def u(self, i: int) -> float:
        if self.kind == "geometric":
            return self.params["u0"] * self.params["ratio"] ** i
        raise ValueError(f"unknown sequence kind {self.kind!r}")

    def strip_index(self, x: float) -> int:
        """The integer i with ``u(i+1) < x <= u(i)``."""
        if not x > 0:
            raise ValueError(f"strip lookup needs x > 0, got {x}")
        u0 = self.params["u0"]
        q = self.params["ratio"]
        i = math.floor(math.log(x / u0) / math.log(q))
        # Guard against log round-off at strip boundaries.
        while self.u(i) < x:
            i -= 1
        while self.u(i + 1) >= x:
            i += 1
        return i

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "BilateralSeq":
        return cls(d["kind"], dict(d.get("params", {})))


def geometric_seq(u0: float = 1.0, ratio: float = 0.5) -> BilateralSeq:
    return BilateralSeq("geometric", {"u0": float(u0), "ratio": float(ratio)})


@dataclass(frozen=True)
class TimeBudget:
    """A settling-time budget T(R, r), increasing in R, decreasing in r.

    ``ratio``: c0 + c1*(1+R)**pR / r**pr;  ``affine_diff``: c0 + cR*R - cr*r.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __call__(self, big_r: float, r: float) -> float:
        p = self.params
        if self.kind == "ratio":
            return p["c0"] + p["c1"] * (1.0 + big_r) ** p["pR"] / r ** p["pr"]
        if self.kind == "affine_diff":
            return p["c0"] + p["cR"] * big_r - p["cr"] * r
        raise ValueError(f"unknown time budget kind {self.kind!r}")

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "TimeBudget":
        return cls(d["kind"], dict(d.get("params", {})))


def ratio_budget(c0: float, c1: float, pR: float = 1.0, pr: float = 1.0) -> TimeBudget:
    return TimeBudget("ratio", {"c0": float(c0), "c1": float(c1), "pR": float(pR), "pr": float(pr)})


def affine_diff_budget(c0: float, cR: float, cr: float) -> TimeBudget:
    return TimeBudget("affine_diff", {"c0": float(c0), "cR": float(cR), "cr": float(cr)})


@dataclass(frozen=True)
class MultirankMap:
    """Per-degree step-bound map ``(R, r) -> (d_1, ..., d_k)``.

    Each degree entry is ``min(cap, c * r**p)``; independent of R, which is
    permitted (any positive map qualifies) and keeps budgets simple.
    """

    entries: tuple[dict, ...]

    def __call__(self, big_r: float, r: float) -> Multirank:
        out = []
        for e in self.entries:
            out.append(min(e["cap"], e["c"] * r ** e["p"]))
        return Multirank(tuple(out))

    @property
    def k(self) -> int:
        return len(self.entries)

    def to_json_dict(self) -> dict:
        return {"kind": "per_degree", "entries": [dict(e) for e in self.entries]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "MultirankMap":
        return cls(tuple(dict(e) for e in d["entries"]))


def per_degree_multirank(*entries) -> MultirankMap:
    """Each entry is (c, p, cap) for one bracket degree, lowest first."""
    return MultirankMap(tuple({"c": float(c), "p": float(p), "cap": float(cap)} for c, p, cap in entries))


@dataclass(frozen=True)
class GrowthMap:
    """A continuous increasing factor Lambda(R) >= some positive floor.

    ``const``: the constant v (the degree-1 case requires the constant 1);
    ``affine_power``: c0 + c1*R**p.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __call__(self, big_r: float) -> float:
        if self.kind == "const":
            return self.params["v"]
        if self.kind == "affine_power":
            p = self.params
            return p["c0"] + p["c1"] * big_r ** p["p"]
        raise ValueError(f"unknown growth map kind {self.kind!r}")

    def is_const_one(self) -> bool:
        return self.kind == "const" and self.params.get("v") == 1.0

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "GrowthMap":
        return cls(d["kind"], dict(d.get("params", {})))


def const_growth(v: float = 1.0) -> GrowthMap:
    return GrowthMap("const", {"v": float(v)})


def affine_growth(c0: float, c1: float, p: float = 1.0) -> GrowthMap:
    return GrowthMap("affine_power", {"c0": float(c0), "c1": float(c1), "p": float(p)})


@dataclass(frozen=True)
class StateNorm:
    """A named proper positive-definite state functional U.

    ``norm``: |x - center|; ``aniso_quartic`` on R^3:
    ``((x1^2+x2^2)^2 + gamma*x3^2)^(1/4)`` -- the planar/vertical
    anisotropic gauge matched to degree-2 bracket motion.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __call__(self, states):
        import numpy as np

        a = np.asarray(states, dtype=float)
        if self.kind == "norm":
            center = np.asarray(self.params.get("center", [0.0] * a.shape[-1]))
            return np.linalg.norm(a - center, axis=-1)
        if self.kind == "aniso_quartic":
            g = self.params["gamma"]
            rho2 = a[..., 0] ** 2 + a[..., 1] ** 2
            return (rho2 ** 2 + g * a[..., 2] ** 2) ** 0.25
        raise ValueError(f"unknown state norm kind {self.kind!r}")

    def scalar(self, y) -> float:
        if self.kind == "norm":
            center = self.params.get("center")
            if center is None:
                return math.sqrt(sum(v * v for v in y))
            return math.sqrt(sum((v - c) ** 2 for v, c in zip(y, center)))
        if self.kind == "aniso_quartic":
            g = self.params["gamma"]
            rho2 = y[0] * y[0] + y[1] * y[1]
            return (rho2 * rho2 + g * y[2] * y[2]) ** 0.25
        raise ValueError(f"unknown state norm kind {self.kind!r}")

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "StateNorm":
        return cls(d["kind"], dict(d.get("params", {})))
