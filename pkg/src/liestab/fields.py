"""Polynomial vector fields with exact derivatives and Lie brackets.

Coordinates are stored as sparse monomial maps ``{exponents: coefficient}``,
so differentiation and bracketing are exact (up to float round-off in the
coefficients).  Polynomials are smooth of every order, which makes the
regularity hypotheses of the sampling constructions hold for any bracket
degree.  A finite-difference oracle is provided as an independent check of
the symbolic bracket.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brackets import ControlLabel, FormalBracket, Letter

# A polynomial in n variables: exponent multi-index -> coefficient.
Poly = dict[tuple[int, ...], float]


def _pnorm(p: Poly) -> Poly:
    return {e: c for e, c in p.items() if c != 0.0}


def _padd(a: Poly, b: Poly) -> Poly:
    out = dict(a)
    for e, c in b.items():
        s = out.get(e, 0.0) + c
        if s == 0.0:
            out.pop(e, None)
        else:
            out[e] = s
    return out


def _pscale(p: Poly, c: float) -> Poly:
    if c == 0.0:
        return {}
    return {e: c * v for e, v in p.items()}


def _pmul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            s = out.get(e, 0.0) + ca * cb
            if s == 0.0:
                out.pop(e, None)
            else:
                out[e] = s
    return out


def _pderiv(p: Poly, j: int) -> Poly:
    """Partial derivative with respect to variable j (0-based)."""
    out: Poly = {}
    for e, c in p.items():
        if e[j] == 0:
            continue
        e2 = tuple(v - 1 if i == j else v for i, v in enumerate(e))
        s = out.get(e2, 0.0) + c * e[j]
        if s == 0.0:
            out.pop(e2, None)
        else:
            out[e2] = s
    return out


def _peval(p: Poly, x) -> float:
    total = 0.0
    for e, c in p.items():
        term = c
        for i, k in enumerate(e):
            if k:
                xi = x[i]
                for _ in range(k):
                    term *= xi
        total += term
    return total


class PolyVectorField:
    """An n-dimensional vector field with polynomial coordinates."""

    __slots__ = ("dim", "coords", "_fn")

    def __init__(self, dim: int, coords):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        if len(coords) != dim:
            raise ValueError(f"expected {dim} coordinate polynomials, got {len(coords)}")
        norm = []
        for p in coords:
            q: Poly = {}
            for e, c in dict(p).items():
                e = tuple(int(v) for v in e)
                if len(e) != dim or any(v < 0 for v in e):
                    raise ValueError(f"bad exponent multi-index {e} for dimension {dim}")
                c = float(c)
                if c != 0.0:
                    q[e] = q.get(e, 0.0) + c
            norm.append(_pnorm(q))
        self.dim = dim
        self.coords = tuple(norm)
        self._fn = None

    @classmethod
    def from_terms(cls, dim: int, terms) -> "PolyVectorField":
        """Build from per-coordinate lists of ``(coefficient, exponents)``."""
        coords = []
        for coord_terms in terms:
            p: Poly = {}
            for c, e in coord_terms:
                e = tuple(int(v) for v in e)
                p[e] = p.get(e, 0.0) + float(c)
            coords.append(p)
        return cls(dim, coords)

    @classmethod
    def constant(cls, vec) -> "PolyVectorField":
        vec = [float(v) for v in vec]
        n = len(vec)
        zero = (0,) * n
        return cls(n, [{zero: v} if v != 0.0 else {} for v in vec])

    @classmethod
    def linear(cls, a) -> "PolyVectorField":
        """The field ``x -> A x`` for a square matrix A."""
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        coords = []
        for i in range(n):
            p: Poly = {}
            for j in range(n):
                if a[i, j] != 0.0:
                    e = tuple(1 if t == j else 0 for t in range(n))
                    p[e] = float(a[i, j])
            coords.append(p)
        return cls(n, coords)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([_peval(p, x) for p in self.coords])

    def eval_tuple(self, y) -> tuple:
        return tuple(_peval(p, y) for p in self.coords)

    def compiled(self):
        """A fast scalar-tuple evaluator, generated once and cached."""
        if self._fn is None:
            self._fn = _compile_field(self)
        return self._fn

    def partial(self, j: int) -> "PolyVectorField":
        """Componentwise partial derivative with respect to variable j (0-based)."""
        return PolyVectorField(self.dim, [_pderiv(p, j) for p in self.coords])

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        self._check_dim(other)
        return PolyVectorField(
            self.dim, [_padd(a, b) for a, b in zip(self.coords, other.coords)]
        )

    def __neg__(self) -> "PolyVectorField":
        return PolyVectorField(self.dim, [_pscale(p, -1.0) for p in self.coords])

    def __sub__(self, other: "PolyVectorField") -> "PolyVectorField":
        return self + (-other)

    def scale(self, c: float) -> "PolyVectorField":
        return PolyVectorField(self.dim, [_pscale(p, c) for p in self.coords])

    def is_zero(self) -> bool:
        return all(not p for p in self.coords)

    def max_coeff(self) -> float:
        return max((abs(c) for p in self.coords for c in p.values()), default=0.0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        return self.dim == other.dim and self.coords == other.coords

    def __hash__(self):
        return hash((self.dim, tuple(tuple(sorted(p.items())) for p in self.coords)))

    def __repr__(self):
        return f"PolyVectorField(dim={self.dim}, coords={self.coords!r})"

    def _check_dim(self, other: "PolyVectorField") -> None:
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "coords": [
                [{"c": c, "e": list(e)} for e, c in sorted(p.items())]
                for p in self.coords
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PolyVectorField":
        return cls.from_terms(
            int(d["dim"]),
            [[(t["c"], t["e"]) for t in coord] for coord in d["coords"]],
        )


def _compile_field(field: PolyVectorField):
    """Generate a closure ``f(y_tuple) -> tuple`` for the hot integration path."""
    n = field.dim
    unpack = ", ".join(f"y{i}" for i in range(n))
    exprs = []
    for p in field.coords:
        terms = []
        for e, c in sorted(p.items()):
            factors = [repr(c)]
            for i, k in enumerate(e):
                if k <= 3:
                    factors.extend([f"y{i}"] * k)
                else:
                    factors.append(f"y{i}**{k}")
            terms.append("*".join(factors))
        exprs.append(" + ".join(terms) if terms else "0.0")
    body = f"def _f(y):\n    {unpack}, = y\n    return ({', '.join(exprs)},)\n"
    ns: dict = {}
    exec(body, ns)  # noqa: S102 - codegen over repr'd floats only
    return ns["_f"]


def lie_bracket(g1: PolyVectorField, g2: PolyVectorField) -> PolyVectorField:
    """Exact polynomial Lie bracket ``Dg2 . g1 - Dg1 . g2``."""
    g1._check_dim(g2)
    n = g1.dim
    coords = []
    for k in range(n):
        acc: Poly = {}
        for j in range(n):
            acc = _padd(acc, _pmul(_pderiv(g2.coords[k], j), g1.coords[j]))
            acc = _padd(acc, _pscale(_pmul(_pderiv(g1.coords[k], j), g2.coords[j]), -1.0))
        coords.append(acc)
    return PolyVectorField(n, coords)


def label_field(label: ControlLabel, fields: list[PolyVectorField]) -> PolyVectorField:
    """The signed bracket of dynamics fields named by a control label.

    Letters resolve through the label's field string; the result is scaled
    by the label's orientation sign.
    """
    label.validate_against(len(fields))
    built = _build_bracket(label.bracket, label, fields)
    return built.scale(float(label.sign)) if label.sign < 0 else built


def _build_bracket(b: FormalBracket, label: ControlLabel, fields) -> PolyVectorField:
    if isinstance(b, Letter):
        return fields[label.field_of_letter(b.index) - 1]
    return lie_bracket(
        _build_bracket(b.left, label, fields),
        _build_bracket(b.right, label, fields),
    )


def evaluate_bracket(label: ControlLabel, fields: list[PolyVectorField], x) -> np.ndarray:
    """Value of the label's signed bracket at a point, computed symbolically."""
    return label_field(label, fields)(x)


@dataclass(frozen=True)
class BracketEvaluation:
    """A bracket value at a point together with how it was computed."""

    point: tuple[float, ...]
    value: tuple[float, ...]
    method: str  # "symbolic" | "finite-difference"


def fd_bracket_oracle(
    g1: PolyVectorField, g2: PolyVectorField, x, h: float = 1e-4
) -> np.ndarray:
    """Finite-difference bracket ``Dg2.g1 - Dg1.g2`` with central Jacobians.

    Independent of the symbolic path; O(h^2) accurate.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    g1._check_dim(g2)
    x = np.asarray(x, dtype=float)
    d1 = _fd_jacobian(g1, x, h)
    d2 = _fd_jacobian(g2, x, h)
    return d2 @ g1(x) - d1 @ g2(x)


def _fd_jacobian(g, x: np.ndarray, h: float) -> np.ndarray:
    n = x.size
    cols = []
    for j in range(n):
        step = np.zeros(n)
        step[j] = h
        cols.append((g(x + step) - g(x - step)) / (2.0 * h))
    return np.column_stack(cols)


def fd_label_oracle(
    label: ControlLabel, fields: list[PolyVectorField], x, h: float = 1e-3
) -> np.ndarray:
    """Fully finite-difference evaluation of a nested label bracket.

    Jacobians of inner brackets are themselves finite differences, so no
    symbolic derivative enters.  Accuracy degrades with nesting; intended
    for cross-checks at loose tolerance.
    """
    label.validate_against(len(fields))
    x = np.asarray(x, dtype=float)

    def ev(b: FormalBracket, pt: np.ndarray) -> np.ndarray:
        if isinstance(b, Letter):
            return fields[label.field_of_letter(b.index) - 1](pt)

        def jac(side: FormalBracket, p: np.ndarray) -> np.ndarray:
            n = p.size
            cols = []
            for j in range(n):
                step = np.zeros(n)
                step[j] = h
                cols.append((ev(side, p + step) - ev(side, p - step)) / (2.0 * h))
            return np.column_stack(cols)

        return jac(b.right, pt) @ ev(b.left, pt) - jac(b.left, pt) @ ev(b.right, pt)

    return float(label.sign) * ev(label.bracket, x)


def bracket_evaluations(
    label: ControlLabel, fields: list[PolyVectorField], x, h: float = 1e-4
) -> tuple[BracketEvaluation, BracketEvaluation]:
    """Symbolic and finite-difference evaluations of the same label bracket."""
    x = np.asarray(x, dtype=float)
    sym = evaluate_bracket(label, fields, x)
    fd = fd_label_oracle(label, fields, x, h)
    pt = tuple(float(v) for v in x)
    return (
        BracketEvaluation(pt, tuple(float(v) for v in sym), "symbolic"),
        BracketEvaluation(pt, tuple(float(v) for v in fd), "finite-difference"),
    )
