"""Formal bracket trees, their combinatorial attributes, and control labels.

A formal bracket is a binary tree whose leaves are letters ``X1, X2, ...``.
Written out it looks like ``[[X1,X2],X3]``.  Each tree carries two numbers
that drive the control constructions downstream:

* the *degree* -- the number of letters, and
* the *switch number* -- 1 for a letter, ``2*(s_left + s_right)`` for a
  pair; it counts the timing slots of the bang-bang schedule attached to
  the bracket.

A control label ties a bracket to a concrete tuple of dynamics fields: the
letter ``Xj`` names the j-th entry of the field string, whose value is an
index into the system fields ``f_1..f_m``, plus an orientation sign.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


class BracketError(ValueError):
    """Base class for bracket construction and parsing failures."""


class BracketParseError(BracketError):
    """Malformed bracket text.  Carries the 0-based offset of the problem."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class BracketValidationError(BracketError):
    """Structurally valid input that violates a domain rule (e.g. ``X0``)."""


@dataclass(frozen=True)
class Letter:
    """A single letter ``Xj``; degree 1 and switch number 1 by convention."""

    index: int

    def __post_init__(self):
        if not isinstance(self.index, int) or self.index < 1:
            raise BracketValidationError(
                f"letter index must be a positive integer, got {self.index!r}"
            )


@dataclass(frozen=True)
class Pair:
    """A bracket ``[left,right]`` of two sub-brackets."""

    left: "FormalBracket"
    right: "FormalBracket"


FormalBracket = Union[Letter, Pair]


def degree(b: FormalBracket) -> int:
    """Number of letters in the tree (single letters count 1)."""
    if isinstance(b, Letter):
        return 1
    return degree(b.left) + degree(b.right)


def switch_number(b: FormalBracket) -> int:
    """Recursive switch number: 1 on letters, ``2*(s1 + s2)`` on pairs."""
    if isinstance(b, Letter):
        return 1
    return 2 * (switch_number(b.left) + switch_number(b.right))


def factorize(b: FormalBracket) -> tuple[FormalBracket, FormalBracket]:
    """Return the unique ``(left, right)`` children of a pair.

    Raises :class:`BracketValidationError` on letters, which have no
    factorization.
    """
    if isinstance(b, Letter):
        raise BracketValidationError("a single letter has no factorization")
    return b.left, b.right


def letters(b: FormalBracket) -> tuple[int, ...]:
    """Letter indices in left-to-right order (repeats preserved)."""
    if isinstance(b, Letter):
        return (b.index,)
    return letters(b.left) + letters(b.right)


def tree_depth(b: FormalBracket) -> int:
    """Number of node levels; a bare letter has depth 1."""
    if isinstance(b, Letter):
        return 1
    return 1 + max(tree_depth(b.left), tree_depth(b.right))


def render_bracket(b: FormalBracket) -> str:
    """Canonical text form, e.g. ``[[X1,X2],X3]``; inverse of parsing."""
    if isinstance(b, Letter):
        return f"X{b.index}"
    return f"[{render_bracket(b.left)},{render_bracket(b.right)}]"


def parse_bracket(text: str) -> FormalBracket:
    """Parse ``B ::= Xn | [B,B]`` with whitespace ignored.

    Raises :class:`BracketParseError` with the offending position on bad
    syntax and :class:`BracketValidationError` on a zero letter index.
    """
    node, pos = _parse_node(text, _skip_ws(text, 0))
    pos = _skip_ws(text, pos)
    if pos != len(text):
        raise BracketParseError("unexpected trailing input", pos)
    return node


def _skip_ws(s: str, i: int) -> int:
    while i < len(s) and s[i].isspace():
        i += 1
    return i


def _parse_node(s: str, i: int) -> tuple[FormalBracket, int]:
    if i >= len(s):
        raise BracketParseError("unexpected end of input", i)
    c = s[i]
    if c == "[":
        left, i = _parse_node(s, _skip_ws(s, i + 1))
        i = _expect(s, _skip_ws(s, i), ",")
        right, i = _parse_node(s, _skip_ws(s, i))
        i = _expect(s, _skip_ws(s, i), "]")
        return Pair(left, right), i
    if c == "X":
        j = i + 1
        while j < len(s) and s[j].isdigit():
            j += 1
        if j == i + 1:
            raise BracketParseError("expected digits after 'X'", i + 1)
        index = int(s[i + 1 : j])
        if index == 0:
            raise BracketValidationError(
                f"letter index must be >= 1 (at position {i + 1})"
            )
        return Letter(index), j
    raise BracketParseError(f"expected '[' or 'X', got {c!r}", i)


def _expect(s: str, i: int, ch: str) -> int:
    if i >= len(s) or s[i] != ch:
        got = s[i] if i < len(s) else "end of input"
        raise BracketParseError(f"expected {ch!r}, got {got!r}", i)
    return i + 1


@dataclass(frozen=True)
class SmoothnessBudget:
    """Minimal per-field continuity orders under which a bracket of the
    fields is guaranteed continuous.

    ``orders[j-1]`` is the order required of the j-th field; fields whose
    letters do not occur in the bracket get 0.
    """

    orders: tuple[int, ...]

    def order(self, j: int) -> int:
        return self.orders[j - 1]


def smoothness_budget(b: FormalBracket, q: int) -> SmoothnessBudget:
    """Minimal continuity orders for a string of ``q`` fields.

    Each bracketing differentiates each side once, so the order of a letter
    is the number of pairs above it on its path to the root.
    """
    occ = _letter_orders(b)
    if max(occ) > q:
        raise BracketValidationError(
            f"bracket uses letter X{max(occ)} but only {q} fields are available"
        )
    orders = [0] * q
    for j, o in occ.items():
        orders[j - 1] = o
    return SmoothnessBudget(tuple(orders))


def _letter_orders(b: FormalBracket) -> dict[int, int]:
    if isinstance(b, Letter):
        return {b.index: 0}
    out: dict[int, int] = {}
    for side in (b.left, b.right):
        for j, o in _letter_orders(side).items():
            out[j] = max(out.get(j, 0), o + 1)
    return out


@dataclass(frozen=True)
class ControlLabel:
    """A bracket direction selector ``(B, g, sign)``.

    ``field_string`` lists, for each letter position, the index of the
    dynamics field it stands for (1-based, into ``f_1..f_m``).  ``sign`` is
    +1 or -1 and orients the motion along the evaluated bracket.
    """

    bracket: FormalBracket
    field_string: tuple[int, ...]
    sign: int

    def __post_init__(self):
        if self.sign not in (+1, -1):
            raise BracketValidationError(f"sign must be +1 or -1, got {self.sign!r}")
        if not self.field_string:
            raise BracketValidationError("field string must be non-empty")
        for g in self.field_string:
            if not isinstance(g, int) or g < 1:
                raise BracketValidationError(
                    f"field string entries must be positive integers, got {g!r}"
                )
        for j in letters(self.bracket):
            if j > len(self.field_string):
                raise BracketValidationError(
                    f"letter X{j} exceeds the field string length "
                    f"{len(self.field_string)}"
                )

    @property
    def degree(self) -> int:
        return degree(self.bracket)

    @property
    def switch(self) -> int:
        return switch_number(self.bracket)

    def field_of_letter(self, j: int) -> int:
        """Dynamics-field index named by letter ``Xj``."""
        return self.field_string[j - 1]

    def validate_against(self, m: int, k: int | None = None) -> None:
        """Check field indices fit ``m`` fields and degree fits the bound."""
        for g in self.field_string:
            if g > m:
                raise BracketValidationError(
                    f"field index {g} out of range for {m} dynamics fields"
                )
        if k is not None and self.degree > k:
            raise BracketValidationError(
                f"label degree {self.degree} exceeds the declared bound {k}"
            )

    def text(self) -> str:
        g = ",".join(str(i) for i in self.field_string)
        return f"{render_bracket(self.bracket)}|{g}|{'+' if self.sign > 0 else '-'}"

    def to_json_dict(self) -> dict:
        return {
            "bracket": render_bracket(self.bracket),
            "fields": list(self.field_string),
            "sign": "+" if self.sign > 0 else "-",
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ControlLabel":
        if d.get("sign") not in ("+", "-"):
            raise BracketValidationError(f"label sign must be '+' or '-', got {d.get('sign')!r}")
        return cls(
            bracket=parse_bracket(d["bracket"]),
            field_string=tuple(int(i) for i in d["fields"]),
            sign=+1 if d["sign"] == "+" else -1,
        )
