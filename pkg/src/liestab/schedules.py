"""Oriented bang-bang control schedules built from control labels.

The schedule of a label ``(B, g, sign)`` on ``[0, t]`` is assembled
recursively:

* degree 1 (``B = Xj``): the constant control ``e_i`` where ``f_i`` is the
  field named by ``Xj``;
* reversed orientation: the time-reversed, negated positive schedule;
* a pair ``B = [B1, B2]`` with switch numbers ``s1, s2`` and
  ``s = 2*(s1+s2)``: four blocks occupying fractions ``s1/s, s2/s, s1/s,
  s2/s`` of the horizon, carrying the sub-schedules of ``(B1,+), (B2,+),
  (B1,-), (B2,-)``.

Segment endpoints are exact rationals scaled by ``t`` so the tiling is
exact however deep the recursion nests; every boundary float is computed
once and shared by its two neighbours.  Segments are half-open on the
right except the last, which closes at ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .brackets import ControlLabel, FormalBracket, Letter, switch_number

# An unscaled slice: (lo, hi) fractions of the horizon, basis axis, sign.
_Slice = tuple[Fraction, Fraction, int, int]


@dataclass(frozen=True)
class Segment:
    """A maximal constancy interval carrying the signed basis vector."""

    start: float
    end: float
    axis: int  # 1-based index into e_1..e_m
    sign: int  # +1 or -1
    frac_start: Fraction
    frac_end: Fraction


@dataclass(frozen=True)
class Schedule:
    """A piecewise-constant control on ``[0, t]`` with values ``±e_i``.

    ``segments`` merges adjacent equal values; ``slices`` keeps the raw
    recursive pieces, exactly ``switch_number(B)`` of them.
    """

    t: float
    m: int
    segments: tuple[Segment, ...]
    slices: tuple[Segment, ...]
    label: ControlLabel | None = None

    @property
    def boundaries(self) -> np.ndarray:
        return np.array([s.start for s in self.segments] + [self.t])

    def sample(self, time: float) -> np.ndarray:
        """Control vector at ``min(time, t)``; right-continuous at
        interior boundaries, closed at ``t``."""
        axis, sign = self.value_at(time)
        vec = np.zeros(self.m)
        vec[axis - 1] = float(sign)
        return vec

    def value_at(self, time: float) -> tuple[int, int]:
        """(axis, sign) at the clamped time, without building a vector."""
        if time < 0:
            time = 0.0
        if time >= self.t:
            seg = self.segments[-1]
            return seg.axis, seg.sign
        idx = int(np.searchsorted(self._starts(), time, side="right")) - 1
        seg = self.segments[max(idx, 0)]
        return seg.axis, seg.sign

    def values_at(self, times) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized ``value_at``: arrays of axes and signs."""
        times = np.minimum(np.maximum(np.asarray(times, dtype=float), 0.0), self.t)
        idx = np.searchsorted(self._starts(), times, side="right") - 1
        idx = np.clip(idx, 0, len(self.segments) - 1)
        axes = np.array([s.axis for s in self.segments])
        signs = np.array([s.sign for s in self.segments])
        return axes[idx], signs[idx]

    def _starts(self) -> np.ndarray:
        return np.array([s.start for s in self.segments])

    def integral(self) -> tuple[Fraction, ...]:
        """Exact rational componentwise integral of the control over
        ``[0, t]``, in units of ``t``."""
        acc = [Fraction(0)] * self.m
        for s in self.slices:
            acc[s.axis - 1] += s.sign * (s.frac_end - s.frac_start)
        return tuple(acc)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("start,end,i,sign\n")
            for s in self.segments:
                fh.write(f"{s.start!r},{s.end!r},{s.axis},{s.sign}\n")


def fraction_slices(label: ControlLabel) -> tuple[_Slice, ...]:
    """Unscaled slices of the label's schedule over the unit interval."""
    return _fraction_slices_cached(label.bracket, label.field_string, label.sign)


@lru_cache(maxsize=4096)
def _fraction_slices_cached(
    bracket: FormalBracket, field_string: tuple[int, ...], sign: int
) -> tuple[_Slice, ...]:
    return tuple(_build_slices(bracket, field_string, sign))


def _build_slices(b: FormalBracket, g: tuple[int, ...], sign: int) -> list[_Slice]:
    if isinstance(b, Letter):
        return [(Fraction(0), Fraction(1), g[b.index - 1], sign)]
    if sign < 0:
        plus = _build_slices(b, g, +1)
        return [(1 - hi, 1 - lo, ax, -sg) for lo, hi, ax, sg in reversed(plus)]
    s1 = switch_number(b.left)
    s2 = switch_number(b.right)
    s = 2 * (s1 + s2)
    f1 = Fraction(s1, s)
    f2 = Fraction(s2, s)
    blocks = [
        (b.left, +1, Fraction(0), f1),
        (b.right, +1, f1, f1 + f2),
        (b.left, -1, f1 + f2, 2 * f1 + f2),
        (b.right, -1, 2 * f1 + f2, Fraction(1)),
    ]
    out: list[_Slice] = []
    for sub, sub_sign, a, bnd in blocks:
        width = bnd - a
        for lo, hi, ax, sg in _build_slices(sub, g, sub_sign):
            out.append((a + lo * width, a + hi * width, ax, sg))
    return out


def build_schedule(label: ControlLabel, t: float, m: int | None = None) -> Schedule:
    """Materialize the oriented control of a label on ``[0, t]``."""
    if not t > 0:
        raise ValueError(f"duration must be positive, got {t}")
    if m is None:
        m = max(label.field_string)
    label.validate_against(m)
    raw = fraction_slices(label)

    # Share boundary floats between neighbours so the tiling is exact.
    bounds = [raw[0][0]] + [sl[1] for sl in raw]
    fbounds = [float(fr) * t for fr in bounds]
    fbounds[0] = 0.0
    fbounds[-1] = t

    slices = tuple(
        Segment(fbounds[i], fbounds[i + 1], ax, sg, lo, hi)
        for i, (lo, hi, ax, sg) in enumerate(raw)
    )
    merged: list[Segment] = []
    for seg in slices:
        if merged and merged[-1].axis == seg.axis and merged[-1].sign == seg.sign:
            prev = merged[-1]
            merged[-1] = Segment(
                prev.start, seg.end, prev.axis, prev.sign, prev.frac_start, seg.frac_end
            )
        else:
            merged.append(seg)
    return Schedule(t=t, m=m, segments=tuple(merged), slices=slices, label=label)


def sample_control(schedule: Schedule, time: float) -> np.ndarray:
    """Control vector of a schedule at a time, clamped into ``[0, t]``."""
    return schedule.sample(time)


def control_plan(label: ControlLabel, t: float):
    """Merged segments as plain tuples ``(start, end, axis, sign)``.

    Lightweight path for the process runner: the fraction recursion is
    cached per label, only the scaling by ``t`` is done per call.
    """
    plan = _float_plan(label)
    bounds, axes, signs = plan
    times = [b * t for b in bounds]
    times[-1] = t
    return [
        (times[i], times[i + 1], axes[i], signs[i]) for i in range(len(axes))
    ]


@lru_cache(maxsize=4096)
def _float_plan(label: ControlLabel):
    raw = fraction_slices(label)
    merged: list[tuple[Fraction, Fraction, int, int]] = []
    for lo, hi, ax, sg in raw:
        if merged and merged[-1][2] == ax and merged[-1][3] == sg:
            plo, _, pax, psg = merged[-1]
            merged[-1] = (plo, hi, pax, psg)
        else:
            merged.append((lo, hi, ax, sg))
    bounds = tuple([0.0] + [float(hi) for _, hi, _, _ in merged])
    axes = tuple(ax for _, _, ax, _ in merged)
    signs = tuple(sg for _, _, _, sg in merged)
    return bounds, axes, signs
