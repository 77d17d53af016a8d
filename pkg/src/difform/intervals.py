"""Open-interval unions and the truncated domain they live on.

Endpoints may be floats or `fractions.Fraction`; every operation here is pure
Python arithmetic, so exact inputs give exact outputs.  Unions are kept in a
canonical form: sorted, disjoint, no empty intervals, and touching intervals
merged (sets differing by isolated points share one representative).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Iterable, Sequence


@dataclass(frozen=True)
class Domain:
    """State space (a, b) with a finite working window inside it.

    ``a``/``b`` may be ``-inf``/``+inf``; all numerics happen on the window.
    """

    a: float
    b: float
    window: tuple[Real, Real]

    def __post_init__(self):
        lo, hi = self.window
        if not (self.a < lo < hi < self.b):
            raise ValueError(
                f"domain requires a < window.lo < window.hi < b, "
                f"got a={self.a}, window=({lo}, {hi}), b={self.b}"
            )

    @property
    def lo(self) -> Real:
        return self.window[0]

    @property
    def hi(self) -> Real:
        return self.window[1]

    @property
    def width(self) -> Real:
        return self.window[1] - self.window[0]

    @property
    def midpoint(self) -> Real:
        lo, hi = self.window
        return lo + (hi - lo) / 2

    def contains(self, x: Real) -> bool:
        return self.lo < x < self.hi


def open_domain(lo: Real = 0.0, hi: Real = 1.0) -> Domain:
    """Domain whose state space is exactly the window (desk-scale default)."""
    pad = (hi - lo) / 1000
    return Domain(float(lo) - float(pad), float(hi) + float(pad), (lo, hi))


class IntervalUnion:
    """Finite union of disjoint open intervals, canonically normalized."""

    __slots__ = ("intervals",)

    def __init__(self, pairs: Iterable[tuple[Real, Real]] = ()):
        self.intervals: tuple[tuple[Real, Real], ...] = _normalize(pairs)

    @classmethod
    def empty(cls) -> "IntervalUnion":
        return cls(())

    @classmethod
    def single(cls, lo: Real, hi: Real) -> "IntervalUnion":
        return cls(((lo, hi),))

    def __repr__(self):
        body = ", ".join(f"({float(a):.6g}, {float(b):.6g})" for a, b in self.intervals)
        return f"IntervalUnion([{body}])"

    def __eq__(self, other):
        if not isinstance(other, IntervalUnion):
            return NotImplemented
        return self.intervals == other.intervals

    def __hash__(self):
        return hash(self.intervals)

    def __bool__(self):
        return bool(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def contains(self, x: Real) -> bool:
        for lo, hi in self.intervals:
            if lo < x < hi:
                return True
            if lo >= x:
                break
        return False

    def measure(self) -> Real:
        """Total Lebesgue length."""
        total = 0
        for lo, hi in self.intervals:
            total = total + (hi - lo)
        return total

    def endpoints(self) -> list[Real]:
        out = []
        for lo, hi in self.intervals:
            out.append(lo)
            out.append(hi)
        return out

    def union(self, other: "IntervalUnion") -> "IntervalUnion":
        return IntervalUnion(self.intervals + other.intervals)

    def intersect(self, other: "IntervalUnion") -> "IntervalUnion":
        out = []
        i = j = 0
        a, b = self.intervals, other.intervals
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo < hi:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return IntervalUnion(out)

    def complement(self, window: tuple[Real, Real]) -> "IntervalUnion":
        """Complement within an open window."""
        lo, hi = window
        out = []
        cursor = lo
        for a, b in self.intervals:
            if b <= lo:
                continue
            if a >= hi:
                break
            if a > cursor:
                out.append((cursor, min(a, hi)))
            cursor = max(cursor, b)
            if cursor >= hi:
                break
        if cursor < hi:
            out.append((cursor, hi))
        return IntervalUnion(out)

    def difference(self, other: "IntervalUnion", window: tuple[Real, Real]) -> "IntervalUnion":
        return self.intersect(other.complement(window))

    def clip(self, window: tuple[Real, Real]) -> "IntervalUnion":
        lo, hi = window
        return self.intersect(IntervalUnion.single(lo, hi))

    def is_subset(self, other: "IntervalUnion") -> bool:
        return self.intersect(other).measure() == self.measure()

    def to_pairs(self) -> list[list[float]]:
        """JSON-friendly [[lo, hi], ...] (floats)."""
        return [[float(a), float(b)] for a, b in self.intervals]


def _normalize(pairs: Iterable[tuple[Real, Real]]) -> tuple[tuple[Real, Real], ...]:
    items = [(lo, hi) for lo, hi in pairs if lo < hi]
    items.sort()
    merged: list[tuple[Real, Real]] = []
    for lo, hi in items:
        if merged and lo <= merged[-1][1]:
            if hi > merged[-1][1]:
                merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))
    return tuple(merged)


def set_op(lhs: IntervalUnion, rhs: IntervalUnion, kind: str, domain: Domain) -> IntervalUnion:
    """Union / intersection / difference, clipped to the domain window."""
    if kind == "union":
        out = lhs.union(rhs)
    elif kind == "intersect":
        out = lhs.intersect(rhs)
    elif kind == "diff":
        out = lhs.difference(rhs, domain.window)
    else:
        raise ValueError(f"unknown set operation {kind!r}")
    return out.clip(domain.window)


def as_exact(x: Real) -> Real:
    """Lift a float to the exact rational it denotes (Fractions pass through)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if math.isfinite(x):
        return Fraction(x)
    return x
