"""Scale functions, speed measures, and characteristic-set families.

A scale function is piecewise linear through its knots, anchored so that
s(e) = 0 at the base point, and extrapolates with its end slopes beyond the
knot range.  Knots may be Fractions, in which case Stieltjes measures and
sub-scale derivation are exact.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Callable, Sequence

from .intervals import Domain, IntervalUnion, as_exact


class ScaleFunction:
    """Nondecreasing piecewise-linear function with s(base_point) = 0."""

    __slots__ = ("xs", "ss", "base_point", "strictly_increasing")

    def __init__(self, knots: Sequence[tuple[Real, Real]], base_point: Real):
        if len(knots) < 2:
            raise ValueError("scale function needs at least two knots")
        xs = [x for x, _ in knots]
        ss = [s for _, s in knots]
        for i in range(1, len(xs)):
            if xs[i] <= xs[i - 1]:
                raise ValueError("knot abscissae must be strictly increasing")
            if ss[i] < ss[i - 1]:
                raise ValueError("scale values must be nondecreasing")
        if not (xs[0] <= base_point <= xs[-1]):
            raise ValueError("base point must lie inside the knot range")
        offset = _interp(xs, ss, base_point)
        ss = [s - offset for s in ss]
        self.xs = tuple(xs)
        self.ss = tuple(ss)
        self.base_point = base_point
        self.strictly_increasing = all(
            ss[i] > ss[i - 1] for i in range(1, len(ss))
        )

    @classmethod
    def identity(cls, window: tuple[Real, Real], base_point: Real | None = None) -> "ScaleFunction":
        lo, hi = window
        e = base_point if base_point is not None else lo + (hi - lo) / 2
        return cls([(lo, lo), (hi, hi)], e)

    def __call__(self, x: Real) -> Real:
        return _interp(self.xs, self.ss, x)

    def __repr__(self):
        return (
            f"ScaleFunction({len(self.xs)} knots on "
            f"[{float(self.xs[0]):.6g}, {float(self.xs[-1]):.6g}], e={float(self.base_point):.6g})"
        )

    def value_at_many(self, points) -> list:
        return [self(x) for x in points]

    def slope(self, x: Real) -> Real:
        """Slope of the linear piece containing x (right-sided at knots)."""
        i = self._piece_index(x)
        dx = self.xs[i + 1] - self.xs[i]
        return (self.ss[i + 1] - self.ss[i]) / dx

    def _piece_index(self, x: Real) -> int:
        i = bisect.bisect_right(self.xs, x) - 1
        return min(max(i, 0), len(self.xs) - 2)

    def image(self) -> tuple[Real, Real]:
        """Image interval (over the knot range)."""
        return (self.ss[0], self.ss[-1])

    def inverse(self, y: Real) -> Real:
        """Inverse at y; requires a strictly increasing scale."""
        if not self.strictly_increasing:
            raise ValueError("inverse requires a strictly increasing scale")
        ss, xs = self.ss, self.xs
        i = min(max(bisect.bisect_right(ss, y) - 1, 0), len(ss) - 2)
        ds = ss[i + 1] - ss[i]
        return xs[i] + (y - ss[i]) * (xs[i + 1] - xs[i]) / ds

    def with_knots(self, points: Sequence[Real]) -> "ScaleFunction":
        """Same function with extra knots inserted (values interpolated)."""
        xs = sorted(set(self.xs) | {p for p in points if self.xs[0] <= p <= self.xs[-1]})
        return ScaleFunction([(x, self(x)) for x in xs], self.base_point)


def _interp(xs: Sequence[Real], ss: Sequence[Real], x: Real) -> Real:
    """Piecewise-linear interpolation with end-slope extrapolation."""
    n = len(xs)
    if x <= xs[0]:
        i = 0
    elif x >= xs[-1]:
        i = n - 2
    else:
        i = bisect.bisect_right(xs, x) - 1
        if i > n - 2:
            i = n - 2
    dx = xs[i + 1] - xs[i]
    t = (x - xs[i]) / dx
    return ss[i] + t * (ss[i + 1] - ss[i])


def stieltjes_measure(s: ScaleFunction, a_set: IntervalUnion) -> Real:
    """ds-mass of an interval union: sum of s(hi) - s(lo)."""
    total = 0
    for lo, hi in a_set.intervals:
        total = total + (s(hi) - s(lo))
    return total


def derive_subscale(s: ScaleFunction, g_set: IntervalUnion, e: Real) -> ScaleFunction:
    """Scale s~ with s~(x) = integral from e to x of 1_G ds: flat exactly off G.

    Knots are inserted at every boundary of G so the result is exact on the
    combined knot set.
    """
    pts = sorted(set(s.xs) | set(g_set.endpoints()) | {e})
    pts = [p for p in pts if s.xs[0] <= p <= s.xs[-1]]
    vals = [0]
    for i in range(1, len(pts)):
        mid = pts[i - 1] + (pts[i] - pts[i - 1]) / 2
        inc = (s(pts[i]) - s(pts[i - 1])) if g_set.contains(mid) else 0
        vals.append(vals[-1] + inc)
    return ScaleFunction(list(zip(pts, vals)), e)


@dataclass(frozen=True)
class CharacteristicFamily:
    """Monotone family of characteristic sets with its normalized limit."""

    sets: tuple[IntervalUnion, ...]
    direction: str  # "decreasing" | "increasing"
    limit: IntervalUnion
    labels: tuple[int, ...] = ()

    def __post_init__(self):
        if self.direction not in ("decreasing", "increasing"):
            raise ValueError(f"bad direction {self.direction!r}")
        for i in range(1, len(self.sets)):
            a, b = self.sets[i], self.sets[i - 1]
            ok = a.is_subset(b) if self.direction == "decreasing" else b.is_subset(a)
            if not ok:
                raise ValueError(
                    f"family not {self.direction}: nesting fails at index {i}"
                )

    def __len__(self):
        return len(self.sets)


def monotone_family(
    sets: Sequence[IntervalUnion], direction: str, window: tuple[Real, Real],
    labels: Sequence[int] = (),
) -> CharacteristicFamily:
    """Build a family, computing the limit as the running intersection/union."""
    sets = tuple(sets)
    if not sets:
        raise ValueError("family needs at least one set")
    limit = sets[0]
    for g in sets[1:]:
        limit = limit.intersect(g) if direction == "decreasing" else limit.union(g)
    limit = limit.clip(window)
    return CharacteristicFamily(sets, direction, limit, tuple(labels) or tuple(range(1, len(sets) + 1)))


def dyadic_rationals(window: tuple[Real, Real], count: int) -> list[Fraction]:
    """First `count` dyadic rationals of the window in breadth-first depth order.

    Depth d contributes odd multiples of 2^-d: 1/2; 1/4, 3/4; 1/8, 3/8, ...
    mapped affinely into the window.
    """
    lo = as_exact(window[0])
    hi = as_exact(window[1])
    width = hi - lo
    out: list[Fraction] = []
    depth = 1
    while len(out) < count:
        for num in range(1, 2 ** depth, 2):
            out.append(lo + Fraction(num, 2 ** depth) * width)
            if len(out) == count:
                return out
        depth += 1
    return out


def example26_family(domain: Domain, K: int, n_list: Sequence[int]) -> CharacteristicFamily:
    """Decreasing family of unions of shrinking intervals around K dyadic rationals.

    The k-th rational (1-based) gets radius 1/(2^(k+1) n); total length of the
    n-th set is at most 1/n.  Exact Fraction endpoints throughout.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    n_list = list(n_list)
    if any(n_list[i] >= n_list[i + 1] for i in range(len(n_list) - 1)):
        raise ValueError("n_list must be strictly increasing")
    window = (as_exact(domain.lo), as_exact(domain.hi))
    rationals = dyadic_rationals(window, K)
    sets = []
    for n in n_list:
        pairs = []
        for k, r in enumerate(rationals, start=1):
            rad = Fraction(1, (2 ** (k + 1)) * n)
            pairs.append((r - rad, r + rad))
        sets.append(IntervalUnion(pairs).clip(window))
    return monotone_family(sets, "decreasing", window, labels=n_list)


def single_removed_interval_family(
    domain: Domain, center: Real, widths: Sequence[Real]
) -> CharacteristicFamily:
    """Family G_n = window minus a closed interval of given width at `center`.

    Shrinking widths give an increasing family (limit = window minus a point,
    normalized to the full window); growing widths give a decreasing one.
    """
    widths = list(widths)
    if not widths or any(w < 0 for w in widths):
        raise ValueError("widths must be nonnegative and nonempty")
    window = (as_exact(domain.lo), as_exact(domain.hi))
    c = as_exact(center)
    sets = []
    for w in widths:
        w = as_exact(w)
        if w == 0:
            sets.append(IntervalUnion.single(*window))
            continue
        blob = IntervalUnion.single(c - w / 2, c + w / 2)
        sets.append(blob.complement(window))
    increasing = all(widths[i] >= widths[i + 1] for i in range(len(widths) - 1))
    decreasing = all(widths[i] <= widths[i + 1] for i in range(len(widths) - 1))
    if increasing and not decreasing:
        direction = "increasing"
    elif decreasing and not increasing:
        direction = "decreasing"
    elif increasing and decreasing:
        direction = "decreasing"  # constant family: nested either way
    else:
        raise ValueError("widths must be monotone")
    return monotone_family(sets, direction, window)


def pointwise_scale_limit(
    family: CharacteristicFamily, s: ScaleFunction, e: Real, x: Real
) -> tuple[list[Real], Real]:
    """Values s_n(x) of the family sub-scales and the limit sub-scale value.

    Only meaningful for increasing families, where s_n(x) converges
    monotonically to the limit value.
    """
    if family.direction != "increasing":
        raise ValueError("pointwise scale limit requires an increasing family")
    values = [derive_subscale(s, g, e)(x) for g in family.sets]
    limit = derive_subscale(s, family.limit, e)(x)
    return values, limit


@dataclass(frozen=True)
class CharacteristicReport:
    ok: bool
    worst_cell: tuple[Real, Real]
    worst_mass: Real


def is_characteristic(
    g_set: IntervalUnion, s: ScaleFunction, resolution: Real,
    window: tuple[Real, Real] | None = None,
) -> CharacteristicReport:
    """Check ds(G ∩ cell) > 0 on every cell of width `resolution` tiling the window."""
    lo = as_exact(window[0]) if window else as_exact(s.xs[0])
    hi = as_exact(window[1]) if window else as_exact(s.xs[-1])
    res = as_exact(resolution)
    if not (0 < res < hi - lo):
        raise ValueError("resolution must be positive and smaller than the window width")
    worst = None
    worst_cell = None
    x = lo
    while x < hi:
        y = min(x + res, hi)
        cell = IntervalUnion.single(x, y)
        mass = stieltjes_measure(s, g_set.intersect(cell))
        if worst is None or mass < worst:
            worst, worst_cell = mass, (x, y)
        x = y
    return CharacteristicReport(ok=worst > 0, worst_cell=worst_cell, worst_mass=worst)


class SpeedMeasure:
    """Nonnegative step-function density plus point atoms.

    ``density(x) = values[i]`` on the i-th piece of the partition induced by
    ``breaks`` (extending to the left of the first break and to the right of
    the last).  Interval masses are exact for exact inputs; atoms on the open
    interval's boundary are excluded.
    """

    __slots__ = ("breaks", "values", "atoms")

    def __init__(
        self,
        breaks: Sequence[Real] = (),
        values: Sequence[Real] = (1,),
        atoms: Sequence[tuple[Real, Real]] = (),
    ):
        breaks = tuple(breaks)
        values = tuple(values)
        if len(values) != len(breaks) + 1:
            raise ValueError("need len(values) == len(breaks) + 1")
        if any(breaks[i] >= breaks[i + 1] for i in range(len(breaks) - 1)):
            raise ValueError("breaks must be strictly increasing")
        if any(v < 0 for v in values):
            raise ValueError("density values must be nonnegative")
        atoms = tuple(sorted(atoms))
        if any(mass <= 0 for _, mass in atoms):
            raise ValueError("atom masses must be positive")
        self.breaks = breaks
        self.values = values
        self.atoms = atoms

    @classmethod
    def uniform(cls, c: Real = 1) -> "SpeedMeasure":
        return cls((), (c,))

    def __repr__(self):
        return (
            f"SpeedMeasure({len(self.values)} density pieces, "
            f"{len(self.atoms)} atoms)"
        )

    def density(self, x: Real) -> Real:
        return self.values[bisect.bisect_right(self.breaks, x)]

    def mass(self, lo: Real, hi: Real) -> Real:
        """Mass of the open interval (lo, hi)."""
        if hi <= lo:
            return 0
        total = 0
        cuts = [lo] + [b for b in self.breaks if lo < b < hi] + [hi]
        for i in range(len(cuts) - 1):
            mid = cuts[i] + (cuts[i + 1] - cuts[i]) / 2
            total = total + self.density(mid) * (cuts[i + 1] - cuts[i])
        for x, mass in self.atoms:
            if lo < x < hi:
                total = total + mass
        return total

    def atom_locations(self) -> list[Real]:
        return [x for x, _ in self.atoms]


def density_ratio(s0: ScaleFunction, m: SpeedMeasure, window: tuple[Real, Real]) -> Real:
    """sup of ds0/dm over the window, taken over the absolutely continuous part.

    Atoms of m only lower the ratio and are excluded; cells where the density
    vanishes while the scale grows make the ratio infinite.
    """
    lo, hi = window
    cuts = sorted(
        {lo, hi}
        | {x for x in s0.xs if lo < x < hi}
        | {b for b in m.breaks if lo < b < hi}
    )
    sup = 0
    for i in range(len(cuts) - 1):
        mid = cuts[i] + (cuts[i + 1] - cuts[i]) / 2
        slope = s0.slope(mid)
        dens = m.density(mid)
        if slope == 0:
            continue
        if dens == 0:
            return float("inf")
        ratio = slope / dens
        if ratio > sup:
            sup = ratio
    return sup
