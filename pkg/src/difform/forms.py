"""Finite-volume discretization of the scale/speed Dirichlet energy.

States sit at cell centers of the working window; cell edges are midpoints
between neighboring states (walls at the window ends).  Extra states are
inserted for every interior scale knot, speed atom, and characteristic-set
endpoint, so cell masses and scale gaps are exact for the piecewise data.

The assembled generator is the classical three-point (d/dm)(d/ds) stencil
with the 1/2 prefactor:

    (L u)_i = [ (u_{i+1}-u_i)/ds_i - (u_i-u_{i-1})/ds_{i-1} ] / (2 m_i)

Consecutive states joined by a zero scale gap collapse into one sticky state
(mass summed, outer conductances kept).  Near-zero gaps are contracted the
same way under a conductance-contrast cap: characteristic intervals can carry
ds-lengths near 2^-60, and the resulting ~1e18 conductances are numerically
meaningless for every time-stepping scheme while changing the slow modes only
at the 1/contrast level.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from numbers import Real
from typing import Sequence

import numpy as np

from .intervals import Domain, IntervalUnion
from .scale import ScaleFunction, SpeedMeasure

NEUMANN = "neumann"
DIRICHLET = "dirichlet"

# Relative scale gap treated as exactly flat, and the largest allowed
# state-to-state exchange rate c_i (1/m_i + 1/m_{i+1}).  Modes faster than the
# cap decay to zero within any resolvable time (exp(-1e10 * t) underflows for
# t >= 1e-8), and for speed measures with density bounded below a huge rate
# forces a negligible ds-resistance, so contracting such edges leaves the slow
# dynamics untouched while keeping the eigensolver well conditioned.
FLAT_RTOL = 1e-12
RATE_CAP = 1e10


@dataclass(frozen=True)
class Grid:
    """States, cell edges, exact cell masses, and scale values at states."""

    points: np.ndarray
    edges: np.ndarray
    cell_masses: np.ndarray
    scale_values: np.ndarray
    window: tuple[float, float]
    wall_scales: tuple[float, float]

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def scale_gaps(self) -> np.ndarray:
        return np.diff(self.scale_values)


def build_grid(
    domain: Domain,
    s: ScaleFunction,
    m: SpeedMeasure,
    N: int,
    extra_points: Sequence[Real] = (),
) -> Grid:
    """Cell-centered grid of N uniform cells plus mandatory interior states."""
    if N < 3:
        raise ValueError("need N >= 3 grid cells")
    lo, hi = float(domain.lo), float(domain.hi)
    width = hi - lo
    states = set((lo + (np.arange(N) + 0.5) * width / N).tolist())
    mandatory = (
        [x for x in s.xs]
        + m.atom_locations()
        + list(m.breaks)
        + list(extra_points)
    )
    for p in mandatory:
        fp = float(p)
        if lo < fp < hi:
            states.add(fp)
    xs = np.array(sorted(states))
    # collapse states closer than float resolution of the window
    tol = width * 1e-12
    keep = [0]
    for i in range(1, len(xs)):
        if xs[i] - xs[keep[-1]] > tol:
            keep.append(i)
    xs = xs[keep]
    edges = np.concatenate([[lo], (xs[1:] + xs[:-1]) / 2, [hi]])
    masses = np.array([float(m.mass(edges[i], edges[i + 1])) for i in range(len(xs))])
    if np.any(masses <= 0):
        bad = int(np.argmin(masses))
        raise ValueError(
            f"cell {bad} at x={xs[bad]:.6g} has nonpositive mass; "
            "speed measure must be fully supported"
        )
    svals = np.array([float(s(x)) for x in xs])
    if np.any(np.diff(svals) < -width * 1e-15):
        raise ValueError("scale values must be nondecreasing along the grid")
    svals = np.maximum.accumulate(svals)
    return Grid(
        points=xs,
        edges=edges,
        cell_masses=masses,
        scale_values=svals,
        window=(lo, hi),
        wall_scales=(float(s(lo)), float(s(hi))),
    )


@dataclass(frozen=True)
class DiscreteForm:
    """Tridiagonal generator of the discretized form on merged states."""

    grid: Grid
    masses: np.ndarray          # merged state masses
    s_values: np.ndarray        # merged state scale values
    positions: np.ndarray       # mass-weighted centroids of merged groups
    merged_groups: np.ndarray   # grid state index -> merged state index
    sub: np.ndarray             # L_{i,i-1}
    diag: np.ndarray            # L_{i,i}
    sup: np.ndarray             # L_{i,i+1}
    boundary: tuple[str, str]
    wall_gaps: tuple[float, float]  # scale gap state<->wall (0 where unused)

    @property
    def n_states(self) -> int:
        return len(self.masses)

    @property
    def conductances(self) -> np.ndarray:
        """c_i = 1/(2 ds_i) between merged neighbors."""
        return 1.0 / (2.0 * np.diff(self.s_values))

    def project(self, f_grid: np.ndarray) -> np.ndarray:
        """Mass-weighted average onto merged states (the L2(m) projection)."""
        f_grid = np.asarray(f_grid, dtype=float)
        if f_grid.shape != (self.grid.n,):
            raise ValueError("function not defined on this form's grid")
        num = np.bincount(
            self.merged_groups,
            weights=f_grid * self.grid.cell_masses,
            minlength=self.n_states,
        )
        return num / self.masses

    def inject(self, u_merged: np.ndarray) -> np.ndarray:
        """Piecewise-constant extension of a merged-state function to the grid."""
        u_merged = np.asarray(u_merged, dtype=float)
        return u_merged[..., self.merged_groups]

    def apply_generator(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self.diag * u
        out[..., :-1] += self.sup[:-1] * u[..., 1:]
        out[..., 1:] += self.sub[1:] * u[..., :-1]
        return out

    def to_json(self) -> str:
        """Golden-test serialization: grid, masses, diagonals, merged groups."""
        payload = {
            "grid_points": self.grid.points.tolist(),
            "cell_masses": self.grid.cell_masses.tolist(),
            "state_masses": self.masses.tolist(),
            "state_scale_values": self.s_values.tolist(),
            "sub": self.sub.tolist(),
            "diag": self.diag.tolist(),
            "sup": self.sup.tolist(),
            "merged_groups": self.merged_groups.tolist(),
            "boundary": list(self.boundary),
        }
        return json.dumps(payload, sort_keys=True)


def assemble_form(
    grid: Grid,
    boundary: tuple[str, str] = (NEUMANN, NEUMANN),
    rate_cap: float | None = RATE_CAP,
) -> DiscreteForm:
    """Assemble the generator, merging flat stretches into sticky states."""
    for flag in boundary:
        if flag not in (NEUMANN, DIRICHLET):
            raise ValueError(f"unknown boundary flag {flag!r}")
    svals = grid.scale_values
    span = float(svals[-1] - svals[0])
    if span <= 0:
        raise ValueError("degenerate scale: flat on the whole window")
    flat_tol = span * FLAT_RTOL

    # pass 1: exact/near-exact flat merging
    groups = np.zeros(grid.n, dtype=np.int64)
    g = 0
    anchor = svals[0]
    for i in range(1, grid.n):
        if svals[i] - anchor <= flat_tol:
            groups[i] = g
        else:
            g += 1
            groups[i] = g
            anchor = svals[i]
    masses = np.zeros(g + 1)
    np.add.at(masses, groups, grid.cell_masses)
    s_merged = np.zeros(g + 1)
    np.add.at(s_merged, groups, grid.cell_masses * svals)
    s_merged /= masses
    pos = np.zeros(g + 1)
    np.add.at(pos, groups, grid.cell_masses * grid.points)
    pos /= masses

    # pass 2: contract ultra-stiff edges (instant-equilibration pairs)
    if rate_cap is not None and len(masses) > 1:
        masses, s_merged, pos, remap = _rate_contract(
            masses, s_merged, pos, rate_cap
        )
        groups = remap[groups]

    M = len(masses)
    sub = np.zeros(M)
    diag = np.zeros(M)
    sup = np.zeros(M)
    ds = np.diff(s_merged)
    c = 1.0 / (2.0 * ds) if M > 1 else np.zeros(0)
    for i in range(M):
        left = c[i - 1] if i > 0 else 0.0
        right = c[i] if i < M - 1 else 0.0
        if i > 0:
            sub[i] = left / masses[i]
        if i < M - 1:
            sup[i] = right / masses[i]
        diag[i] = -(left + right) / masses[i]

    wall_gaps = [0.0, 0.0]
    s_fn_lo, s_fn_hi = None, None
    if boundary[0] == DIRICHLET:
        gap = float(s_merged[0] - _wall_scale(grid, 0))
        if gap <= flat_tol:
            raise ValueError("scale is flat against the left Dirichlet wall")
        wall_gaps[0] = gap
        diag[0] -= 1.0 / (2.0 * gap) / masses[0]
    if boundary[1] == DIRICHLET:
        gap = float(_wall_scale(grid, 1) - s_merged[-1])
        if gap <= flat_tol:
            raise ValueError("scale is flat against the right Dirichlet wall")
        wall_gaps[1] = gap
        diag[-1] -= 1.0 / (2.0 * gap) / masses[-1]

    return DiscreteForm(
        grid=grid,
        masses=masses,
        s_values=s_merged,
        positions=pos,
        merged_groups=groups,
        sub=sub,
        diag=diag,
        sup=sup,
        boundary=tuple(boundary),
        wall_gaps=(wall_gaps[0], wall_gaps[1]),
    )


def _wall_scale(grid: Grid, side: int) -> float:
    return grid.wall_scales[side]


def _rate_contract(masses, s_vals, pos, cap):
    """Contract edges whose exchange rate c (1/m + 1/m') exceeds the cap."""
    masses = list(masses)
    s_vals = list(s_vals)
    pos = list(pos)
    parents = list(range(len(masses)))  # original merged index -> slot

    def rate(j):
        ds = s_vals[j + 1] - s_vals[j]
        return (1.0 / (2.0 * ds)) * (1.0 / masses[j] + 1.0 / masses[j + 1])

    while len(masses) > 1:
        rates = [rate(j) for j in range(len(masses) - 1)]
        worst = max(range(len(rates)), key=rates.__getitem__)
        if rates[worst] <= cap:
            break
        j = worst
        w = masses[j] + masses[j + 1]
        s_vals[j] = (masses[j] * s_vals[j] + masses[j + 1] * s_vals[j + 1]) / w
        pos[j] = (masses[j] * pos[j] + masses[j + 1] * pos[j + 1]) / w
        masses[j] = w
        del masses[j + 1], s_vals[j + 1], pos[j + 1]
        parents = [p if p <= j else p - 1 for p in parents]
    remap = np.array(parents, dtype=np.int64)
    return np.array(masses), np.array(s_vals), np.array(pos), remap


def energy(form: DiscreteForm, u: np.ndarray, v: np.ndarray | None = None) -> float:
    """Dirichlet energy (1/2) sum (du)(dv)/ds over cells, plus Dirichlet wall terms."""
    u = np.asarray(u, dtype=float)
    v = u if v is None else np.asarray(v, dtype=float)
    if u.shape != (form.n_states,) or v.shape != (form.n_states,):
        raise ValueError("functions must live on the form's merged states")
    du = np.diff(u)
    dv = np.diff(v)
    ds = np.diff(form.s_values)
    total = float(np.sum(du * dv / (2.0 * ds))) if form.n_states > 1 else 0.0
    if form.boundary[0] == DIRICHLET:
        total += u[0] * v[0] / (2.0 * form.wall_gaps[0])
    if form.boundary[1] == DIRICHLET:
        total += u[-1] * v[-1] / (2.0 * form.wall_gaps[1])
    return total


@dataclass(frozen=True)
class BoundaryClass:
    endpoint: str               # "left" | "right"
    approachable: bool
    test_integral: float        # +inf when divergent


DIVERGENCE_THRESHOLD = 1e6
EXPANSION_STEPS = 64


def classify_boundary(
    s: ScaleFunction,
    m: SpeedMeasure,
    domain: Domain,
    endpoint: str,
    c: Real,
    quad_cells: int = EXPANSION_STEPS,
) -> BoundaryClass:
    """Feller-type approachability test via the integral of m((x,c)) ds(x).

    Finite endpoints are integrated exactly piece by piece.  Infinite
    endpoints use a geometric cell expansion; divergence is declared when the
    partial sums pass the threshold with nondecreasing increments.
    """
    if endpoint not in ("left", "right"):
        raise ValueError("endpoint must be 'left' or 'right'")
    c = float(c)
    if not (domain.lo <= c <= domain.hi):
        raise ValueError("reference point c must lie in the closed window")
    a = domain.a if endpoint == "left" else domain.b
    if math.isfinite(a):
        total = _integrate_piecewise(s, m, a, c, endpoint)
        return BoundaryClass(endpoint, approachable=math.isfinite(total), test_integral=total)

    # infinite endpoint: expand geometrically away from c
    h = float(domain.width)
    total = 0.0
    prev_inc = 0.0
    nondecreasing_run = 0
    near, far = c, c - h if endpoint == "left" else c + h
    for step in range(quad_cells):
        lo, hi = (far, near) if endpoint == "left" else (near, far)
        inc = _integrate_piecewise(s, m, lo, hi, endpoint, reference=c)
        total += inc
        if inc >= prev_inc - abs(prev_inc) * 1e-12:
            nondecreasing_run += 1
        else:
            nondecreasing_run = 0
        if total > DIVERGENCE_THRESHOLD and nondecreasing_run >= 2:
            return BoundaryClass(endpoint, approachable=False, test_integral=math.inf)
        if inc < 1e-12 * max(total, 1.0) and step > 2:
            return BoundaryClass(endpoint, approachable=True, test_integral=total)
        prev_inc = inc
        near = far
        h *= 2.0
        far = far - h if endpoint == "left" else far + h
    # increments never settled: geometric growth means divergence
    approachable = not (prev_inc > 0 and nondecreasing_run >= 2)
    return BoundaryClass(
        endpoint,
        approachable=approachable,
        test_integral=total if approachable else math.inf,
    )


def _integrate_piecewise(
    s: ScaleFunction, m: SpeedMeasure, lo: float, hi: float, endpoint: str,
    reference: float | None = None,
) -> float:
    """Exact integral of m((x,c)) s'(x) dx over (lo,hi), c the near end or reference.

    For the left endpoint c is `hi` (or the supplied reference), and m((x,c))
    is piecewise linear in x between breaks/atoms; the product with the
    piecewise-constant s' integrates in closed form.
    """
    c = reference if reference is not None else (hi if endpoint == "left" else lo)
    cuts = sorted(
        {lo, hi}
        | {float(b) for b in m.breaks if lo < float(b) < hi}
        | {float(x) for x in m.atom_locations() if lo < float(x) < hi}
        | {float(x) for x in s.xs if lo < float(x) < hi}
    )
    total = 0.0
    for i in range(len(cuts) - 1):
        p, q = cuts[i], cuts[i + 1]
        mid = (p + q) / 2
        sigma = float(s.slope(mid))
        if sigma == 0.0:
            continue
        rho = float(m.density(mid))
        if endpoint == "left":
            # m((x,c)) = K + rho*(q - x) for x in (p,q), K = m((q,c)) + atom at q
            K = float(m.mass(q, c)) + _atom_at(m, q, q < c)
            total += sigma * (K * (q - p) + rho * (q - p) ** 2 / 2)
        else:
            K = float(m.mass(c, p)) + _atom_at(m, p, p > c)
            total += sigma * (K * (q - p) + rho * (q - p) ** 2 / 2)
    return total


def _atom_at(m: SpeedMeasure, x: float, inside: bool) -> float:
    if not inside:
        return 0.0
    return float(sum(mass for loc, mass in m.atoms if float(loc) == x))
