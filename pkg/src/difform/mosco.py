"""Mosco-convergence certificates via the semigroup characterization.

Convergence of forms in the Mosco sense is equivalent to strong L2(m)
convergence of their semigroups for each t; here that is certified over a
finite dictionary of test functions and a finite time list.  Functions are
transferred between forms with different merged-state structures by the
mass-weighted averaging projection (the L2(m)-orthogonal projection onto the
merged subspace), so the limit semigroup of a family whose domains degenerate
is exp(tL) composed with that projection — the resolvent convention for
forms in the wide sense.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from numbers import Real
from typing import Callable, Sequence

import numpy as np

from .forms import DiscreteForm
from .intervals import IntervalUnion
from .scale import CharacteristicFamily, ScaleFunction, SpeedMeasure
from .semigroup import SemigroupEvolver, l2m_distance

MONOTONE_ATOL = 1e-8
BURN_IN = 1  # first family index exempt from the monotonicity check


@dataclass(frozen=True)
class MoscoReport:
    labels: tuple[int, ...]
    test_ids: tuple[str, ...]
    times: tuple[float, ...]
    distances: np.ndarray  # shape (n_family, n_tests, n_times)
    monotone_ok: bool
    final_max: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "test_id", "t", "distance"])
        for i, n in enumerate(self.labels):
            for j, f_id in enumerate(self.test_ids):
                for k, t in enumerate(self.times):
                    w.writerow([n, f_id, f"{t:.12g}", f"{self.distances[i, j, k]:.12g}"])
        w.writerow(["summary", "monotone_ok", str(self.monotone_ok).lower(),
                    f"{self.final_max:.12g}"])
        return buf.getvalue()


def _check_shared_grid(forms: Sequence[DiscreteForm]) -> None:
    base = forms[0].grid
    for f in forms[1:]:
        if f.grid.n != base.n or not np.array_equal(f.grid.points, base.points):
            raise ValueError("incompatible grids: forms must share a common refinement grid")


def mosco_certificate(
    family: Sequence[DiscreteForm],
    limit: DiscreteForm,
    dictionary: Sequence[tuple[str, np.ndarray]],
    times: Sequence[float],
    labels: Sequence[int] = (),
    scheme: str = "auto",
) -> MoscoReport:
    """Distances ||T_t^n f - T_t^lim f||_{L2(m)} over a dictionary and time list."""
    forms = list(family)
    if not forms or not dictionary or not len(times):
        raise ValueError("need a nonempty family, dictionary, and time list")
    _check_shared_grid(forms + [limit])
    masses = limit.grid.cell_masses
    ev_lim = SemigroupEvolver(limit, scheme=scheme)
    times = [float(t) for t in times]
    dist = np.zeros((len(forms), len(dictionary), len(times)))
    lim_evolved = {}
    for j, (_, f) in enumerate(dictionary):
        for k, t in enumerate(times):
            lim_evolved[(j, k)] = ev_lim.evolve_grid(f, t)
    for i, form in enumerate(forms):
        ev = SemigroupEvolver(form, scheme=scheme)
        for j, (_, f) in enumerate(dictionary):
            for k, t in enumerate(times):
                dist[i, j, k] = l2m_distance(
                    masses, ev.evolve_grid(f, t), lim_evolved[(j, k)]
                )
    monotone_ok = True
    for j in range(len(dictionary)):
        for k in range(len(times)):
            col = dist[:, j, k]
            for i in range(BURN_IN, len(col) - 1):
                if col[i + 1] > col[i] + MONOTONE_ATOL:
                    monotone_ok = False
    final_max = float(dist[-1].max())
    return MoscoReport(
        labels=tuple(labels) or tuple(range(1, len(forms) + 1)),
        test_ids=tuple(t_id for t_id, _ in dictionary),
        times=tuple(times),
        distances=dist,
        monotone_ok=monotone_ok,
        final_max=final_max,
    )


def freeze_check(
    family: Sequence[DiscreteForm],
    direction: str,
    u_grid: np.ndarray,
    t: float,
    scheme: str = "auto",
) -> list[float]:
    """Distances d_n = ||T_t^n u - u||_{L2(m)} for a decreasing family.

    The n-th semigroup acts through the projection onto the n-th merged
    states, so d_n includes the projection loss ||u - P_n u||.
    """
    if direction != "decreasing":
        raise ValueError("freeze check requires a decreasing family")
    forms = list(family)
    _check_shared_grid(forms)
    masses = forms[0].grid.cell_masses
    u_grid = np.asarray(u_grid, dtype=float)
    out = []
    for form in forms:
        ev = SemigroupEvolver(form, scheme=scheme)
        out.append(l2m_distance(masses, ev.evolve_grid(u_grid, t), u_grid))
    return out


def wide_sense_limit_distances(
    family: Sequence[DiscreteForm],
    limit: DiscreteForm,
    u_grid: np.ndarray,
    t: float,
    scheme: str = "auto",
) -> list[float]:
    """Distances ||T_t^n u - T_t^lim u|| against the wide-sense limit semigroup.

    Companion to `freeze_check`: the limit semigroup is exp(tL) after the
    projection transfer, which is the quantity the Mosco theorems control.
    """
    forms = list(family)
    _check_shared_grid(forms + [limit])
    masses = limit.grid.cell_masses
    u_grid = np.asarray(u_grid, dtype=float)
    ref = SemigroupEvolver(limit, scheme=scheme).evolve_grid(u_grid, t)
    out = []
    for form in forms:
        ev = SemigroupEvolver(form, scheme=scheme)
        out.append(l2m_distance(masses, ev.evolve_grid(u_grid, t), ref))
    return out


# ---------------------------------------------------------------------------
# Increasing-case core approximation energies
# ---------------------------------------------------------------------------

class SmoothBump:
    """C^1 bump phi(y) = cos^2(pi (y-c) / (2 h)) on [c-h, c+h], zero outside."""

    def __init__(self, center: float, half_width: float):
        if half_width <= 0:
            raise ValueError("half_width must be positive")
        self.center = float(center)
        self.half_width = float(half_width)

    @property
    def support(self) -> tuple[float, float]:
        return (self.center - self.half_width, self.center + self.half_width)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        z = (y - self.center) / self.half_width
        out = np.where(np.abs(z) < 1.0, np.cos(np.pi * z / 2) ** 2, 0.0)
        return out if out.ndim else float(out)

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        z = (y - self.center) / self.half_width
        out = np.where(
            np.abs(z) < 1.0,
            -(np.pi / (2 * self.half_width)) * np.sin(np.pi * z),
            0.0,
        )
        return out if out.ndim else float(out)

    def derivative_sup(self) -> float:
        return np.pi / (2 * self.half_width)


_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _cell_quad(fn: Callable[[np.ndarray], np.ndarray], lo: float, hi: float) -> float:
    mid = (lo + hi) / 2
    half = (hi - lo) / 2
    return float(half * np.dot(_GAUSS_WEIGHTS, fn(mid + half * _GAUSS_NODES)))


@dataclass(frozen=True)
class CoreApproximation:
    l2_gap: float
    phi_energy: float   # integral of (phi' o s_n)^2 (1_Gn - 1_G)^2 ds
    psi_energy: float   # integral of (phi' o s_n - phi' o s_inf)^2 ds_inf


def core_approximation_energy(
    phi: SmoothBump,
    s_n: ScaleFunction,
    s_inf: ScaleFunction,
    s: ScaleFunction,
    m: SpeedMeasure,
) -> CoreApproximation:
    """The three vanishing quantities behind the increasing-case core argument.

    Composite Gauss quadrature on the union of the knot partitions; the
    indicators 1_Gn, 1_G are read off as slope ratios ds_n/ds and ds_inf/ds,
    which are constant on each partition cell.
    """
    k_lo, k_hi = phi.support
    jn = s_n.image()
    ji = s_inf.image()
    if not (jn[0] < k_lo and k_hi < jn[1] and ji[0] < k_lo and k_hi < ji[1]):
        raise ValueError(
            "support condition violated: phi must be compactly supported "
            "inside the images of both s_n and s_inf"
        )
    cuts = sorted(
        set(float(x) for x in s_n.xs)
        | set(float(x) for x in s_inf.xs)
        | set(float(x) for x in s.xs)
        | set(float(b) for b in m.breaks)
    )
    l2 = 0.0
    phi_e = 0.0
    psi_e = 0.0
    for i in range(len(cuts) - 1):
        lo, hi = cuts[i], cuts[i + 1]
        if hi <= lo:
            continue
        mid = (lo + hi) / 2
        sn_mid = float(s_n(mid))  # anchor values for vectorized evaluation
        dens = float(m.density(mid))
        sig = float(s.slope(mid))
        sig_n = float(s_n.slope(mid))
        sig_i = float(s_inf.slope(mid))

        def sn(x, lo=lo, v0=float(s_n(lo)), sl=sig_n):
            return v0 + sl * (x - lo)

        def si(x, lo=lo, v0=float(s_inf(lo)), sl=sig_i):
            return v0 + sl * (x - lo)

        if dens > 0:
            l2 += _cell_quad(lambda x: dens * (phi(sn(x)) - phi(si(x))) ** 2, lo, hi)
        if sig > 0:
            r_n = sig_n / sig
            r_i = sig_i / sig
            if (r_n - r_i) != 0:
                phi_e += _cell_quad(
                    lambda x: sig * (r_n - r_i) ** 2 * phi.derivative(sn(x)) ** 2, lo, hi
                )
        if sig_i > 0:
            psi_e += _cell_quad(
                lambda x: sig_i * (phi.derivative(sn(x)) - phi.derivative(si(x))) ** 2,
                lo,
                hi,
            )
    for loc, mass in m.atoms:
        x = float(loc)
        if cuts[0] <= x <= cuts[-1]:
            l2 += float(mass) * (phi(float(s_n(x))) - phi(float(s_inf(x)))) ** 2
    return CoreApproximation(l2_gap=l2, phi_energy=phi_e, psi_energy=psi_e)


# ---------------------------------------------------------------------------
# Standard test-function dictionary
# ---------------------------------------------------------------------------

def standard_dictionary(grid_points: np.ndarray, window: tuple[float, float]) -> list[tuple[str, np.ndarray]]:
    """Hat functions at 8 locations, 3 sine modes, 2 indicators smoothed at grid scale."""
    lo, hi = window
    width = hi - lo
    x = np.asarray(grid_points, dtype=float)
    out: list[tuple[str, np.ndarray]] = []
    for i in range(8):
        c = lo + (i + 1) * width / 9
        h = width / 9
        out.append((f"hat{i}", np.maximum(0.0, 1.0 - np.abs(x - c) / h)))
    for k in (1, 2, 3):
        out.append((f"sine{k}", np.sin(k * np.pi * (x - lo) / width)))
    dx = np.median(np.diff(x))
    for i, (a, b) in enumerate(((lo + width / 4, lo + width / 2),
                                (lo + width / 2, lo + 3 * width / 4))):
        ramp = np.clip((x - a) / (2 * dx), 0, 1) - np.clip((x - b) / (2 * dx), 0, 1)
        out.append((f"ind{i}", ramp))
    return out
