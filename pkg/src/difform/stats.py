"""Statistical verification suite: fdd convergence, tightness, initial laws.

The operations here are pure statistics; pass/fail judgment beyond each
statistic's definition lives in the scenario harness.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .paths import Path, PathEnsemble

KS_COEFF_5PCT = 1.358


@dataclass(frozen=True)
class KSResult:
    stat: float
    critical_5pct: float


def ks_two_sample(x: Sequence[float], y: Sequence[float]) -> KSResult:
    """Two-sample Kolmogorov-Smirnov statistic with the 5% asymptotic critical value."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    nx, ny = len(x), len(y)
    if nx == 0 or ny == 0:
        raise ValueError("empty sample")
    pooled = np.concatenate([x, y])
    fx = np.searchsorted(x, pooled, side="right") / nx
    fy = np.searchsorted(y, pooled, side="right") / ny
    stat = float(np.max(np.abs(fx - fy)))
    critical = KS_COEFF_5PCT * math.sqrt((nx + ny) / (nx * ny))
    return KSResult(stat=stat, critical_5pct=critical)


# ---------------------------------------------------------------------------
# fdd convergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FddReport:
    labels: tuple[int, ...]
    times: tuple[float, ...]
    ks_stats: np.ndarray          # (n_family, n_times)
    thresholds: np.ndarray        # same shape, 5% critical values
    passed: bool                  # all final-n statistics below threshold
    cross_rows: tuple[tuple, ...] = ()  # (n, kind, t0, t1, mc, predicted, se, ok)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "statistic", "param1", "param2", "value", "threshold", "pass"])
        for i, n in enumerate(self.labels):
            for j, t in enumerate(self.times):
                ok = self.ks_stats[i, j] <= self.thresholds[i, j]
                w.writerow([n, "ks", f"{t:.12g}", "", f"{self.ks_stats[i, j]:.12g}",
                            f"{self.thresholds[i, j]:.12g}", str(ok).lower()])
        for row in self.cross_rows:
            n, kind, t0, t1, mc, pred, se, ok = row
            w.writerow([n, kind, f"{t0:.12g}", f"{t1:.12g}" if t1 is not None else "",
                        f"{mc:.12g}", f"{pred:.12g} +- {3 * se:.3g}", str(ok).lower()])
        w.writerow(["summary", "fdd_pass", "", "", str(self.passed).lower(), "", ""])
        return buf.getvalue()


def fdd_convergence_suite(
    family_ensembles: Sequence[PathEnsemble],
    limit_ensemble: PathEnsemble,
    times: Sequence[float],
    labels: Sequence[int] = (),
    semigroup_oracle: "FddOracle | None" = None,
) -> FddReport:
    """Marginal KS statistics family-vs-limit, plus semigroup cross-oracle rows."""
    times = [float(t) for t in times]
    horizon = min([e.horizon for e in family_ensembles] + [limit_ensemble.horizon])
    if max(times) > horizon:
        raise ValueError("requested times beyond the ensemble horizon")
    ks = np.zeros((len(family_ensembles), len(times)))
    thr = np.zeros_like(ks)
    limit_samples = {t: limit_ensemble.values_at(t) for t in times}
    for i, ens in enumerate(family_ensembles):
        for j, t in enumerate(times):
            res = ks_two_sample(ens.values_at(t), limit_samples[t])
            ks[i, j] = res.stat
            thr[i, j] = res.critical_5pct
    passed = bool(np.all(ks[-1] <= thr[-1]))
    cross = ()
    if semigroup_oracle is not None:
        cross = tuple(semigroup_oracle.rows(family_ensembles, times, labels))
    return FddReport(
        labels=tuple(labels) or tuple(range(1, len(family_ensembles) + 1)),
        times=tuple(times),
        ks_stats=ks,
        thresholds=thr,
        passed=passed,
        cross_rows=cross,
    )


class FddOracle:
    """Semigroup-side predictions for Monte-Carlo moments.

    For ensemble n with initial density g_n, E_n[f(Z_t)] is predicted by
    integral of g_n * (T_t^n f) dm, and the two-time product moment
    E_n[f0(Z_t0) f1(Z_t1)] by the nested formula T_t0(f0 * T_{t1-t0} f1).
    """

    def __init__(self, evolvers, laws, f_single, f_pair=None):
        self.evolvers = list(evolvers)
        self.laws = list(laws)
        self.f_single = f_single          # grid function
        self.f_pair = f_pair if f_pair is not None else (f_single, f_single)

    def rows(self, ensembles, times, labels):
        labels = list(labels) or list(range(1, len(ensembles) + 1))
        out = []
        for i, ens in enumerate(ensembles):
            ev = self.evolvers[i]
            form = ev.form
            masses = form.grid.cell_masses
            g = self.laws[i].densities
            if g is None:
                continue
            f_states = form.project(np.asarray(self.f_single, dtype=float))
            # single-time moments: the MC side reads the merged state directly,
            # which makes E_n[f(Z_t)] vs integral g_n (T_t f) dm an exact
            # identity for the chain up to sampling noise
            for t in times:
                predicted = float(np.sum(
                    g * masses * form.inject(ev.evolve(f_states, t))
                ))
                vals = np.array([f_states[p.state_at(t)] for p in ens.paths])
                mc = float(np.mean(vals))
                se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
                out.append((labels[i], "cross_single", t, None, mc, predicted, se,
                            abs(mc - predicted) <= 3 * se + 1e-12))
            # one two-time product moment at (t0, t1) = (min, max)
            if len(times) >= 2:
                t0, t1 = min(times), max(times)
                f0 = form.project(np.asarray(self.f_pair[0], dtype=float))
                f1 = form.project(np.asarray(self.f_pair[1], dtype=float))
                inner = ev.evolve(f1, t1 - t0)
                predicted = float(np.sum(
                    g * masses * form.inject(ev.evolve(f0 * inner, t0))
                ))
                v0 = np.array([f0[p.state_at(t0)] for p in ens.paths])
                v1 = np.array([f1[p.state_at(t1)] for p in ens.paths])
                prod = v0 * v1
                mc = float(np.mean(prod))
                se = float(np.std(prod, ddof=1) / math.sqrt(len(prod)))
                out.append((labels[i], "cross_pair", t0, t1, mc, predicted, se,
                            abs(mc - predicted) <= 3 * se + 1e-12))
        return out


# ---------------------------------------------------------------------------
# path modulus of continuity
# ---------------------------------------------------------------------------

@njit(cache=True)
def _modulus_exceeds(times, values, T, delta, rho):
    """Whether sup over s<t<=T, t-s<delta of |Z_t - Z_s| >= rho on a jump path.

    Segment a (value v_a, ending at times[a+1]) and segment b starting at
    times[b] are within reach iff times[b] - times[a+1] < delta.
    """
    n = len(times)
    # deque over candidate earlier segments, by index
    head = 0
    best = 0.0
    lo_idx = 0
    for b in range(n):
        tb = times[b]
        if tb > T:
            break
        # drop earlier segments whose end time is too old
        while lo_idx < b:
            end_a = times[lo_idx + 1]
            if tb - end_a < delta:
                break
            lo_idx += 1
        vmin = values[b]
        vmax = values[b]
        for a in range(lo_idx, b):
            va = values[a]
            if va < vmin:
                vmin = va
            if va > vmax:
                vmax = va
        spread = max(vmax - values[b], values[b] - vmin)
        if spread > best:
            best = spread
        if best >= rho:
            return True
    return best >= rho


def modulus_statistic(ens: PathEnsemble, T: float, delta: float, rho: float) -> float:
    """Empirical probability that the delta-window modulus reaches rho on [0, T]."""
    if delta <= 0 or rho <= 0:
        raise ValueError("delta and rho must be positive")
    if T > ens.horizon:
        raise ValueError("T beyond ensemble horizon")
    count = 0
    for p in ens.paths:
        vals = ens.positions[p.states]
        if _modulus_exceeds(p.times, vals, T, delta, rho):
            count += 1
    return count / len(ens.paths)


def modulus_statistic_bruteforce(ens: PathEnsemble, T: float, delta: float,
                                 rho: float) -> float:
    """Double-loop oracle for the modulus event; exact, O(jumps^2) per path."""
    count = 0
    for p in ens.paths:
        vals = ens.positions[p.states]
        times = p.times
        hit = False
        n = len(times)
        for b in range(n):
            if times[b] > T or hit:
                break
            for a in range(b):
                if times[b] - times[a + 1] < delta and abs(vals[b] - vals[a]) >= rho:
                    hit = True
                    break
        if hit:
            count += 1
    return count / len(ens.paths)


def brownian_modulus_bound(C: float, T: float, delta: float, rho: float,
                           n_mc: int = 2000, seed: int = 0,
                           substeps: int = 64) -> float:
    """Monte-Carlo P(sup over windows of length C*delta of |B_t - B_s| >= rho).

    Standard Brownian motion on [0, C*T], grid step C*delta/substeps; the
    window max-min is scanned with a running filter.
    """
    if C <= 0:
        raise ValueError("C must be positive (bounded density ratio)")
    h = C * delta / substeps
    n_steps = int(math.ceil(C * T / h))
    window = substeps  # indices i<j with (j-i) <= substeps - 1 < delta/h... j-i <= substeps
    rng = np.random.default_rng(seed)
    hits = 0
    batch = max(1, min(n_mc, int(2e7 // max(n_steps, 1))))
    done = 0
    while done < n_mc:
        b = min(batch, n_mc - done)
        incr = rng.normal(0.0, math.sqrt(h), size=(b, n_steps))
        paths = np.cumsum(incr, axis=1)
        paths = np.concatenate([np.zeros((b, 1)), paths], axis=1)
        wmax = maximum_filter1d(paths, size=window, axis=1, mode="nearest")
        wmin = minimum_filter1d(paths, size=window, axis=1, mode="nearest")
        hits += int(np.sum(np.max(wmax - wmin, axis=1) >= rho))
        done += b
    return hits / n_mc


# ---------------------------------------------------------------------------
# initial-law diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TightnessReport:
    masses: np.ndarray      # (n_laws, n_A)
    a_grid: tuple[float, ...]
    liminf_proxy: float     # min over laws at the largest A


def initial_tightness(laws, ensembles_positions, a_grid) -> TightnessReport:
    """Mass of {|x| <= A} per law; laws are paired with their state positions."""
    a_grid = [float(a) for a in a_grid]
    if any(a_grid[i] >= a_grid[i + 1] for i in range(len(a_grid) - 1)):
        raise ValueError("A grid must be increasing")
    rows = []
    for law, (positions, weights) in zip(laws, ensembles_positions):
        total = []
        for A in a_grid:
            inside = np.abs(positions) <= A
            total.append(float(np.sum(weights[inside])))
        rows.append(total)
    masses = np.array(rows)
    return TightnessReport(masses=masses, a_grid=tuple(a_grid),
                           liminf_proxy=float(masses[:, -1].min()))


@dataclass(frozen=True)
class H2Report:
    l1_gaps: tuple[float, ...]
    l2_gaps: tuple[float, ...]


def h2_check(laws, limit_law, masses: np.ndarray) -> H2Report:
    """L1(m) and L2(m) gaps of the initial densities to the limit density."""
    if limit_law.kind != "density" or any(l.kind != "density" for l in laws):
        raise ValueError("initial-law convergence requires density laws")
    g = limit_law.densities
    l1, l2 = [], []
    for law in laws:
        d = law.densities - g
        l1.append(float(np.sum(masses * np.abs(d))))
        l2.append(float(math.sqrt(np.sum(masses * d * d))))
    return H2Report(l1_gaps=tuple(l1), l2_gaps=tuple(l2))
