"""Scenario-driven harness: config validation, suite orchestration, artifacts.

All pass/fail gates live here; library operations only compute.  Outputs are
CSV/JSON artifacts plus a manifest with content hashes (the manifest's
timestamp is excluded from hashing, so identical configs reproduce identical
artifact hashes).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from .forms import (DIRICHLET, NEUMANN, DiscreteForm, Grid, assemble_form,
                    build_grid, classify_boundary)
from .intervals import Domain, IntervalUnion
from .mosco import (freeze_check, mosco_certificate, standard_dictionary,
                    wide_sense_limit_distances)
from .paths import (InitialLaw, ensemble_quadratic_variation,
                    ensemble_snapshots, map_ensemble_positions, phi_cell_values,
                    simulate_ensemble)
from .scale import (CharacteristicFamily, ScaleFunction, SpeedMeasure,
                    density_ratio, derive_subscale, example26_family,
                    monotone_family, single_removed_interval_family)
from .semigroup import SemigroupEvolver
from .stats import (FddOracle, brownian_modulus_bound, fdd_convergence_suite,
                    h2_check, modulus_statistic)

EXIT_OK = 0
EXIT_STAT_FAIL = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4

DEFAULT_GRID_N = 400
DEFAULT_TIMES = (0.05, 0.1, 0.5, 1.0)

DEFAULT_GATES = {
    "mosco_final_max": 1e-2,
    "freeze_final_fraction": 0.2,
    "fdd_ks_slack": 1.5,
    "qv_mean_rel": 0.05,
}


class ConfigError(ValueError):
    """Invalid scenario configuration; message carries the field path."""


@dataclass
class Scenario:
    domain: Domain
    scale: ScaleFunction
    speed: SpeedMeasure
    base_point: float
    family: CharacteristicFamily
    direction: str
    boundary: tuple[str, str]
    grid_N: int
    times: tuple[float, ...]
    dictionary: str
    mc: dict | None
    initial_law_spec: dict
    output_dir: str
    gates: dict
    raw: dict


def _need(raw: dict, key: str, path: str):
    if key not in raw:
        raise ConfigError(f"{path}.{key}: missing required field")
    return raw[key]


def validate_config(raw: dict) -> Scenario:
    """Validate a JSON scenario document and build the domain objects."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")

    dom_raw = _need(raw, "domain", "config")
    window = _need(dom_raw, "window", "config.domain")
    if (not isinstance(window, (list, tuple)) or len(window) != 2
            or not all(isinstance(v, (int, float)) for v in window)
            or not window[0] < window[1]):
        raise ConfigError("config.domain.window: expected [lo, hi] with lo < hi")
    lo, hi = float(window[0]), float(window[1])
    pad = (hi - lo) / 1000
    a = dom_raw.get("a", lo - pad)
    b = dom_raw.get("b", hi + pad)
    a = -math.inf if a == "-inf" else float(a)
    b = math.inf if b == "inf" else float(b)
    try:
        domain = Domain(a, b, (lo, hi))
    except ValueError as exc:
        raise ConfigError(f"config.domain: {exc}") from None

    e = raw.get("e", domain.midpoint)
    if not (lo < e < hi):
        raise ConfigError("config.e: base point must lie inside the window")

    scale_raw = raw.get("scale", {"kind": "identity"})
    kind = scale_raw.get("kind", "identity")
    if kind == "identity":
        scale = ScaleFunction.identity((lo, hi), e)
    elif kind == "knots":
        knots = _need(scale_raw, "knots", "config.scale")
        try:
            scale = ScaleFunction([(float(x), float(s)) for x, s in knots], e)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config.scale.knots: {exc}") from None
        if not (scale.xs[0] <= lo and hi <= scale.xs[-1]):
            raise ConfigError("config.scale.knots: knots must cover the window")
    else:
        raise ConfigError(f"config.scale.kind: unknown kind {kind!r}")

    speed_raw = raw.get("speed", {"kind": "uniform", "value": 1.0})
    kind = speed_raw.get("kind", "uniform")
    atoms = [(float(x), float(mass)) for x, mass in speed_raw.get("atoms", [])]
    for x, mass in atoms:
        if not (lo < x < hi):
            raise ConfigError("config.speed.atoms: atom locations must lie inside the window")
        if mass <= 0:
            raise ConfigError("config.speed.atoms: atom masses must be positive")
    try:
        if kind == "uniform":
            speed = SpeedMeasure((), (float(speed_raw.get("value", 1.0)),), atoms)
        elif kind == "step":
            speed = SpeedMeasure(
                tuple(float(x) for x in _need(speed_raw, "breaks", "config.speed")),
                tuple(float(v) for v in _need(speed_raw, "values", "config.speed")),
                atoms,
            )
        else:
            raise ConfigError(f"config.speed.kind: unknown kind {kind!r}")
    except ValueError as exc:
        raise ConfigError(f"config.speed: {exc}") from None

    direction = _need(raw, "direction", "config")
    if direction not in ("decreasing", "increasing"):
        raise ConfigError("config.direction: expected 'decreasing' or 'increasing'")

    fam_raw = _need(raw, "family", "config")
    kind = _need(fam_raw, "kind", "config.family")
    try:
        if kind == "example26":
            family = example26_family(
                domain,
                int(_need(fam_raw, "K", "config.family")),
                [int(n) for n in _need(fam_raw, "n_list", "config.family")],
            )
        elif kind == "single_removed_interval":
            family = single_removed_interval_family(
                domain,
                float(_need(fam_raw, "center", "config.family")),
                [float(w) for w in _need(fam_raw, "widths", "config.family")],
            )
        elif kind == "explicit":
            sets = [IntervalUnion([(float(p[0]), float(p[1])) for p in s])
                    for s in _need(fam_raw, "sets", "config.family")]
            labels = fam_raw.get("labels", ())
            family = monotone_family(sets, direction, (lo, hi), labels=labels)
        else:
            raise ConfigError(f"config.family.kind: unknown kind {kind!r}")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"config.family: {exc}") from None
    if family.direction != direction:
        raise ConfigError(
            f"config.direction: declared {direction!r} but the family nests "
            f"as {family.direction!r}"
        )

    boundary_raw = raw.get("boundary", [NEUMANN, NEUMANN])
    if (len(boundary_raw) != 2
            or any(flag not in (NEUMANN, DIRICHLET) for flag in boundary_raw)):
        raise ConfigError("config.boundary: expected two flags in {'neumann','dirichlet'}")

    grid_N = int(raw.get("grid_N", DEFAULT_GRID_N))
    if grid_N < 3:
        raise ConfigError("config.grid_N: need at least 3 cells to host mandatory points")

    times = tuple(float(t) for t in raw.get("times", DEFAULT_TIMES))
    if not times or any(t <= 0 for t in times):
        raise ConfigError("config.times: need positive times")

    dictionary = raw.get("dictionary", "standard")
    if dictionary != "standard":
        raise ConfigError("config.dictionary: only the 'standard' preset is defined")

    mc = raw.get("mc")
    if mc is not None:
        if "seed" not in mc:
            raise ConfigError("config.mc.seed: seed is required for reproducible runs")
        mc = dict(mc)
        mc["seed"] = int(mc["seed"])
        mc["n_paths"] = int(mc.get("n_paths", 1000))
        mc["T"] = float(mc.get("T", 0.5))
        mc["delta_list"] = [float(d) for d in mc.get("delta_list", (0.01, 0.02, 0.05))]
        mc["rho"] = float(mc.get("rho", 0.25))
        mc["fdd_times"] = [float(t) for t in mc.get("fdd_times", (0.25, 0.5))]
        mc["n_mc_brownian"] = int(mc.get("n_mc_brownian", 2000))
        mc["modulus_paths"] = int(mc.get("modulus_paths", min(mc["n_paths"], 800)))
        if mc["n_paths"] <= 0:
            raise ConfigError("config.mc.n_paths: need at least one path")
        if any(t > mc["T"] for t in mc["fdd_times"]):
            raise ConfigError("config.mc.fdd_times: times beyond the horizon T")

    law_spec = raw.get("initial_law", {"kind": "uniform"})
    if law_spec.get("kind") not in ("uniform", "point", "step"):
        raise ConfigError("config.initial_law.kind: expected uniform | point | step")

    gates = dict(DEFAULT_GATES)
    gates.update(raw.get("gates", {}))

    return Scenario(
        domain=domain,
        scale=scale,
        speed=speed,
        base_point=float(e),
        family=family,
        direction=direction,
        boundary=(boundary_raw[0], boundary_raw[1]),
        grid_N=grid_N,
        times=times,
        dictionary=dictionary,
        mc=mc,
        initial_law_spec=law_spec,
        output_dir=raw.get("output_dir", "out"),
        gates=gates,
        raw=raw,
    )


# ---------------------------------------------------------------------------
# form building
# ---------------------------------------------------------------------------

@dataclass
class BuiltFamily:
    forms: list[DiscreteForm]
    limit_form: DiscreteForm
    subscales: list[ScaleFunction]
    limit_subscale: ScaleFunction
    labels: list[int]
    grid: Grid
    direction: str

    @property
    def smallest_scale(self) -> ScaleFunction:
        """Scale of the smallest Dirichlet space: s_inf for (D), s_1 for (U)."""
        return self.limit_subscale if self.direction == "decreasing" else self.subscales[0]


def build_family_forms(sc: Scenario) -> BuiltFamily:
    """Forms for every family member plus the limit, on one shared grid."""
    subscales = [derive_subscale(sc.scale, g, sc.base_point) for g in sc.family.sets]
    limit_sub = derive_subscale(sc.scale, sc.family.limit, sc.base_point)
    extra: set[float] = set()
    for s in subscales + [limit_sub, sc.scale]:
        extra.update(float(x) for x in s.xs)
    forms = []
    grid = None
    for s_n in subscales:
        g = build_grid(sc.domain, s_n, sc.speed, sc.grid_N, extra_points=sorted(extra))
        forms.append(assemble_form(g, sc.boundary))
        grid = g
    g_lim = build_grid(sc.domain, limit_sub, sc.speed, sc.grid_N, extra_points=sorted(extra))
    limit_form = assemble_form(g_lim, sc.boundary)
    return BuiltFamily(
        forms=forms,
        limit_form=limit_form,
        subscales=subscales,
        limit_subscale=limit_sub,
        labels=list(sc.family.labels),
        grid=limit_form.grid,
        direction=sc.direction,
    )


def build_initial_law(sc: Scenario, grid: Grid) -> InitialLaw:
    spec = sc.initial_law_spec
    if spec["kind"] == "point":
        return InitialLaw.point(float(spec.get("x0", sc.base_point)))
    if spec["kind"] == "uniform":
        g = np.ones(grid.n)
    else:
        sm = SpeedMeasure(
            tuple(float(x) for x in spec.get("breaks", ())),
            tuple(float(v) for v in spec.get("values", (1.0,))),
        )
        g = np.array([float(sm.density(x)) for x in grid.points])
    total = float(np.sum(g * grid.cell_masses))
    return InitialLaw.from_density(g / total, grid)


def hat_function(grid: Grid) -> np.ndarray:
    lo, hi = grid.window
    c = (lo + hi) / 2
    half = (hi - lo) / 2
    return np.maximum(0.0, 1.0 - np.abs(grid.points - c) / half)


# ---------------------------------------------------------------------------
# suite runners
# ---------------------------------------------------------------------------

@dataclass
class SuiteResult:
    artifacts: dict[str, str] = field(default_factory=dict)  # filename -> content
    gate_failures: list[str] = field(default_factory=list)
    numerical_failures: list[str] = field(default_factory=list)

    def merge(self, other: "SuiteResult") -> None:
        self.artifacts.update(other.artifacts)
        self.gate_failures.extend(other.gate_failures)
        self.numerical_failures.extend(other.numerical_failures)

    def check_finite(self, name: str, values) -> None:
        arr = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(arr)):
            self.numerical_failures.append(f"{name}: non-finite values")


def run_boundary_suite(sc: Scenario, built: BuiltFamily) -> SuiteResult:
    res = SuiteResult()
    ref = built.subscales[0] if sc.direction == "increasing" else built.limit_subscale
    out = {}
    for side in ("left", "right"):
        cls = classify_boundary(ref, sc.speed, sc.domain, side, sc.base_point)
        out[side] = {
            "approachable": cls.approachable,
            "test_integral": cls.test_integral if math.isfinite(cls.test_integral) else "inf",
        }
    out["H1_conservative_with_reflection"] = all(
        flag == NEUMANN for flag in sc.boundary
    ) or not (out["left"]["approachable"] or out["right"]["approachable"])
    res.artifacts["boundary_class.json"] = json.dumps(out, indent=2, sort_keys=True) + "\n"
    return res


def run_mosco_suite(sc: Scenario, built: BuiltFamily) -> SuiteResult:
    res = SuiteResult()
    dictionary = standard_dictionary(built.grid.points, built.grid.window)
    report = mosco_certificate(
        built.forms, built.limit_form, dictionary, sc.times, labels=built.labels
    )
    res.artifacts["mosco_report.csv"] = report.to_csv()
    res.check_finite("mosco_report", report.distances)
    if not report.monotone_ok:
        res.gate_failures.append("mosco: distance slices not monotone")
    if report.final_max > sc.gates["mosco_final_max"]:
        res.gate_failures.append(
            f"mosco: final_max {report.final_max:.3g} > {sc.gates['mosco_final_max']:.3g}"
        )
    if sc.direction == "decreasing":
        u = hat_function(built.grid)
        t = 0.1
        d_initial = freeze_check(built.forms, sc.direction, u, t)
        d_limit = wide_sense_limit_distances(built.forms, built.limit_form, u, t)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "t", "distance_to_initial", "distance_to_limit"])
        for n, d0, d1 in zip(built.labels, d_initial, d_limit):
            w.writerow([n, f"{t:.12g}", f"{d0:.12g}", f"{d1:.12g}"])
        res.artifacts["freeze_check.csv"] = buf.getvalue()
        res.check_finite("freeze_check", d_initial)
        res.check_finite("freeze_check", d_limit)
        # Gate on the wide-sense limit distances: that is the sequence the
        # Mosco theorem controls (see decisions ledger for why the raw
        # distance-to-initial sequence cannot decrease).
        dec = all(d_limit[i + 1] < d_limit[i] + 1e-12 for i in range(len(d_limit) - 1))
        frac_ok = d_limit[-1] <= sc.gates["freeze_final_fraction"] * max(d_limit[0], 1e-300)
        if not (dec and frac_ok):
            res.gate_failures.append("freeze: wide-sense limit distances not collapsing")
    return res


def _snapshot_ensemble(form: DiscreteForm, law: InitialLaw, T: float,
                       times: Sequence[float], n_paths: int, seed: int,
                       form_id: str) -> "MarginalSamples":
    snaps = ensemble_snapshots(form, law, T, times, n_paths, seed)
    return MarginalSamples(
        times=tuple(float(t) for t in sorted(times)),
        states=snaps,
        positions=form.positions.copy(),
        horizon=T,
        form_id=form_id,
    )


@dataclass(frozen=True)
class MarginalSamples:
    """Snapshot-backed stand-in for a PathEnsemble in the fdd suite."""

    times: tuple[float, ...]
    states: np.ndarray  # (n_paths, n_times)
    positions: np.ndarray
    horizon: float
    form_id: str

    def values_at(self, t: float) -> np.ndarray:
        j = self.times.index(float(t))
        return self.positions[self.states[:, j]]

    @property
    def paths(self):
        return [_SnapshotPath(self.times, row) for row in self.states]

    def __len__(self):
        return self.states.shape[0]


class _SnapshotPath:
    __slots__ = ("_times", "_states")

    def __init__(self, times, states):
        self._times = times
        self._states = states

    def state_at(self, t: float) -> int:
        return int(self._states[self._times.index(float(t))])


def run_weakconv_suite(sc: Scenario, built: BuiltFamily) -> SuiteResult:
    res = SuiteResult()
    mc = sc.mc
    grid = built.grid
    law = build_initial_law(sc, grid)
    fdd_times = mc["fdd_times"]
    seed = mc["seed"]

    ensembles = [
        _snapshot_ensemble(f, law, mc["T"], fdd_times, mc["n_paths"], seed + i + 1,
                           f"family_{n}")
        for i, (f, n) in enumerate(zip(built.forms, built.labels))
    ]
    limit_ens = _snapshot_ensemble(built.limit_form, law, mc["T"], fdd_times,
                                   mc["n_paths"], seed, "limit")
    f_single = np.sin(np.pi * (grid.points - grid.window[0])
                      / (grid.window[1] - grid.window[0]))
    oracle = None
    if law.kind == "density":
        oracle = FddOracle(
            evolvers=[SemigroupEvolver(f) for f in built.forms],
            laws=[law] * len(built.forms),
            f_single=f_single,
        )
    report = fdd_convergence_suite(ensembles, limit_ens, fdd_times,
                                   labels=built.labels, semigroup_oracle=oracle)
    res.check_finite("fdd_report", report.ks_stats)

    # initial-law rows
    extra_rows = []
    if law.kind == "density":
        h2 = h2_check([law] * len(built.forms), law, grid.cell_masses)
        for n, g1, g2 in zip(built.labels, h2.l1_gaps, h2.l2_gaps):
            extra_rows.append([n, "h2_l1", "", "", f"{g1:.12g}", "", "true"])
            extra_rows.append([n, "h2_l2", "", "", f"{g2:.12g}", "", "true"])
    a_max = max(abs(grid.window[0]), abs(grid.window[1]))
    probs = law.cell_probabilities(built.limit_form)
    inside = float(np.sum(probs[np.abs(built.limit_form.positions) <= a_max]))
    extra_rows.append(["all", "initial_tightness", f"{a_max:.12g}", "",
                       f"{inside:.12g}", "1", str(inside >= 1 - 1e-9).lower()])

    csv_text = report.to_csv()
    buf = io.StringIO()
    buf.write(csv_text)
    w = csv.writer(buf, lineterminator="\n")
    for row in extra_rows:
        w.writerow(row)
    res.artifacts["fdd_report.csv"] = buf.getvalue()

    slack = sc.gates["fdd_ks_slack"]
    final_ok = np.all(report.ks_stats[-1] <= slack * report.thresholds[-1])
    if not final_ok:
        res.gate_failures.append("fdd: final-n KS above slacked critical value")
    if not all(row[-1] for row in report.cross_rows):
        res.gate_failures.append("fdd: Monte-Carlo vs semigroup cross-oracle outside 3 SE")

    # modulus / tightness bound: empirical modulus of s0-mapped paths against
    # twice the Brownian reference plus three binomial standard errors
    s0 = built.smallest_scale
    C = float(density_ratio(s0, sc.speed, grid.window))
    rows = []
    ok_all = True
    bound_cache: dict[float, float] = {}
    for i, (form, n) in enumerate(zip(built.forms, built.labels)):
        ens = simulate_ensemble(form, law, mc["T"], mc["modulus_paths"], seed + 1000 + i,
                                form_id=f"family_{n}")
        mapped = map_ensemble_positions(ens, s0)
        for delta in mc["delta_list"]:
            emp = modulus_statistic(mapped, mc["T"], delta, mc["rho"])
            if delta not in bound_cache:
                bound_cache[delta] = brownian_modulus_bound(
                    C, mc["T"], delta, mc["rho"], n_mc=mc["n_mc_brownian"],
                    seed=seed + 7777,
                )
            bound = bound_cache[delta]
            se = math.sqrt(max(emp * (1 - emp), 0.25 / mc["modulus_paths"])
                           / mc["modulus_paths"])
            limit_val = 2 * bound + 3 * se
            ok = emp <= limit_val
            ok_all &= ok
            rows.append([n, f"{delta:.12g}", f"{mc['rho']:.12g}", f"{emp:.12g}",
                         f"{bound:.12g}", f"{limit_val:.12g}", str(ok).lower()])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "delta", "rho", "modulus_prob", "brownian_bound",
                "dominating_value", "pass"])
    for row in rows:
        w.writerow(row)
    w.writerow(["summary", "C_sup_phi", f"{C:.12g}", "", "", "", str(ok_all).lower()])
    res.artifacts["modulus_report.csv"] = buf.getvalue()
    if not ok_all:
        res.gate_failures.append("modulus: empirical modulus above the dominating bound")
    return res


def run_paths_suite(sc: Scenario, built: BuiltFamily) -> SuiteResult:
    res = SuiteResult()
    mc = sc.mc
    grid = built.grid
    law = build_initial_law(sc, grid)
    s0 = built.smallest_scale
    rows = []
    ok_all = True
    for i, (form, n) in enumerate(zip(built.forms, built.labels)):
        f_vals = np.array([float(s0(x)) for x in form.positions])
        phi_vals = phi_cell_values(form, s0)
        qv = ensemble_quadratic_variation(
            form, law, mc["T"], f_vals, phi_vals, mc["n_paths"], mc["seed"] + i + 1
        )
        rel = np.abs(qv[:, 0] - qv[:, 1]) / np.maximum(qv[:, 1], 1e-12)
        mean_rel = float(np.mean(rel))
        ok = mean_rel <= sc.gates["qv_mean_rel"]
        rows.append([n, f"{float(np.mean(qv[:, 0])):.12g}",
                     f"{float(np.mean(qv[:, 1])):.12g}", f"{mean_rel:.12g}",
                     str(bool(ok)).lower()])
        res.check_finite("qv_report", qv)
        ok_all &= bool(ok)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "mean_realized_qv", "mean_phi_integral", "mean_rel_error", "pass"])
    for row in rows:
        w.writerow(row)
    res.artifacts["qv_report.csv"] = buf.getvalue()
    if not ok_all:
        res.gate_failures.append("qv: realized quadratic variation off the phi integral")
    return res


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def run_scenario(sc: Scenario, out_dir: str | None = None,
                 seed_override: int | None = None,
                 suites: Sequence[str] = ("boundary", "mosco", "paths", "weakconv"),
                 ) -> int:
    """Run the requested suites, write artifacts, return the exit code."""
    if seed_override is not None and sc.mc is not None:
        sc.mc["seed"] = int(seed_override)
    out = FsPath(out_dir or os.environ.get("DIFFORM_OUTPUT_DIR", sc.output_dir))
    result = SuiteResult()
    built = build_family_forms(sc)
    if "boundary" in suites:
        result.merge(run_boundary_suite(sc, built))
    if "mosco" in suites:
        result.merge(run_mosco_suite(sc, built))
    if sc.mc is not None:
        if "paths" in suites:
            result.merge(run_paths_suite(sc, built))
        if "weakconv" in suites:
            result.merge(run_weakconv_suite(sc, built))

    out.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for name, content in sorted(result.artifacts.items()):
        (out / name).write_text(content)
        hashes[name] = hashlib.sha256(content.encode()).hexdigest()
    manifest = {
        "config": sc.raw,
        "seed": sc.mc["seed"] if sc.mc else None,
        "artifacts": hashes,
        "gate_failures": result.gate_failures,
        "numerical_failures": result.numerical_failures,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    if result.numerical_failures:
        return EXIT_NUMERICAL
    if result.gate_failures:
        return EXIT_STAT_FAIL
    return EXIT_OK
