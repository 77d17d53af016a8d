import math

import numpy as np
import pytest

from difform import (IntervalUnion, ScaleFunction, SmoothBump, SpeedMeasure,
                     assemble_form, build_grid, core_approximation_energy,
                     derive_subscale, example26_family, freeze_check,
                     mosco_certificate, monotone_family, open_domain,
                     single_removed_interval_family, standard_dictionary,
                     wide_sense_limit_distances)
from difform.semigroup import SemigroupEvolver, l2m_distance

DOM = open_domain(0.0, 1.0)
UNIT = SpeedMeasure.uniform(1.0)
IDENT = ScaleFunction.identity((0.0, 1.0))


def family_forms(family, N=60, boundary=("neumann", "neumann")):
    e = 0.5
    subs = [derive_subscale(IDENT, g, e) for g in family.sets]
    sub_lim = derive_subscale(IDENT, family.limit, e)
    extra = sorted({float(x) for s in subs + [sub_lim] for x in s.xs})
    forms = [assemble_form(build_grid(DOM, s, UNIT, N, extra_points=extra), boundary)
             for s in subs]
    limit = assemble_form(build_grid(DOM, sub_lim, UNIT, N, extra_points=extra), boundary)
    return forms, limit


def test_certificate_trivial_family_of_limits():
    fam = monotone_family([IntervalUnion.single(0.0, 1.0)] * 3, "decreasing", (0.0, 1.0))
    forms, limit = family_forms(fam, N=40)
    dictionary = standard_dictionary(limit.grid.points, (0.0, 1.0))
    rep = mosco_certificate(forms, limit, dictionary, [0.05, 0.5])
    assert rep.monotone_ok
    assert rep.final_max <= 1e-8
    assert np.all(rep.distances <= 1e-8)


def test_certificate_three_state_forms_match_dense_exponential():
    # hand-set conductances via a kinked scale whose knot sits on a cell center
    s = ScaleFunction([(0.0, 0.0), (0.5, 0.2), (1.0, 1.4)], 0.5)
    g = build_grid(DOM, s, UNIT, 3)
    form = assemble_form(g)
    assert form.n_states == 3
    dictionary = [("e0", np.array([1.0, 0.0, 0.0])), ("mix", np.array([0.3, -1.0, 2.0]))]
    rep = mosco_certificate([form], form, dictionary, [0.1, 1.0])
    assert rep.final_max <= 1e-12
    # independent dense-exponential check of one semigroup value
    L = np.diag(form.diag) + np.diag(form.sup[:-1], 1) + np.diag(form.sub[1:], -1)
    from scipy.linalg import expm
    ev = SemigroupEvolver(form)
    f = np.array([0.3, -1.0, 2.0])
    assert np.max(np.abs(ev.evolve(f, 0.7) - expm(0.7 * L) @ f)) < 1e-10


def test_certificate_requires_common_grid():
    fam = example26_family(DOM, K=4, n_list=[1, 2])
    forms, limit = family_forms(fam, N=24)
    other = assemble_form(build_grid(DOM, IDENT, UNIT, 25))
    dictionary = [("one", np.ones(limit.grid.n))]
    with pytest.raises(ValueError, match="incompatible grids"):
        mosco_certificate(forms, other, dictionary, [0.1])


def test_certificate_increasing_single_removed_family():
    fam = single_removed_interval_family(DOM, 0.5, [0.1 / n for n in (1, 2, 4, 8)])
    forms, limit = family_forms(fam, N=80)
    dictionary = standard_dictionary(limit.grid.points, (0.0, 1.0))
    rep = mosco_certificate(forms, limit, dictionary, [0.05, 0.1, 0.5],
                            labels=(1, 2, 4, 8))
    assert rep.monotone_ok
    assert rep.final_max <= 1e-2


def test_certificate_decreasing_family_to_sticky_blob():
    fam = single_removed_interval_family(DOM, 0.5, [0.05, 0.1, 0.15, 0.2])
    assert fam.direction == "decreasing"
    forms, limit = family_forms(fam, N=80)
    dictionary = standard_dictionary(limit.grid.points, (0.0, 1.0))
    rep = mosco_certificate(forms, limit, dictionary, [0.05, 0.1, 0.5])
    assert rep.monotone_ok


def test_freeze_check_trivial_cases():
    fam = example26_family(DOM, K=8, n_list=[1, 2, 4])
    forms, _ = family_forms(fam, N=50)
    zero = np.zeros(forms[0].grid.n)
    assert freeze_check(forms, "decreasing", zero, 0.1) == [0.0, 0.0, 0.0]
    const = np.full(forms[0].grid.n, 2.5)
    dists = freeze_check(forms, "decreasing", const, 0.1)
    assert max(dists) <= 1e-9  # constants invariant under Neumann semigroups
    with pytest.raises(ValueError):
        freeze_check(forms, "increasing", zero, 0.1)


def test_wide_sense_limit_distances_decrease_for_example26():
    # the sequence the decreasing-case Mosco theorem actually controls
    fam = example26_family(DOM, K=16, n_list=[1, 2, 4, 8, 16])
    forms, limit = family_forms(fam, N=100)
    grid = limit.grid
    u = np.maximum(0.0, 1.0 - np.abs(grid.points - 0.5) / 0.5)
    d = wide_sense_limit_distances(forms, limit, u, 0.1)
    assert all(d[i + 1] < d[i] for i in range(len(d) - 1))
    assert d[-1] <= 0.2 * d[0]


def test_freeze_distances_to_initial_do_not_vanish():
    # companion fact: distances to the *initial* function converge to
    # ||u - mean(u)||, not to zero (see decisions ledger)
    fam = example26_family(DOM, K=16, n_list=[1, 2, 4, 8, 16])
    forms, limit = family_forms(fam, N=100)
    grid = limit.grid
    u = np.maximum(0.0, 1.0 - np.abs(grid.points - 0.5) / 0.5)
    d = freeze_check(forms, "decreasing", u, 0.1)
    ubar = float(np.sum(grid.cell_masses * u) / np.sum(grid.cell_masses))
    target = math.sqrt(float(np.sum(grid.cell_masses * (u - ubar) ** 2)))
    assert d[-1] == pytest.approx(target, rel=0.05)
    assert d[-1] > 0.5 * d[0]


# -- core approximation energies ----------------------------------------------

def bump_inside(s_inf):
    lo, hi = s_inf.image()
    c = (float(lo) + float(hi)) / 2
    h = (float(hi) - float(lo)) / 4
    return SmoothBump(c, h)


def test_core_energy_zero_when_scales_agree():
    g = IntervalUnion([(0.0, 0.5), (0.6, 1.0)])
    s_n = derive_subscale(IDENT, g, 0.5)
    out = core_approximation_energy(bump_inside(s_n), s_n, s_n, IDENT, UNIT)
    assert out.l2_gap == pytest.approx(0.0, abs=1e-15)
    assert out.phi_energy == pytest.approx(0.0, abs=1e-15)
    assert out.psi_energy == pytest.approx(0.0, abs=1e-15)


def test_core_energy_phi_closed_form_single_interval():
    # family member removes [0.5, 0.5 + w]; limit removes nothing (ds-null point)
    w = 0.05
    g_n = IntervalUnion([(0.0, 0.5), (0.5 + w, 1.0)])
    g = IntervalUnion.single(0.0, 1.0)
    s_n = derive_subscale(IDENT, g_n, 0.25)
    s_inf = derive_subscale(IDENT, g, 0.25)
    phi = SmoothBump(0.2, 0.15)
    out = core_approximation_energy(phi, s_n, s_inf, IDENT, UNIT)
    # Phi(n) = integral over the removed interval of phi'(s_n(x))^2 dx;
    # s_n is frozen at 0.25 there, so the integrand is constant
    expected = w * float(phi.derivative(0.25)) ** 2
    assert out.phi_energy == pytest.approx(expected, abs=1e-6)
    # paper-style sup bound
    assert out.phi_energy <= phi.derivative_sup() ** 2 * w + 1e-12


def test_core_energy_support_condition():
    g_n = IntervalUnion([(0.0, 0.4), (0.9, 1.0)])
    s_n = derive_subscale(IDENT, g_n, 0.2)
    s_inf = derive_subscale(IDENT, IntervalUnion.single(0.0, 1.0), 0.2)
    wide = SmoothBump(0.0, 10.0)
    with pytest.raises(ValueError, match="support"):
        core_approximation_energy(wide, s_n, s_inf, IDENT, UNIT)


def test_core_energy_vanishes_along_increasing_family():
    widths = [0.1 / n for n in (1, 2, 4, 8, 16, 32)]
    fam = single_removed_interval_family(DOM, 0.5, widths)
    e = 0.25
    subs = [derive_subscale(IDENT, g, e) for g in fam.sets]
    s_inf = derive_subscale(IDENT, fam.limit, e)
    phi = SmoothBump(0.0, 0.2)
    l2s, phis, psis = [], [], []
    for s_n in subs:
        out = core_approximation_energy(phi, s_n, s_inf, IDENT, UNIT)
        l2s.append(out.l2_gap)
        phis.append(out.phi_energy)
        psis.append(out.psi_energy)
    for seq in (l2s, phis, psis):
        assert all(seq[i + 1] <= seq[i] + 1e-15 for i in range(len(seq) - 1))
        assert seq[-1] <= 0.05 * max(seq[0], 1e-30)
