import numpy as np
import pytest
from fractions import Fraction
from hypothesis import given, settings, strategies as st

from difform import (IntervalUnion, ScaleFunction, SpeedMeasure, density_ratio,
                     derive_subscale, dyadic_rationals, example26_family,
                     is_characteristic, monotone_family, open_domain,
                     pointwise_scale_limit, single_removed_interval_family,
                     stieltjes_measure)

DOM = open_domain(0.0, 1.0)


# -- stieltjes measure -------------------------------------------------------

def test_stieltjes_identity_scale_is_length():
    s = ScaleFunction.identity((0.0, 1.0))
    assert stieltjes_measure(s, IntervalUnion.single(0.0, 0.3)) == pytest.approx(0.3)


def test_stieltjes_flat_stretch_has_no_mass():
    s = ScaleFunction([(0.0, 0.0), (0.2, 0.2), (0.4, 0.2), (1.0, 0.8)], 0.0)
    assert stieltjes_measure(s, IntervalUnion.single(0.2, 0.4)) == 0


def test_example26_sets_have_small_stieltjes_mass():
    # identity scale: ds-mass is Lebesgue length, at most 1/n
    s = ScaleFunction.identity((0.0, 1.0))
    fam = example26_family(DOM, K=64, n_list=[1, 2, 4, 8])
    for n, g in zip(fam.labels, fam.sets):
        assert stieltjes_measure(s, g) <= Fraction(1, n)


@given(st.lists(st.tuples(st.integers(0, 100), st.integers(0, 100)), max_size=5),
       st.lists(st.tuples(st.integers(0, 100), st.integers(0, 100)), max_size=5))
@settings(max_examples=150, deadline=None)
def test_stieltjes_modularity_exact(ps, qs):
    # exact rational arithmetic: m(G u H) + m(G n H) == m(G) + m(H)
    to_union = lambda pairs: IntervalUnion(
        [(Fraction(min(p), 100), Fraction(max(p), 100)) for p in pairs]
    )
    g, h = to_union(ps), to_union(qs)
    s = ScaleFunction(
        [(Fraction(0), Fraction(0)), (Fraction(1, 2), Fraction(1, 3)), (Fraction(1), Fraction(1))],
        Fraction(0),
    )
    lhs = stieltjes_measure(s, g.union(h)) + stieltjes_measure(s, g.intersect(h))
    rhs = stieltjes_measure(s, g) + stieltjes_measure(s, h)
    assert lhs == rhs


# -- subscale derivation -----------------------------------------------------

def test_subscale_full_window_recovers_shifted_scale():
    s = ScaleFunction([(0.0, 0.0), (0.5, 0.2), (1.0, 1.0)], 0.0)
    sub = derive_subscale(s, IntervalUnion.single(0.0, 1.0), 0.5)
    for x in np.linspace(0, 1, 37):
        assert float(sub(x)) == pytest.approx(float(s(x)) - float(s(0.5)), abs=1e-14)


def test_subscale_closed_form_and_quadrature_cross_check():
    s = ScaleFunction.identity((-1.0, 1.0), 0.0)
    g = IntervalUnion([(-1.0, 0.2), (0.4, 1.0)])  # window minus [0.2, 0.4]
    sub = derive_subscale(s, g, 0.0)
    assert float(sub(0.5)) == pytest.approx(0.3, abs=1e-14)
    # numerical quadrature of the indicator as an independent oracle
    xs = np.linspace(0.0, 0.5, 200_001)
    ind = np.zeros(len(xs))
    for lo, hi in g.intervals:
        ind[(xs > float(lo)) & (xs < float(hi))] = 1.0
    assert float(sub(0.5)) == pytest.approx(np.trapezoid(ind, xs), abs=1e-4)


def test_subscale_strictness_flag():
    s = ScaleFunction.identity((0.0, 1.0))
    full = derive_subscale(s, IntervalUnion.single(0.0, 1.0), 0.5)
    assert full.strictly_increasing
    gap = derive_subscale(s, IntervalUnion([(0.0, 0.4), (0.6, 1.0)]), 0.5)
    assert not gap.strictly_increasing


def test_subscale_partition_identity():
    s = ScaleFunction([(0.0, 0.0), (0.25, 0.5), (1.0, 1.5)], 0.0)
    g = IntervalUnion([(0.1, 0.3), (0.5, 0.9)])
    sub_g = derive_subscale(s, g, 0.5)
    sub_c = derive_subscale(s, g.complement((0.0, 1.0)), 0.5)
    for x in np.linspace(0, 1, 41):
        lhs = float(sub_g(x)) + float(sub_c(x))
        assert lhs == pytest.approx(float(s(x)) - float(s(0.5)), abs=1e-12)


# -- families ----------------------------------------------------------------

def test_dyadic_enumeration_order():
    r = dyadic_rationals((0.0, 1.0), 7)
    assert r == [Fraction(1, 2), Fraction(1, 4), Fraction(3, 4),
                 Fraction(1, 8), Fraction(3, 8), Fraction(5, 8), Fraction(7, 8)]


def test_example26_first_radius_quarter():
    fam = example26_family(DOM, K=1, n_list=[1])
    (lo, hi), = fam.sets[0].intervals
    assert hi - lo == Fraction(1, 2)  # radius 1/(2^2 * 1) = 1/4 on each side
    assert lo == Fraction(1, 4) and hi == Fraction(3, 4)


def test_example26_nesting_and_single_member_limit():
    fam = example26_family(DOM, K=16, n_list=[1, 3, 9])
    assert fam.direction == "decreasing"
    assert fam.sets[2].is_subset(fam.sets[1])
    assert fam.sets[1].is_subset(fam.sets[0])
    solo = example26_family(DOM, K=4, n_list=[1])
    assert solo.limit == solo.sets[0]


def test_family_nesting_validation():
    with pytest.raises(ValueError, match="index 1"):
        monotone_family(
            [IntervalUnion.single(0.1, 0.9), IntervalUnion.single(0.2, 0.95)],
            "decreasing",
            (0.0, 1.0),
        )


def test_single_removed_interval_directions():
    inc = single_removed_interval_family(DOM, 0.5, [0.1, 0.05, 0.025])
    assert inc.direction == "increasing"
    dec = single_removed_interval_family(DOM, 0.5, [0.025, 0.05, 0.1])
    assert dec.direction == "decreasing"
    with pytest.raises(ValueError):
        single_removed_interval_family(DOM, 0.5, [0.1, 0.2, 0.05])


def test_pointwise_scale_limit_closed_form():
    s = ScaleFunction.identity((Fraction(-1), Fraction(1)), Fraction(0))
    widths = [Fraction(1, 10) / n for n in (1, 2, 4, 8)]
    sets = [IntervalUnion([(Fraction(-1), Fraction(1, 2)),
                           (Fraction(1, 2) + w, Fraction(1))]) for w in widths]
    fam = monotone_family(sets, "increasing", (Fraction(-1), Fraction(1)),
                          labels=(1, 2, 4, 8))
    values, limit = pointwise_scale_limit(fam, s, Fraction(0), Fraction(8, 10))
    for v, n in zip(values, (1, 2, 4, 8)):
        assert v == Fraction(8, 10) - Fraction(1, 10) / n
    # the finite family's limit is its union, i.e. the widest member
    assert limit == Fraction(8, 10) - Fraction(1, 80)
    assert limit == values[-1]
    assert all(values[i] <= values[i + 1] for i in range(len(values) - 1))


def test_pointwise_scale_limit_stationary_family():
    s = ScaleFunction.identity((0.0, 1.0))
    g = IntervalUnion.single(0.0, 1.0)
    fam = monotone_family([g, g, g], "increasing", (0.0, 1.0))
    values, limit = pointwise_scale_limit(fam, s, 0.5, 0.9)
    assert all(v == limit for v in values)


def test_pointwise_scale_limit_rejects_decreasing():
    s = ScaleFunction.identity((0.0, 1.0))
    fam = example26_family(DOM, K=2, n_list=[1, 2])
    with pytest.raises(ValueError):
        pointwise_scale_limit(fam, s, 0.5, 0.9)


# -- characteristic check ----------------------------------------------------

def test_is_characteristic_full_window():
    s = ScaleFunction.identity((0.0, 1.0))
    rep = is_characteristic(IntervalUnion.single(0.0, 1.0), s, 0.05, window=(0.0, 1.0))
    assert rep.ok


def test_is_characteristic_detects_gap():
    s = ScaleFunction.identity((0.0, 1.0))
    rep = is_characteristic(IntervalUnion.single(0.0, 0.5), s, 0.1, window=(0.0, 1.0))
    assert not rep.ok
    assert rep.worst_mass == 0
    assert rep.worst_cell[0] >= 0.5


def test_is_characteristic_example26_deep_dyadics():
    # every width-1/32 cell contains a depth<=6 dyadic whose interval has
    # positive (exact) ds-mass, including radii near 2^-65
    s = ScaleFunction.identity((Fraction(0), Fraction(1)), Fraction(1, 2))
    fam = example26_family(DOM, K=64, n_list=[1])
    rep = is_characteristic(fam.sets[0], s, Fraction(1, 32), window=(Fraction(0), Fraction(1)))
    assert rep.ok
    assert rep.worst_mass > 0


# -- speed measures ----------------------------------------------------------

def test_speed_measure_mass_with_atoms():
    m = SpeedMeasure(breaks=(0.5,), values=(1.0, 2.0), atoms=((0.25, 3.0),))
    assert m.mass(0.0, 1.0) == pytest.approx(0.5 * 1 + 0.5 * 2 + 3.0)
    # open interval: atom on the boundary is excluded
    assert m.mass(0.25, 0.5) == pytest.approx(0.25)
    assert m.mass(0.2, 0.3) == pytest.approx(0.1 * 1 + 3.0)


def test_speed_measure_validation():
    with pytest.raises(ValueError):
        SpeedMeasure(breaks=(0.5,), values=(1.0,))
    with pytest.raises(ValueError):
        SpeedMeasure(values=(-1.0,))
    with pytest.raises(ValueError):
        SpeedMeasure(atoms=((0.5, 0.0),))


def test_density_ratio_excludes_atoms():
    s = ScaleFunction.identity((0.0, 1.0))
    m = SpeedMeasure(breaks=(0.5,), values=(1.0, 4.0), atoms=((0.3, 100.0),))
    assert density_ratio(s, m, (0.0, 1.0)) == pytest.approx(1.0)
    m2 = SpeedMeasure(breaks=(0.5,), values=(0.25, 4.0))
    assert density_ratio(s, m2, (0.0, 1.0)) == pytest.approx(4.0)
