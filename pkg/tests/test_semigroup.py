import math

import numpy as np
import pytest
from scipy.linalg import expm

from difform import (ScaleFunction, SpeedMeasure, assemble_form, build_grid,
                     l2m_distance, l2m_norm, open_domain)
from difform.semigroup import SemigroupEvolver


UNIT = SpeedMeasure.uniform(1.0)


def make_form(N=50, window=(0.0, 1.0), boundary=("neumann", "neumann")):
    dom = open_domain(*window)
    s = ScaleFunction.identity(window)
    return assemble_form(build_grid(dom, s, UNIT, N), boundary)


def test_t0_is_identity():
    form = make_form(N=20)
    ev = SemigroupEvolver(form)
    f = np.sin(form.positions * 5)
    assert np.array_equal(ev.evolve(f, 0.0), f)
    with pytest.raises(ValueError):
        ev.evolve(f, -0.1)


def test_heat_semigroup_dirichlet_sine_oracle():
    # generator (1/2) d2/dx2 on (0, pi) with Dirichlet walls:
    # T_1 sin = exp(-1/2) sin
    form = make_form(N=400, window=(0.0, math.pi), boundary=("dirichlet", "dirichlet"))
    ev = SemigroupEvolver(form, scheme="spectral")
    f = np.sin(form.positions)
    got = ev.evolve(f, 1.0)
    expected = math.exp(-0.5) * f
    assert np.max(np.abs(got - expected)) <= 5e-3


def test_heat_semigroup_crank_nicolson_matches_oracle_too():
    form = make_form(N=400, window=(0.0, math.pi), boundary=("dirichlet", "dirichlet"))
    ev = SemigroupEvolver(form, scheme="crank_nicolson")
    f = np.sin(form.positions)
    got = ev.evolve(f, 1.0)
    assert np.max(np.abs(got - math.exp(-0.5) * f)) <= 5e-3


def test_neumann_mass_conservation_per_step():
    form = make_form(N=60)
    ev = SemigroupEvolver(form, scheme="crank_nicolson")
    rng = np.random.default_rng(0)
    f = rng.normal(size=form.n_states)
    total0 = float(np.sum(form.masses * f))
    g = ev.evolve(f, 0.001)  # one CN step
    assert abs(float(np.sum(form.masses * g)) - total0) <= 1e-10 * max(1.0, abs(total0))


def test_l2m_distance_cases():
    masses = np.ones(4)
    u = np.zeros(4)
    v = np.zeros(4)
    assert l2m_distance(masses, u, v) == 0.0
    v = np.array([0.0, 1.0, 0.0, 0.0])
    assert l2m_distance(masses, u, v) == 1.0
    assert l2m_distance(np.array([1.0, 4.0]), np.array([1.0, 1.0]),
                        np.array([0.0, 0.0])) == pytest.approx(math.sqrt(5))
    with pytest.raises(ValueError):
        l2m_distance(masses, u, np.zeros(3))


def test_exact_small_matches_hand_expm():
    form = make_form(N=12)  # 12 states -> exact_small under auto
    ev = SemigroupEvolver(form, scheme="auto")
    assert ev.scheme == "exact_small"
    L = np.zeros((form.n_states, form.n_states))
    idx = np.arange(form.n_states)
    L[idx, idx] = form.diag
    L[idx[:-1], idx[:-1] + 1] = form.sup[:-1]
    L[idx[1:], idx[1:] - 1] = form.sub[1:]
    f = np.cos(form.positions * 7)
    for t in (0.05, 0.7):
        assert np.max(np.abs(ev.evolve(f, t) - expm(t * L) @ f)) < 1e-12


def test_spectral_matches_exact_small():
    form = make_form(N=30)
    f = np.sin(form.positions * 3) + 0.5
    a = SemigroupEvolver(form, scheme="exact_small" if form.n_states <= 64 else "spectral")
    b = SemigroupEvolver(form, scheme="spectral")
    for t in (0.01, 0.3, 2.0):
        assert np.max(np.abs(a.evolve(f, t) - b.evolve(f, t))) < 1e-11


def test_contraction_and_positivity():
    form = make_form(N=80)
    ev = SemigroupEvolver(form, scheme="spectral")
    rng = np.random.default_rng(5)
    for _ in range(20):
        f = rng.normal(size=form.n_states)
        g = ev.evolve(f, 0.3)
        assert l2m_norm(form.masses, g) <= l2m_norm(form.masses, f) + 1e-12
        fp = np.abs(f)
        gp = ev.evolve(fp, 0.3)
        assert gp.min() >= -1e-12


def test_semigroup_property_crank_nicolson():
    # t = 0.05 forces dt = 5e-4 while t = 0.1 uses 1e-3: composed evolutions
    # must agree within the scheme tolerance on smooth data
    form = make_form(N=100, window=(0.0, math.pi), boundary=("dirichlet", "dirichlet"))
    ev = SemigroupEvolver(form, scheme="crank_nicolson")
    f = np.sin(form.positions)
    lhs = ev.evolve(f, 0.1)
    rhs = ev.evolve(ev.evolve(f, 0.05), 0.05)
    assert l2m_distance(form.masses, lhs, rhs) <= 1e-6


def test_evolve_batch_columns():
    form = make_form(N=25)
    ev = SemigroupEvolver(form, scheme="spectral")
    rng = np.random.default_rng(11)
    batch = rng.normal(size=(form.n_states, 7))
    together = ev.evolve(batch, 0.2)
    for j in range(7):
        single = ev.evolve(batch[:, j], 0.2)
        assert np.allclose(together[:, j], single, atol=1e-13)


def test_stiff_merged_form_spectral_vs_expm():
    # a sticky blob with a moderately stiff neighbor edge: spectral still
    # matches the dense exponential
    s = ScaleFunction([(0.0, 0.0), (0.45, 0.45), (0.55, 0.45), (1.0, 0.9)], 0.5)
    dom = open_domain(0.0, 1.0)
    form = assemble_form(build_grid(dom, s, UNIT, 40))
    ev_s = SemigroupEvolver(form, scheme="spectral")
    ev_e = SemigroupEvolver(form, scheme="exact_small")
    f = np.where(form.positions < 0.5, 1.0, -1.0)
    if form.n_states <= 64:
        for t in (0.05, 0.5):
            assert np.max(np.abs(ev_s.evolve(f, t) - ev_e.evolve(f, t))) < 1e-10
