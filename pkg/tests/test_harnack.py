import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stableharnack.errors import Inconclusive, PreconditionError
from stableharnack.harnack import (ExteriorFunction, HarnackParams, HoelderIteration,
                                   annulus_tail_decay, ball_lattice, build_exit_bank, bump_mass,
                                   estimate_hoelder_exponent, exterior_mass, harmonic_extend,
                                   hoelder_constants, nested_lattice, tail_term,
                                   verify_weak_harnack, write_rows_csv)
from stableharnack.model import Ball, levy_density
from stableharnack.simulate import isotropic_exit_radius_cdf

ORIGIN = (0.0, 0.0)


def polar_integral(f, center, r_lo, r_hi, n_r=4000, n_a=1024):
    """int_{r_lo < |y - center| < r_hi} f(y) dy on a log-spaced midpoint grid."""
    edges = np.geomspace(r_lo, r_hi, n_r + 1)
    rho = np.sqrt(edges[1:] * edges[:-1])
    dr = np.diff(edges)
    th = 2 * np.pi * (np.arange(n_a) + 0.5) / n_a
    total = 0.0
    for ri, dri in zip(rho, dr):
        y = np.asarray(center) + ri * np.column_stack([np.cos(th), np.sin(th)])
        total += f(y).sum() * ri * dri * 2 * np.pi / n_a
    return total


@pytest.fixture(scope="module")
def params():
    return HarnackParams(ORIGIN)


@pytest.fixture(scope="module")
def small_bank(cauchy, params):
    nodes = np.array([[0.0, 0.0], [0.3, 0.0], [0.0, -0.6]])
    return build_exit_bank(cauchy, params.ball, nodes, n_paths=4000, seed=11)


def test_params_validation():
    p = HarnackParams(ORIGIN)
    assert p.to_dict()["c0"] == pytest.approx(p.r / (2 * p.theta))
    for bad in (dict(lambda_=3.0), dict(sigma_ratio=4.5), dict(sigma_ratio=1.0), dict(a=0.7),
                dict(r=2.0), dict(theta=1.0)):
        with pytest.raises(PreconditionError):
            HarnackParams(ORIGIN, **bad)


def test_exterior_function_algebra():
    g = ExteriorFunction.shell(ORIGIN, 1.0, 2.0, 3.0) + ExteriorFunction.bump((4.0, 0.0), 0.5, -1.0)
    y = np.array([[1.5, 0.0], [4.0, 0.0], [4.25, 0.0], [0.5, 0.0]])
    np.testing.assert_allclose(g(y), [3.0, -1.0, -(0.75 ** 2), 0.0])
    np.testing.assert_allclose(g.scale(2.0)(y), 2 * g(y))
    np.testing.assert_allclose(g.shift([1.0, 0.0])(y + [1.0, 0.0]), g(y))
    assert g.bound == 4.0 and g.value_range == (-1.0, 3.0)
    assert g.support_radius == pytest.approx(4.5)
    assert g.nonnegative_on(Ball(np.zeros(2), 1.0))
    assert not g.nonnegative_on(Ball(np.zeros(2), 3.8))
    assert not ExteriorFunction.const(2, -1.0).nonnegative_on(Ball(np.zeros(2), 1.0))
    with pytest.raises(PreconditionError):
        ExteriorFunction.shell(ORIGIN, 2.0, 1.0)


def test_negative_part_quadrature_integrates_bump():
    g = ExteriorFunction.bump((3.0, 0.0), 0.5, -2.0)
    _, w = g.negative_part_quadrature()
    # int (1 - r^2/w^2)^2 over a disc of radius w is pi w^2 / 3
    assert w.sum() == pytest.approx(2.0 * np.pi * 0.25 / 3, rel=1e-10)


def test_lattices():
    pts = ball_lattice([0.0, 0.0], 1.0, 0.25)
    assert np.all(np.linalg.norm(pts, axis=1) < 1.0)
    assert len(pts) == 45
    nodes, levels = nested_lattice(HarnackParams(ORIGIN), 4)
    assert len(nodes) == len(levels) and set(levels) == {0, 1, 2, 3, 4}


def test_exterior_mass_closed_form_at_centre(cauchy):
    # Cauchy: c(1) f_mu |S^1| / alpha = (2/pi)(1/4)(2 pi) = 1, so nu(B_R^c) = 1/R
    for R in (0.5, 1.0, 3.0):
        assert exterior_mass(cauchy, np.zeros(2), np.zeros(2), R)[0] == pytest.approx(1 / R,
                                                                                    rel=1e-12)


@pytest.mark.parametrize("p", [[0.5, 0.2], [0.0, -0.97], [0.999, 0.0]])
def test_exterior_mass_off_centre(aniso, p):
    R = 1.0
    got = exterior_mass(aniso, np.array(p), np.zeros(2), R)[0]
    near = polar_integral(lambda y: levy_density(aniso, y - p) * (np.linalg.norm(y, axis=1) > R),
                          p, 1e-3 * (1 - np.linalg.norm(p)), 1e4, n_r=3000, n_a=2048)
    far = exterior_mass(aniso, np.zeros(2), np.zeros(2), 1e4)[0]   # beyond 1e4 from p
    assert got == pytest.approx(near + far, rel=2e-3)


def test_bump_mass_matches_quadrature(aniso):
    c, w, h = np.array([2.0, 1.0]), 0.6, 1.5
    P = np.array([[0.2, 0.1], [1.2, 0.9]])
    g = ExteriorFunction.bump(c, w, h)
    nodes, wts = g.pieces[0].quadrature(n_r=200, n_a=400)
    for p, got in zip(P, bump_mass(aniso, P, c, w, h)):
        ref = np.dot(wts * g(nodes), levy_density(aniso, nodes - p))
        assert got == pytest.approx(ref, rel=1e-4)
    with pytest.raises(PreconditionError):
        bump_mass(aniso, np.array([[2.0, 1.2]]), c, w, h)


def test_harmonic_extension_of_shell_matches_exit_law(cauchy, params, small_bank):
    rho = 2.5
    g = ExteriorFunction.shell(ORIGIN, 1.0, rho)
    for conditional in (True, False):
        f = harmonic_extend(cauchy, g, params.ball, bank=small_bank, conditional=conditional)
        exact = isotropic_exit_radius_cdf(1.0, 2, 1.0, rho)[0]
        assert f.values[0] == pytest.approx(exact, abs=4 * f.std_err[0] + 1e-4)
        assert f.max_principle_ok(g)
    # the conditional estimator integrates out the landing point
    plain = harmonic_extend(cauchy, g, params.ball, bank=small_bank, conditional=False)
    cond = harmonic_extend(cauchy, g, params.ball, bank=small_bank)
    assert cond.std_err[0] < plain.std_err[0]


def test_constant_data_gives_unit_ratio(cauchy, params):
    from stableharnack.harnack import harnack_lattice
    bank = build_exit_bank(cauchy, params.ball, harnack_lattice(params), 200, seed=1)
    g = ExteriorFunction.const(2)
    f = harmonic_extend(cauchy, g, params.ball, bank=bank)
    np.testing.assert_array_equal(f.values, 1.0)
    rep = verify_weak_harnack(cauchy, f, g, params)
    assert rep.c_est == 1.0 and rep.tail_term == 0.0 and rep.status == "ok"
    assert rep.holds(1.0)["holds"]
    with pytest.raises(PreconditionError):
        verify_weak_harnack(cauchy, f, ExteriorFunction.bump((1.1, 0.0), 0.5, -1.0), params)


def test_tail_term_matches_direct_sum(cauchy, params):
    g = ExteriorFunction.bump((5.0, 0.0), 1.0, -1.0)
    t = tail_term(cauchy, g, params)
    # sup over the centre ball sits on its rim nearest the bump
    z = np.array([[1.0 / params.sigma_ratio, 0.0]])
    nodes, w = g.negative_part_quadrature()
    ref = np.dot(w, levy_density(cauchy, nodes - z[0]))
    assert t == pytest.approx(ref, rel=1e-6)
    assert tail_term(cauchy, ExteriorFunction.const(2), params) == 0.0


def test_hoelder_constants_and_validation():
    hc = hoelder_constants(1.0, 2.0)
    assert hc["kappa"] == 0.25
    assert hc["beta_theory"] == pytest.approx(np.log2(8 / 7), rel=1e-14)
    with pytest.raises(PreconditionError):
        hoelder_constants(0.25, 2.0)
    with pytest.raises(PreconditionError):
        hoelder_constants(2.0, 1.0)
    with pytest.raises(PreconditionError):
        HoelderIteration(1.0, 1.5, 0.1, 1.0, [], [], [], [], [])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2501, 1e6), st.floats(1.01, 100))
def test_hoelder_exponent_positive_and_decreasing_in_c1(c1, theta):
    b = hoelder_constants(c1, theta)["beta_theory"]
    assert 0 < b
    assert hoelder_constants(2 * c1, theta)["beta_theory"] < b


def test_exponent_fit_rejects_constant_field(cauchy, params, small_bank):
    g = ExteriorFunction.const(2)
    f = harmonic_extend(cauchy, g, params.ball, bank=small_bank)
    with pytest.raises(Inconclusive):
        estimate_hoelder_exponent(f, params, n_levels=1)


def test_annulus_decay_isotropic_scaling(cauchy):
    p1 = HarnackParams(ORIGIN, r=1.0)
    p2 = HarnackParams(ORIGIN, r=0.5)
    a, b = annulus_tail_decay(cauchy, p1, J=6), annulus_tail_decay(cauchy, p2, J=6)
    assert np.all(np.diff(a.eta) < 0)
    assert a.zeta_fit == pytest.approx(b.zeta_fit, rel=1e-12)
    assert b.c_fit == pytest.approx(2 * a.c_fit, rel=1e-12)
    with pytest.raises(PreconditionError):
        annulus_tail_decay(cauchy, p1, J=2)


def test_write_rows_csv(tmp_path):
    path = tmp_path / "rows.csv"
    write_rows_csv(path, [{"a": 1, "b": 2.5}, {"a": 3, "b": -1}])
    rows = list(csv.DictReader(path.open()))
    assert rows[1] == {"a": "3", "b": "-1"}
    write_rows_csv(tmp_path / "empty.csv", [])
    assert (tmp_path / "empty.csv").read_text() == ""
