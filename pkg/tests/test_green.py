import json

import numpy as np
import pytest

from stableharnack.errors import BudgetExceeded, PreconditionError, SingularityError
from stableharnack.green import (BallAverager, LemmaReport, averaged_killed_green,
                                 ball_average_green, green_point, killed_green, verify_lemma1)
from stableharnack.model import Ball
from stableharnack.simulate import task_rng


def cauchy_killed_green_unit_disc(x, y):
    """Killed Green function of the planar process with Phi(u) = |u| in B_1(0)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    dist = np.linalg.norm(x - y, axis=-1)
    w = (1 - np.sum(x * x, -1)) * (1 - np.sum(y * y, -1)) / dist ** 2
    return np.arctan(np.sqrt(w)) / (np.pi ** 2 * dist)


def test_cauchy_profile_is_constant(cauchy_profile):
    np.testing.assert_allclose(cauchy_profile.values, 1 / (2 * np.pi), rtol=1e-3)
    assert cauchy_profile.evenness_error() < 1e-12


def test_profile_even_for_anisotropic_model(aniso_profile):
    assert aniso_profile.evenness_error() < 1e-10
    e = np.array([[1.0, 0.0], [0.0, 1.0]])
    g = aniso_profile.value(e)
    # more jump mass along e1 spreads the process there: larger Green function along e1
    assert g[0] > g[1]


def test_green_point_homogeneity(aniso_profile):
    x = np.array([[0.3, -1.2], [2.0, 0.5]])
    for c in (0.25, 3.7):
        np.testing.assert_allclose(green_point(aniso_profile, c * x),
                                   green_point(aniso_profile, x) / c, rtol=1e-13)
    with pytest.raises(SingularityError):
        green_point(aniso_profile, [[0.0, 0.0]])


def test_ball_average_at_centre_closed_form(cauchy_profile):
    """avg over B_R(0) of 1/(2 pi |x|) is 1/(pi R)."""
    for R in (0.5, 2.0):
        val = ball_average_green(cauchy_profile, Ball(np.zeros(2), R), [[0.0, 0.0]])[0]
        assert val == pytest.approx(1 / (np.pi * R), rel=1e-3)


def test_ball_average_matches_sampling(aniso_profile):
    ball = Ball(np.array([0.3, 0.1]), 0.4)
    rng = np.random.default_rng(0)
    n = 400000
    pts = rng.normal(size=(n, 2))
    pts *= (ball.radius * np.sqrt(rng.random(n)) / np.linalg.norm(pts, axis=1))[:, None]
    pts += ball.center
    y = np.array([[1.1, -0.4], [0.2, 0.2]])
    avg = BallAverager(aniso_profile, ball)(y)
    for yi, a in zip(y, avg):
        g = green_point(aniso_profile, pts - yi)
        assert a == pytest.approx(g.mean(), abs=4 * g.std() / np.sqrt(n) + 2e-4 * a)


def test_killed_green_closed_form(cauchy, cauchy_profile):
    D = Ball(np.zeros(2), 1.0)
    x, z = np.array([0.2, 0.0]), np.array([-0.3, 0.4])
    exact = cauchy_killed_green_unit_disc(x, z)
    for start in ("x", "z", "auto"):
        est = killed_green(cauchy, D, x, z, cauchy_profile, n_paths=20000, seed=3, start=start)
        assert est.value == pytest.approx(exact, abs=4 * est.std_err + 1e-3 * exact)


def test_killed_green_zero_outside_and_singular_on_diagonal(cauchy, cauchy_profile):
    D = Ball(np.zeros(2), 1.0)
    assert killed_green(cauchy, D, [1.5, 0.0], [0.0, 0.0], cauchy_profile).value == 0.0
    assert killed_green(cauchy, D, [0.0, 0.0], [1.0, 0.0], cauchy_profile).value == 0.0
    with pytest.raises(SingularityError):
        killed_green(cauchy, D, [0.1, 0.1], [0.1, 0.1], cauchy_profile)


def test_averaged_killed_green_closed_form(cauchy, cauchy_profile):
    D, inner = Ball(np.zeros(2), 1.0), Ball(np.zeros(2), 0.3)
    z = np.array([0.6, 0.1])
    est = averaged_killed_green(cauchy, cauchy_profile, D, inner, z, 20000, task_rng(0, 5))
    rng = np.random.default_rng(1)
    n = 200000
    pts = rng.normal(size=(n, 2))
    pts *= (0.3 * np.sqrt(rng.random(n)) / np.linalg.norm(pts, axis=1))[:, None]
    g = cauchy_killed_green_unit_disc(pts, z)
    tol = 4 * np.hypot(est.std_err, g.std() / np.sqrt(n)) + 1e-3 * g.mean()
    assert est.value == pytest.approx(g.mean(), abs=tol)


def test_lemma1_scales_with_radius(cauchy, cauchy_profile):
    """c1 for B_{ar} against radius r: ratio 2^{alpha-d} when r doubles."""
    reps = [verify_lemma1(cauchy, cauchy_profile, [0.0, 0.0], r, 2.0, 0.9, z_samples=3,
                          n_paths=4000, seed=2) for r in (1.0, 2.0)]
    assert all(r.status == "ok" for r in reps)
    ratio = reps[1].constants["c1"] / reps[0].constants["c1"]
    assert ratio == pytest.approx(0.5, rel=0.03)
    for s in reps[0].samples:
        assert s["lhs"] <= s["rhs"] + 3 * s["std_err"]


def test_lemma1_preconditions_and_budget(cauchy, cauchy_profile):
    with pytest.raises(PreconditionError):
        verify_lemma1(cauchy, cauchy_profile, [0.0, 0.0], 1.0, 2.0, 0.4)
    with pytest.raises(BudgetExceeded):
        verify_lemma1(cauchy, cauchy_profile, [0.0, 0.0], 1.0, 2.0, 0.9, z_samples=2,
                      n_paths=8, max_paths=16)


def test_lemma_report_serialisation(tmp_path):
    rep = LemmaReport("L1", {"c1": 0.5}, [{"z": [0.1, 0.2], "lhs": 0.3}], {"r": 1.0})
    back = json.loads(rep.to_json())
    assert back["constants"]["c1"] == 0.5 and back["lemma_id"] == "L1"
    rep.samples_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "z,lhs"
