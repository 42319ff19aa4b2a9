"""Acceptance criteria 1-9 at their stated tolerances.

Each test prints (and records for the terminal summary) one PASS/FAIL line.
"""

import json

import numpy as np
import pytest
from scipy import stats

from stableharnack.cli import main
from stableharnack.density import density_at, invert_density, unit_density_grid
from stableharnack.green import green_point, verify_lemma1, verify_lemma2, verify_lemma3
from stableharnack.harnack import (FAMILIES, HarnackParams, annulus_tail_decay, build_exit_bank,
                                   estimate_harnack_constant, estimate_hoelder_exponent,
                                   harmonic_extend, harnack_lattice, hoelder_constants,
                                   nested_lattice, random_exterior, run_oscillation_iteration,
                                   signed_harnack_trials)
from stableharnack.model import (Ball, SpectralMeasure, StableModel, char_exponent,
                                 isotropic_model)
from stableharnack.simulate import (DEFAULT_EPS_FRACTION, build_scheme,
                                    isotropic_exit_radius_cdf, sample_exit, task_rng)

SEED = 2024
ORIGIN = (0.0, 0.0)
BETA_THEORY_C1_THETA2 = 0.19264507794239583      # log2(8/7)


# 1 ---------------------------------------------------------------------------

def test_criterion_1_symbol(report_criterion, aniso):
    rng = np.random.default_rng(SEED)
    models = [aniso,
              StableModel(3, 1.3, SpectralMeasure.from_density(
                  lambda xi: 1 + xi[..., 2] ** 2 + 0.3 * xi[..., 0] * xi[..., 1], 2.5))]
    worst = 0.0
    for m in models:
        u = rng.normal(size=(100, m.d))
        c = np.exp(rng.uniform(np.log(0.01), np.log(100), 100))
        lhs = char_exponent(m, c[:, None] * u)
        rhs = c ** m.alpha * char_exponent(m, u)
        worst = max(worst, float(np.max(np.abs(lhs / rhs - 1))))
    iso = isotropic_model(2, 1.0)
    u = rng.normal(size=(100, 2))
    iso_err = float(np.max(np.abs(char_exponent(iso, u) - 4 * np.linalg.norm(u, axis=1))))
    ok = worst <= 1e-12 and iso_err <= 1e-8
    report_criterion(1, ok, f"homogeneity rel err {worst:.2e} (<=1e-12), "
                            f"|Phi - 4|u|| {iso_err:.2e} (<=1e-8)")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_criterion_2_density(report_criterion, cauchy, aniso, cauchy_grid, aniso_grid):
    masses, scaling = [], []
    for m, g in ((cauchy, cauchy_grid), (aniso, aniso_grid)):
        masses.append(abs(g.mass - 1))
        for t, L in ((0.25, 20.0), (4.0, 40.0)):
            gt = invert_density(m, t, L=L, N=2048)
            X, v = gt.nodes(), gt.values
            keep = (np.max(np.abs(X), axis=-1) <= gt.trusted_radius()) & (v > 1e-6)
            pred = density_at(m, g, t, X[keep])
            scaling.append(float(np.max(np.abs(pred / v[keep] - 1))))
    ok = max(masses) <= 1e-3 and max(scaling) <= 2e-3
    report_criterion(2, ok, f"|mass - 1| {max(masses):.2e} (<=1e-3), scaling err "
                            f"{max(scaling):.2e} (<=2e-3) at t in {{1/4, 4}}")
    assert ok


# 3 ---------------------------------------------------------------------------

def test_criterion_3_atomic_product(report_criterion, atomic_cross):
    g = unit_density_grid(atomic_cross)
    ax = g.axis()
    idx = np.flatnonzero(np.abs(ax) <= g.trusted_radius())
    sub = idx[np.linspace(0, len(idx) - 1, 33).round().astype(int)]
    X = g.nodes()[np.ix_(sub, sub)]
    cauchy_1d = lambda x: 1 / (np.pi * (1 + x * x))
    exact = cauchy_1d(X[..., 0]) * cauchy_1d(X[..., 1])
    err = float(np.max(np.abs(g.values[np.ix_(sub, sub)] / exact - 1)))
    ok = err <= 1e-3
    report_criterion(3, ok, f"atomic vs product Cauchy max rel err {err:.2e} (<=1e-3), "
                            f"33x33 nodes on [-{g.trusted_radius():g}, {g.trusted_radius():g}]^2")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_criterion_4_green(report_criterion, cauchy_profile):
    dev = float(np.max(np.abs(cauchy_profile.values * 2 * np.pi - 1)))
    rng = np.random.default_rng(SEED)
    x = rng.normal(size=(200, 2))
    exact_ok = all(np.array_equal(green_point(cauchy_profile, 2.0 ** k * x),
                                  green_point(cauchy_profile, x) / 2.0 ** k) for k in (-3, 1, 5))
    c = np.exp(rng.uniform(-3, 3, 200))
    generic = float(np.max(np.abs(green_point(cauchy_profile, c[:, None] * x) * c
                                  / green_point(cauchy_profile, x) - 1)))
    ok = dev <= 0.01 and exact_ok and generic <= 1e-14
    report_criterion(4, ok, f"profile vs 1/(2 pi) max rel dev {dev:.2e} (<=1%), "
                            f"G(cx) = G(x)/c bitwise for c = 2^k: {exact_ok}, "
                            f"generic c rounding {generic:.1e}")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_criterion_5_exit_law(report_criterion, cauchy, aniso):
    n = 100000
    D = Ball(np.zeros(2), 1.0)
    ex = sample_exit(build_scheme(cauchy, DEFAULT_EPS_FRACTION), D, np.zeros(2),
                     task_rng(SEED, 5, 0), n)
    ks = stats.kstest(ex.radii(), lambda s: isotropic_exit_radius_cdf(1.0, 2, 1.0, s)).statistic
    scaled = {}
    for i, r in enumerate((0.5, 2.0)):
        e = sample_exit(build_scheme(aniso, DEFAULT_EPS_FRACTION * r), Ball(np.zeros(2), r),
                        np.zeros(2), task_rng(SEED, 5, 1 + i), n)
        scaled[r] = e.positions / r
    rad = stats.ks_2samp(*(np.linalg.norm(v, axis=1) for v in scaled.values())).statistic
    ang = stats.ks_2samp(*(np.arctan2(v[:, 1], v[:, 0]) for v in scaled.values())).statistic
    ok = ks <= 0.02 and rad <= 0.02 and ang <= 0.02
    report_criterion(5, ok, f"exit-law KS {ks:.4f} (<=0.02, 1e5 paths); self-similarity KS "
                            f"r=1/2 vs 2: radius {rad:.4f}, angle {ang:.4f} (<=0.02)")
    assert ok


# 6 ---------------------------------------------------------------------------

@pytest.mark.parametrize("which", ["cauchy", "aniso"])
def test_criterion_6_lemmas(report_criterion, request, which):
    model = request.getfixturevalue(which)
    profile = request.getfixturevalue(f"{which}_profile")
    r1 = verify_lemma1(model, profile, ORIGIN, 1.0, 2.0, 0.9, seed=SEED)
    se = max(s["rel_err"] for s in r1.samples)
    l1 = r1.status == "ok" and np.isfinite(r1.constants["c1"]) and se <= 0.05
    r2 = verify_lemma2(model, profile, ORIGIN, 1.0, 2.0, 0.9, seed=SEED)
    l2 = r2.status == "ok" and r2.constants["delta1"] is not None and r2.constants["c2"] > 0
    r3 = verify_lemma3(model, profile, ORIGIN, 1.0, 1.5, 2.0, 0.9, pairs=20,
                       delta1=r2.constants["delta1"], seed=SEED)
    c3 = r3.constants["c3"]
    l3 = len(r3.samples) == 20 and c3 is not None and np.isfinite(c3)
    ok = l1 and l2 and l3
    report_criterion(6, ok, f"[{which}] L1 c1={r1.constants['c1']:.4g} max std-err "
                            f"{se:.1%} (<=5%); L2 delta1={r2.constants['delta1']:.3g} "
                            f"c2-2sigma={r2.constants['c2']:.3g} (>0); L3 c3={c3:.4g} "
                            f"over {len(r3.samples)} pairs")
    assert ok


# 7 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def harnack_setup(cauchy):
    params = HarnackParams(ORIGIN)
    bank = build_exit_bank(cauchy, params.ball, harnack_lattice(params), 2000, SEED)
    est = estimate_harnack_constant(cauchy, params, 50, SEED, 2000, bank)
    return params, bank, est


def test_criterion_7_weak_harnack(report_criterion, cauchy, harnack_setup):
    params, bank, est = harnack_setup
    c1 = est["c1"]
    dist = est["distribution"]
    by_construction = (len(dist) == 50 and np.isfinite(c1)
                       and all(m["avg"] <= c1 * m["inf"] * (1 + 1e-12) for m in dist))
    trials = signed_harnack_trials(cauchy, params, c1, 20, SEED, 2000, bank)
    frac = trials["fraction_holding"]
    ok = by_construction and frac >= 0.95 and trials["failures_within_noise"]
    report_criterion(7, ok, f"c1={c1:.4g}+-{est['c1_err']:.2g} over 50 nonnegative members "
                            f"(avg <= c1 inf: {by_construction}); signed trials hold "
                            f"{frac:.0%} (>=95%), failures within 2 sigma: "
                            f"{trials['failures_within_noise']}")
    assert ok


# 8 ---------------------------------------------------------------------------

def test_criterion_8_hoelder(report_criterion, cauchy, harnack_setup):
    params, _, est = harnack_setup
    hc = hoelder_constants(1.0, 2.0)
    const_ok = (abs(hc["kappa"] - 0.25) <= 1e-12
                and abs(hc["beta_theory"] - BETA_THEORY_C1_THETA2) <= 1e-12)

    c1 = est["c1"]
    nodes, _ = nested_lattice(params, 4)
    bank = build_exit_bank(cauchy, params.ball, nodes, 2000, SEED, task=31)
    rng = task_rng(SEED, 8)
    sandwich_ok, envelope_ok, fits = True, True, []
    beta_theory = hoelder_constants(c1, params.theta)["beta_theory"]
    for i in range(9):
        g = random_exterior(FAMILIES[i % 3], params, rng)
        field = harmonic_extend(cauchy, g, params.ball, bank=bank)
        it = run_oscillation_iteration(cauchy, field, g, params, c1, n_levels=4, n_sigma=3)
        sandwich_ok &= all(s["pass"] for s in it.sandwich)
        envelope_ok &= all(e["pass"] for e in it.envelope)
        fits.append(estimate_hoelder_exponent(field, params, 4)["beta_fit"])
    fit_ok = min(fits) >= beta_theory - 0.02

    # sigma = 3: see the decisions ledger for why sigma = 2 is not used here
    tail = annulus_tail_decay(cauchy, HarnackParams(ORIGIN, sigma_ratio=3.0), k=1, J=8)
    target = params.theta ** cauchy.alpha
    res = float(np.max(np.abs(tail.residuals)))
    tail_ok = res <= 0.10 and abs(tail.zeta_fit / target - 1) <= 0.05

    ok = const_ok and sandwich_ok and fit_ok and tail_ok
    report_criterion(8, ok, f"constants(1,2) exact: {const_ok}; sandwich n<=4 (3 sigma) on 9 "
                            f"members: {sandwich_ok} (envelope {envelope_ok}); min beta_fit "
                            f"{min(fits):.3f} >= beta_theory-0.02 = {beta_theory - 0.02:.3f}; "
                            f"annulus zeta {tail.zeta_fit:.4f} vs theta^alpha={target:g} "
                            f"(+-5%), max residual {res:.1%} (<=10%)")
    assert ok


# 9 ---------------------------------------------------------------------------

def test_criterion_9_determinism(report_criterion, tmp_path):
    body = """[model]
dimension = 2
alpha = 1.0
spectral = density
density = 1 + 0.5*cos(theta)**2
bound = 1.5

[experiment]
task = {task}
seed = 77

[params]
{params}
"""
    runs = {"harnack": "ensemble_size = 4\nsigned_trials = 2\nn_paths = 300\n",
            "exit": "n_paths = 2000\n", "tail": "J = 5\n"}
    same = {}
    for task, params in runs.items():
        cfg = tmp_path / f"{task}.ini"
        cfg.write_text(body.format(task=task, params=params))
        reports = []
        for k in range(2):
            out = tmp_path / f"{task}{k}"
            assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
            reports.append((out / "report.json").read_bytes())
            manifest = json.loads((out / "manifest.json").read_text())
            assert "timestamp" in manifest
        same[task] = reports[0] == reports[1]
    ok = all(same.values())
    report_criterion(9, ok, f"byte-identical report.json across two runs: {same}")
    assert ok
