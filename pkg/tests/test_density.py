import numpy as np
import pytest

from conftest import cauchy_pdf_2d
from stableharnack.density import (density_at, invert_density, load_grid, radial_slice_csv,
                                   save_grid, verify_heat_kernel_bound)
from stableharnack.errors import GridResolutionError, PreconditionError
from stableharnack.model import isotropic_model


def test_cauchy_grid_matches_closed_form(cauchy_grid):
    ax = cauchy_grid.axis()
    keep = np.abs(ax) <= 10
    X = cauchy_grid.nodes()[np.ix_(keep, keep)]
    exact = cauchy_pdf_2d(X)
    err = np.abs(cauchy_grid.values[np.ix_(keep, keep)] / exact - 1)
    assert err.max() < 1e-4


def test_grid_mass_and_ringing(cauchy_grid, aniso_grid):
    for g in (cauchy_grid, aniso_grid):
        assert abs(g.mass - 1) < 1e-3
        assert g.ringing < 1e-6


def test_density_at_scaling_identity(aniso, aniso_grid):
    x = np.array([[0.3, 0.1], [1.5, -2.0]])
    for t in (0.5, 2.0):
        np.testing.assert_allclose(density_at(aniso, aniso_grid, t, x),
                                   t ** -2 * aniso_grid.evaluate(x / t), rtol=1e-14)


def test_density_at_far_field_uses_flagged_bound(cauchy, cauchy_grid):
    x = np.array([[1e7, 0.0], [0.5, 0.5]])
    vals, flags = density_at(cauchy, cauchy_grid, 1.0, x, with_flag=True)
    assert list(flags) == ["bound", "value"]
    assert vals[0] == pytest.approx(cauchy_grid.tail_constant * 1e7 ** -3)
    # the far field of the Cauchy density is |x|^-3 / (2 pi)
    assert cauchy_grid.tail_constant == pytest.approx(1 / (2 * np.pi), rel=1e-3)


def test_density_at_rejects_nonpositive_time(cauchy, cauchy_grid):
    with pytest.raises(PreconditionError):
        density_at(cauchy, cauchy_grid, 0.0, [[0.0, 0.0]])


def test_heat_kernel_bound_is_finite(cauchy, cauchy_grid):
    hk = verify_heat_kernel_bound(cauchy, cauchy_grid)
    # sup (1+|x|^2)^{-3/2} / min(1, |x|^-3) / (2 pi) is 1 / (2 pi)
    assert hk["C_est"] == pytest.approx(1 / (2 * np.pi), rel=1e-3)


def test_coarse_grid_rejected():
    m = isotropic_model(2, 1.0)
    with pytest.raises(GridResolutionError):
        invert_density(m, 1.0, L=400.0, N=64)


def test_save_load_roundtrip(tmp_path, cauchy, cauchy_grid):
    path = tmp_path / "grid.npz"
    save_grid(cauchy_grid, path)
    back = load_grid(path, cauchy)
    assert back.mass == cauchy_grid.mass
    np.testing.assert_array_equal(back.values, cauchy_grid.values)
    x = np.array([[0.2, 0.7], [25.0, 3.0]])
    np.testing.assert_array_equal(back.evaluate(x), cauchy_grid.evaluate(x))


def test_radial_slice_csv(tmp_path, cauchy_grid):
    path = tmp_path / "slice.csv"
    radial_slice_csv(cauchy_grid, path, n=50)
    rows = path.read_text().splitlines()
    assert rows[0] == "r,p" and len(rows) == 51
    r, p = map(float, rows[10].split(","))
    assert p == pytest.approx(float(cauchy_pdf_2d([r, 0.0])), rel=1e-3)
