import numpy as np
import numpy.testing as npt
import pytest

from app.models.errors import MaterialError
from app.models.materials import (EPS0, HeavisideParams, IsotropicElastic, MaterialSet, elasticity_matrix,
                                  heaviside_derivative, interpolate_properties, smoothed_heaviside)

HV = HeavisideParams(w=0.9, d=0.01)


def test_elasticity_without_poisson():
    C = elasticity_matrix(IsotropicElastic(youngs_modulus=2.0e9, poisson_ratio=0.0, density=1000.0))
    npt.assert_allclose(np.diag(C), [2.0e9] * 3 + [1.0e9] * 3)
    npt.assert_allclose(C[0, 1], 0.0)


def test_elasticity_silicon():
    C = elasticity_matrix(MaterialSet().substrate)
    E, nu = 169e9, 0.28
    npt.assert_allclose(C, C.T)
    npt.assert_allclose(C[0, 0], E * (1 - nu) / ((1 + nu) * (1 - 2 * nu)))
    npt.assert_allclose(C[3, 3], E / (2 * (1 + nu)))
    assert np.all(np.linalg.eigvalsh(C) > 0)


def test_incompressible_rejected():
    with pytest.raises(MaterialError) as err:
        IsotropicElastic(youngs_modulus=1e9, poisson_ratio=0.5, density=1000.0)
    assert err.value.field == "poisson_ratio"


def test_heaviside_values():
    assert smoothed_heaviside(-0.9, HV) == pytest.approx(0.01)
    assert smoothed_heaviside(-1.0, HV) == pytest.approx(0.01)
    assert smoothed_heaviside(1.0, HV) == pytest.approx(1.0)
    assert smoothed_heaviside(0.0, HV) == pytest.approx(0.505)
    s = 0.5
    poly = 0.5 + 15.0 / 16.0 * s - 5.0 / 8.0 * s ** 3 + 3.0 / 16.0 * s ** 5
    assert smoothed_heaviside(0.45, HV) == pytest.approx(0.01 + 0.99 * poly)


def test_heaviside_monotone_and_bounded():
    phi = np.linspace(-1.0, 1.0, 401)
    h = smoothed_heaviside(phi, HV)
    assert np.all(np.diff(h) >= 0.0)
    assert h.min() >= 0.01 - 1e-15
    assert h.max() <= 1.0 + 1e-15


def test_heaviside_derivative_matches_finite_difference():
    phi = np.linspace(-0.85, 0.85, 35)
    step = 1e-6
    fd = (smoothed_heaviside(phi + step, HV) - smoothed_heaviside(phi - step, HV)) / (2 * step)
    npt.assert_allclose(heaviside_derivative(phi, HV), fd, rtol=1e-6, atol=1e-9)
    assert heaviside_derivative(0.95, HV) == 0.0


def test_full_piezo_point():
    mats = MaterialSet()
    props = interpolate_properties(1.0, 1.0, 1.0, 1.0, mats)
    C_pe = elasticity_matrix(mats.piezo)
    C_sb = elasticity_matrix(mats.substrate)
    npt.assert_allclose(props.C_eff, C_pe + 0.01 * C_sb)
    npt.assert_allclose(props.e_eff, mats.coupling.e_matrix)
    npt.assert_allclose(props.eps_eff, mats.coupling.eps_S + EPS0 * 0.01 * np.eye(3))
    assert props.rho_eff == pytest.approx(7750.0 + 0.01 * 2329.0)


def test_void_point_keeps_positive_permittivity():
    mats = MaterialSet()
    d = 0.01
    props = interpolate_properties(d, d, 1.0, 1.0, mats)
    w_pe, w_sb = d, d * d
    expected = EPS0 * (1.0 - w_pe - w_sb) * np.eye(3) + mats.coupling.eps_S * w_pe
    npt.assert_allclose(props.eps_eff, expected)
    assert np.linalg.eigvalsh(props.eps_eff).min() >= d * EPS0


def test_substrate_point_with_weight_factor():
    mats = MaterialSet()
    props = interpolate_properties(0.01, 1.0, 1.0, 0.01, mats, density_factor=100.0)
    npt.assert_allclose(props.e_eff, mats.coupling.e_matrix * 1e-4)
    assert props.rho_eff == pytest.approx(7750.0 * 1e-4 + 2329.0 * 100.0)


def test_density_grows_with_piezo_indicator():
    mats = MaterialSet()
    rho = [interpolate_properties(h, 1.0, 1.0, 1.0, mats).rho_eff for h in (0.01, 0.3, 0.7, 1.0)]
    assert np.all(np.diff(rho) > 0)


def test_indicator_out_of_range():
    with pytest.raises(MaterialError) as err:
        interpolate_properties(1.2, 1.0, 1.0, 1.0, MaterialSet())
    assert err.value.field == "h_p"
