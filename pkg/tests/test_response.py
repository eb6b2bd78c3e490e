import numpy as np
import numpy.testing as npt
import pytest

from app.models.errors import ResponseError
from app.models.level_set import make_field
from app.models.mesh import build_box_mesh
from app.models.piezo_fem import (ModeSet, assemble, pair_modes, solve_open_circuit_modes,
                                  solve_short_circuit_modes)
from app.models.response import (ExcitationConfig, body_force, forced_response, modal_amplitudes,
                                 nodal_gradient_z, nodal_potential, output_voltage, recover_potential,
                                 voltage_constraint)


@pytest.fixture
def system(tiny_mesh, materials):
    shared = make_field(tiny_mesh, "shared")
    return assemble(tiny_mesh, shared, shared, None, materials)


@pytest.fixture
def modes(system):
    return pair_modes(solve_short_circuit_modes(system, 2), solve_open_circuit_modes(system, 2))


def linear_potential(system, slope):
    z = system.mesh.coords[:, 2]
    has = system.pot_index >= 0
    phi = np.zeros(system.n_phi)
    phi[system.pot_index[has]] = slope * (z[has] - system.mesh.z_interface)
    return phi


def fake_modes(omegas):
    n = len(omegas)
    return ModeSet(omega_sc=np.asarray(omegas), u_sc=np.zeros((3, n)), omega_oc=np.asarray(omegas),
                   u_oc=np.zeros((3, n)), phi_oc=np.zeros((0, n)), pairing=np.arange(n),
                   mac=np.eye(n))


def test_uniform_field_voltage(system):
    result = output_voltage(linear_potential(system, 3.0), system)
    eps_z = system.materials.coupling.eps_z
    assert result.L_z == pytest.approx(0.5)
    # plena ocupación: ∫χ_p = volumen de la capa PZT (franja + placa)
    assert result.volume_pe == pytest.approx(5.0 * 4.0 * 0.5)
    assert result.V_E == pytest.approx(3.0 * eps_z * 0.5 ** 2)
    assert voltage_constraint(result, result.V_E) == pytest.approx(0.0, abs=1e-12)
    assert voltage_constraint(result, 2.0 * result.V_E) > 0.0
    assert voltage_constraint(result, 0.5 * result.V_E) < 0.0


def test_voltage_sign_is_dropped(system):
    up = output_voltage(linear_potential(system, 2.0), system)
    down = output_voltage(linear_potential(system, -2.0), system)
    assert up.V_E == pytest.approx(down.V_E)


def test_body_force_matches_total_mass(system):
    f = body_force(system, 9.81)
    npt.assert_allclose(f[0::3], 0.0)
    npt.assert_allclose(f[2::3].sum(), 9.81 * system.M[2::3, 2::3].sum(), rtol=1e-10)


def test_amplitude_at_resonance():
    excitation = ExcitationConfig(damping_ratio=0.02)
    q = modal_amplitudes([3.0, 3.0], fake_modes([10.0, 40.0]), excitation, omega_bar=10.0)
    assert q[0] == pytest.approx(3.0 / (10.0 * 2 * 0.02))
    r = 10.0 / 40.0
    assert q[1] == pytest.approx(3.0 / (40.0 * np.sqrt((1 - r ** 2) ** 2 + 4 * 0.02 ** 2 * r ** 2)))


def test_zero_frequency_mode():
    with pytest.raises(ResponseError):
        modal_amplitudes([1.0], fake_modes([0.0]), ExcitationConfig(), omega_bar=1.0)


def test_excitation_frequency_selection():
    assert ExcitationConfig(eval_target=2).omega_bar([10.0, 20.0]) == 20.0
    assert ExcitationConfig(eval_frequency=7.0).omega_bar([10.0, 20.0]) == 7.0
    with pytest.raises(ResponseError):
        ExcitationConfig(eval_target=3).omega_bar([10.0, 20.0])
    with pytest.raises(ResponseError):
        ExcitationConfig(damping_ratio=0.0)


def test_recovered_potential_matches_open_circuit_mode(system, modes):
    phi = recover_potential(modes.u_oc[:, 0], system)
    npt.assert_allclose(phi, modes.phi_oc[:, 0], rtol=1e-8, atol=1e-12 * np.abs(phi).max())
    npt.assert_allclose(phi[system.ground_pot], 0.0)


def test_forced_response_superposes_modes(system, modes):
    excitation = ExcitationConfig()
    response = forced_response(system, modes, excitation, omega_bar=0.5 * modes.omega_oc[0])
    npt.assert_allclose(response.u, modes.u_oc @ response.q)
    assert response.voltage.V_E > 0.0
    assert np.isfinite(response.voltage.V_E)


def test_mesh_without_piezo(materials):
    mesh = build_box_mesh(4.0, 1.0, 1.0, 0.0, 4, 1, 1, 0)
    shared = make_field(mesh, "shared")
    system = assemble(mesh, shared, shared, None, materials)
    with pytest.raises(ResponseError):
        output_voltage(np.zeros(system.n_phi), system)


def test_nodal_potential_and_gradient(system):
    phi = linear_potential(system, 4.0)
    mesh = system.mesh
    has = system.pot_index >= 0
    nodal = nodal_potential(phi, system)
    npt.assert_allclose(nodal[has], 4.0 * (mesh.coords[has, 2] - mesh.z_interface))
    npt.assert_allclose(nodal[~has], 0.0)
    npt.assert_allclose(nodal_gradient_z(phi, system)[has], 4.0, rtol=1e-10)


def test_voltage_is_linear_in_base_acceleration(system, modes):
    omega_bar = 0.5 * modes.omega_oc[0]
    unit = forced_response(system, modes, ExcitationConfig(base_acceleration=1.0), omega_bar)
    triple = forced_response(system, modes, ExcitationConfig(base_acceleration=3.0), omega_bar)
    assert unit.voltage.V_E > 0.0
    assert triple.voltage.V_E == pytest.approx(3.0 * unit.voltage.V_E, rel=1e-12)
    npt.assert_allclose(triple.u, 3.0 * unit.u, rtol=1e-12, atol=1e-30)
