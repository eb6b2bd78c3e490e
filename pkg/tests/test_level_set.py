import numpy as np
import numpy.testing as npt
import pytest

from app.models.errors import LevelSetError
from app.models.level_set import (LevelSetField, RegularizationTensor, UpdateParams, characteristic, make_field,
                                  manufacturability_metrics, normalize_sensitivity, update_field)
from app.models.materials import HeavisideParams
from app.models.mesh import PE_FAMILY, Mesh, Region, build_box_mesh


def node_at(mesh, i, j, k):
    return int(np.flatnonzero((mesh.lattice == [i, j, k]).all(axis=1))[0])


def test_characteristic_limits(tiny_mesh):
    hv = HeavisideParams()
    field = make_field(tiny_mesh, "pe")
    chi = characteristic(field.with_values(np.ones(tiny_mesh.n_nodes)), hv)
    npt.assert_allclose(chi[field.design_mask], 1.0)
    chi = characteristic(field.with_values(-np.ones(tiny_mesh.n_nodes)), hv)
    npt.assert_allclose(chi[field.design_mask], 0.01)
    chi = characteristic(field.with_values(np.zeros(tiny_mesh.n_nodes)), hv)
    npt.assert_allclose(chi[field.design_mask], 0.505)


def test_frozen_values_follow_regions(tiny_mesh):
    field = make_field(tiny_mesh, "pe", initial=0.3)
    solid = tiny_mesh.nodes_touching(tiny_mesh.element_mask(Region.PE_NONDESIGN))
    npt.assert_allclose(field.values[solid], 1.0)
    assert not np.any(field.design_mask & solid)
    outside = ~tiny_mesh.nodes_touching(tiny_mesh.element_mask(*PE_FAMILY))
    npt.assert_allclose(field.values[outside], -1.0)
    npt.assert_allclose(field.values[field.design_mask], 0.3)
    # la escritura sobre nodos congelados se descarta
    moved = field.with_values(np.full(tiny_mesh.n_nodes, -0.5))
    npt.assert_allclose(moved.values[solid], 1.0)


def test_unknown_family(tiny_mesh):
    with pytest.raises(LevelSetError):
        make_field(tiny_mesh, "copper")


def test_normalization_scale_invariant(box_mesh):
    raw = np.linspace(-1.0, 3.0, box_mesh.n_nodes)
    a = normalize_sensitivity(raw, box_mesh, c_norm=2.0)
    b = normalize_sensitivity(1e6 * raw, box_mesh, c_norm=2.0)
    npt.assert_allclose(a, b)


def test_normalization_constant_field(box_mesh):
    out = normalize_sensitivity(np.full(box_mesh.n_nodes, 7.0), box_mesh, c_norm=2.0)
    npt.assert_allclose(out, 2.0)


def test_normalization_of_zero_gradient(box_mesh):
    with pytest.raises(LevelSetError):
        normalize_sensitivity(np.zeros(box_mesh.n_nodes), box_mesh, c_norm=2.0)


def test_invalid_update_parameters():
    with pytest.raises(LevelSetError):
        UpdateParams(dt=0.0)
    with pytest.raises(LevelSetError):
        RegularizationTensor(tau_z=-1.0)


def test_full_design_is_a_fixed_point(tiny_mesh):
    field = make_field(tiny_mesh, "pe")
    out = update_field(field, np.zeros(tiny_mesh.n_nodes), RegularizationTensor(tau_z=1e-2),
                       UpdateParams(), tiny_mesh)
    npt.assert_allclose(out.values, field.values, atol=1e-12)


def test_update_stays_in_range_and_keeps_frozen(tiny_mesh):
    field = make_field(tiny_mesh, "sb", initial=0.5)
    rng = np.random.default_rng(7)
    velocity = 5.0 * rng.standard_normal(tiny_mesh.n_nodes)
    out = update_field(field, velocity, RegularizationTensor(tau_x=1e-3, tau_y=1e-3, tau_z=1e-2),
                       UpdateParams(dt=1.0), tiny_mesh)
    assert np.all(np.abs(out.values) <= 1.0)
    npt.assert_array_equal(out.values[~field.design_mask], field.frozen_values[~field.design_mask])


def layered_pe_field():
    mesh = build_box_mesh(2.0, 2.0, 1.0, 2.0, 2, 2, 1, 4)
    field = make_field(mesh, "pe")
    values = np.where(mesh.lattice[:, 2] % 2 == 0, 0.5, -0.5)
    return mesh, field.with_values(values)


def test_vertical_diffusion_smooths_layers():
    mesh, field = layered_pe_field()
    out = update_field(field, np.zeros(mesh.n_nodes), RegularizationTensor(tau_z=1.0),
                       UpdateParams(dt=1.0), mesh)
    design = field.design_mask
    assert np.abs(out.values[design]).max() < 0.5
    assert np.abs(out.values[design]).max() <= np.abs(field.values[design]).max()


def test_in_plane_diffusion_leaves_layers_alone():
    mesh, field = layered_pe_field()
    out = update_field(field, np.zeros(mesh.n_nodes), RegularizationTensor(tau_x=1.0, tau_y=1.0, tau_z=0.0),
                       UpdateParams(dt=1.0), mesh)
    npt.assert_allclose(out.values, field.values, atol=1e-12)


def test_manufacturability_metrics(box_mesh):
    field_p = make_field(box_mesh, "pe")
    field_s = make_field(box_mesh, "sb")
    assert manufacturability_metrics(field_p, field_s, box_mesh) == (0.0, 0.0)

    values = field_p.values.copy()
    values[node_at(box_mesh, 2, 2, 3)] = -1.0
    n1, n2 = manufacturability_metrics(field_p.with_values(values), field_s, box_mesh)
    assert n1 == pytest.approx(0.01)
    assert n2 == pytest.approx(0.01)

    values = field_s.values.copy()
    values[node_at(box_mesh, 2, 2, 1)] = -1.0
    n1, n2 = manufacturability_metrics(field_p, field_s.with_values(values), box_mesh)
    assert n1 == pytest.approx(0.02)
    assert n2 == pytest.approx(0.01)


def test_tensor_needs_a_positive_component():
    with pytest.raises(LevelSetError):
        RegularizationTensor(tau_x=0.0, tau_y=0.0, tau_z=0.0)
    assert RegularizationTensor(tau_x=1e-3, tau_z=0.0).as_array()[0] == 1e-3


def test_reaction_step_is_exact_without_transverse_variation(box_mesh):
    # difusión solo en x sobre un campo que varía solo en z: el paso es pura reacción
    field = make_field(box_mesh, "pe", initial=0.2)
    z = box_mesh.lattice[:, 2]
    velocity = np.where(z == 3, 0.1, -0.3)
    params = UpdateParams(K_coeff=2.0, dt=0.5)
    tau = RegularizationTensor(tau_x=1.0, tau_z=0.0)
    out = update_field(field, velocity, tau, params, box_mesh)
    design = field.design_mask
    npt.assert_allclose(out.values[design], 0.2 + params.K_coeff * params.dt * velocity[design], atol=1e-12)

    clipped = update_field(field, 10.0 * velocity, tau, params, box_mesh)
    npt.assert_allclose(clipped.values[design & (z == 3)], 1.0)
    npt.assert_allclose(clipped.values[design & (z == 2)], -1.0)


def test_vertical_chain_matches_tridiagonal_solve():
    mesh = build_box_mesh(1.0, 1.0, 2.0, 0.0, 1, 1, 2, 0)
    field = make_field(mesh, "sb", initial=0.0)
    assert field.design_mask.all()
    z = mesh.lattice[:, 2]
    velocity = np.where(z == 2, 0.4, 0.0)
    out = update_field(field, velocity, RegularizationTensor(tau_z=1.0), UpdateParams(dt=1.0), mesh)

    # cubos unitarios: masa nodal 1/8 por elemento, rigidez τ/4 entre nodos de una columna
    m = np.array([1.0, 2.0, 1.0]) / 8.0
    k = 0.25
    A = np.diag(m) + k * np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
    expected = np.linalg.solve(A, m * np.array([0.0, 0.0, 0.4]))
    npt.assert_allclose(expected, [0.16 / 3.0, 0.08, 0.56 / 3.0])
    for level in range(3):
        npt.assert_allclose(out.values[z == level], expected[level], rtol=1e-12)


def relabeled(mesh, perm):
    """Misma malla con los nodos renumerados: el nodo nuevo k es el viejo perm[k]"""
    inverse = np.argsort(perm)
    below = mesh.below[perm]
    return Mesh(coords=mesh.coords[perm], elements=inverse[mesh.elements], element_tags=mesh.element_tags,
                node_sets={name: np.sort(inverse[nodes]) for name, nodes in mesh.node_sets.items()},
                lattice=mesh.lattice[perm], below=np.where(below >= 0, inverse[np.maximum(below, 0)], -1),
                z_interface=mesh.z_interface, plate_extent=mesh.plate_extent,
                sb_thickness=mesh.sb_thickness, weight_density_factor=mesh.weight_density_factor)


def test_update_commutes_with_node_relabeling(box_mesh):
    rng = np.random.default_rng(11)
    perm = rng.permutation(box_mesh.n_nodes)
    other = relabeled(box_mesh, perm)
    field = make_field(box_mesh, "pe")
    field = field.with_values(rng.uniform(-1.0, 1.0, box_mesh.n_nodes))
    moved = LevelSetField(values=field.values[perm], design_mask=field.design_mask[perm],
                          frozen_values=field.frozen_values[perm], region_elements=field.region_elements,
                          name=field.name)
    velocity = rng.standard_normal(box_mesh.n_nodes)
    tau = RegularizationTensor(tau_x=1e-2, tau_y=1e-3, tau_z=1.0)

    out = update_field(field, velocity, tau, UpdateParams(), box_mesh)
    out_moved = update_field(moved, velocity[perm], tau, UpdateParams(), other)
    npt.assert_allclose(out_moved.values, out.values[perm], rtol=1e-10, atol=1e-12)
