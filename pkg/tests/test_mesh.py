import numpy as np
import numpy.testing as npt
import pytest

from conftest import tiny_domain
from app.models.errors import MeshError
from app.models.mesh import (DomainConfig, Region, Resolution, build_benchmark_mesh, build_box_mesh,
                             neighbor_below, region_summary)


def benchmark_domain(resolution):
    return DomainConfig(plate_side_length=500.0, pe_thickness=4.0, sb_thickness=36.0,
                        clamp_strip_width=20.0, weight_square_side=20.0, weight_thickness=40.0,
                        resolution=resolution)


FULL = Resolution(clamp_x=2, plate_x=25, plate_y=50, weight_x=1, weight_y=2, sb_z=4, pe_z=2,
                  sb_z_fine=1, sb_fine_thickness=2.0)


def test_tiny_counts(tiny_mesh):
    assert tiny_mesh.n_elements == 16
    assert tiny_mesh.n_nodes == 45
    summary = region_summary(tiny_mesh)
    assert summary["PE_DESIGN"]["elements"] == 4
    assert summary["SB_DESIGN"]["elements"] == 4
    assert summary["PE_NONDESIGN"]["elements"] == 2
    assert summary["SB_NONDESIGN"]["elements"] == 2
    assert summary["WEIGHT"]["elements"] == 4


def test_regions_partition_the_domain(tiny_mesh):
    assert set(np.unique(tiny_mesh.element_tags)) <= {int(r) for r in Region}
    volumes = tiny_mesh.element_volumes()
    assert np.all(volumes > 0)
    # franja + placa + masa de ancho y alto completos
    npt.assert_allclose(volumes.sum(), 9.0 * 4.0 * 1.5)


def test_tiny_node_sets(tiny_mesh):
    coords = tiny_mesh.coords
    clamp = tiny_mesh.node_sets["CLAMP"]
    assert len(clamp) == 6
    npt.assert_allclose(coords[clamp, 0], 0.0)
    assert np.all(coords[clamp, 2] <= 1.0)

    gamma = tiny_mesh.node_sets["GAMMA_XI"]
    assert len(gamma) == 9
    npt.assert_allclose(coords[gamma, 2], 0.0)

    ground = tiny_mesh.node_sets["PZT_GROUND"]
    assert len(ground) == 12
    npt.assert_allclose(coords[ground, 2], tiny_mesh.z_interface)
    assert tiny_mesh.z_interface == pytest.approx(1.0)
    assert tiny_mesh.plate_extent == pytest.approx(4.0)


def test_neighbor_below(tiny_mesh):
    bottom = int(np.flatnonzero(tiny_mesh.lattice[:, 2] == 0)[0])
    assert neighbor_below(tiny_mesh, bottom) is None
    top = int(np.flatnonzero(tiny_mesh.lattice[:, 2] == 2)[0])
    lower = neighbor_below(tiny_mesh, top)
    npt.assert_array_equal(tiny_mesh.lattice[lower, :2], tiny_mesh.lattice[top, :2])
    assert tiny_mesh.lattice[lower, 2] == 1
    with pytest.raises(IndexError):
        neighbor_below(tiny_mesh, tiny_mesh.n_nodes)


def test_full_benchmark_counts():
    mesh = build_benchmark_mesh(benchmark_domain(FULL))
    assert mesh.n_elements == 27 * 50 * 7 + 2 * 7
    assert mesh.n_nodes == 28 * 51 * 8 + 3 * 8
    assert mesh.z_interface == pytest.approx(36.0e-3)
    npt.assert_allclose(mesh.coords[:, 0].max(), 0.540)
    summary = region_summary(mesh)
    assert summary["WEIGHT"]["elements"] == 14
    npt.assert_allclose(summary["WEIGHT"]["volume"], 20e-3 * 20e-3 * 40e-3)


def test_coarse_benchmark_conforms():
    mesh = build_benchmark_mesh(benchmark_domain(FULL.coarsened(2)))
    assert mesh.n_elements == 13 * 25 * 4 + 4
    assert region_summary(mesh)["WEIGHT"]["elements"] == 4


def test_weight_off_lattice_reports_interface():
    with pytest.raises(MeshError) as err:
        build_benchmark_mesh(tiny_domain(weight_square_side=3.0))
    assert err.value.interface == "interfaz masa/placa"


def test_weight_top_off_lattice_reports_interface():
    with pytest.raises(MeshError) as err:
        build_benchmark_mesh(tiny_domain(weight_thickness=1.2))
    assert err.value.interface == "cara superior de la masa"


def test_invalid_geometry():
    with pytest.raises(MeshError):
        tiny_domain(pe_thickness=-1.0)
    with pytest.raises(MeshError):
        tiny_domain(resolution=Resolution(clamp_x=1, plate_x=0, plate_y=2, weight_x=1, weight_y=2,
                                          sb_z=1, pe_z=1))


def test_box_mesh_layers(box_mesh):
    assert box_mesh.n_nodes == 100
    assert box_mesh.n_elements == 48
    assert np.sum(box_mesh.element_mask(Region.PE_DESIGN)) == 16
    assert box_mesh.z_interface == pytest.approx(2.0)
    assert len(box_mesh.node_sets["CLAMP"]) == 15


def test_box_mesh_without_piezo():
    mesh = build_box_mesh(10.0, 2.0, 1.0, 0.0, 4, 2, 2, 0)
    assert mesh.z_interface is None
    assert len(mesh.node_sets["PZT_GROUND"]) == 0
    npt.assert_allclose(np.unique(mesh.coords[:, 2]), [0.0, 0.5, 1.0])
