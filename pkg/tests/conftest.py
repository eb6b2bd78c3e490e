import os
import textwrap

import pytest

from app.models.materials import MaterialSet
from app.models.mesh import DomainConfig, Resolution, build_benchmark_mesh, build_box_mesh
from app.models.objectives import ObjectiveConfig
from app.models.optimizer import RunConfig
from app.models.fictitious_field import XiConfig

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "config")

slow = pytest.mark.skipif(os.environ.get("HARVESTER_SLOW_TESTS") != "1",
                          reason="definir HARVESTER_SLOW_TESTS=1")

# Placa de 2x2 elementos con franja y masa de ancho completo; longitudes en metros.
TINY_YAML = textwrap.dedent("""\
    name: tiny
    domain:
      plate_side_length: 4.0
      pe_thickness: 0.5
      sb_thickness: 1.0
      clamp_strip_width: 1.0
      weight_square_side: 4.0
      weight_thickness: 1.5
      length_scale: 1.0
      resolution: {clamp_x: 1, plate_x: 2, plate_y: 2, weight_x: 1, weight_y: 2, sb_z: 1, pe_z: 1}
    objective:
      n_modes: 2
      target_frequencies_hz: [5.0, 20.0]
    update: {dt: 0.1}
    max_iterations: 2
    snapshot_every: 1
    """)


def tiny_domain(**overrides):
    values = dict(plate_side_length=4.0, pe_thickness=0.5, sb_thickness=1.0, clamp_strip_width=1.0,
                  weight_square_side=4.0, weight_thickness=1.5, length_scale=1.0,
                  resolution=Resolution(clamp_x=1, plate_x=2, plate_y=2, weight_x=1, weight_y=2,
                                        sb_z=1, pe_z=1))
    values.update(overrides)
    return DomainConfig(**values)


def tiny_run_config(targets=(30.0, 120.0), **overrides):
    values = dict(domain=tiny_domain(),
                  objective=ObjectiveConfig(n_modes=len(targets), target_frequencies=tuple(targets),
                                            sensitivity_mode="substitute"),
                  xi=XiConfig(enabled=False))
    values.update(overrides)
    return RunConfig(**values)


@pytest.fixture
def materials():
    return MaterialSet()


@pytest.fixture
def tiny_mesh():
    return build_benchmark_mesh(tiny_domain())


@pytest.fixture
def box_mesh():
    """Caja de 100 nodos: 4x4 en planta, dos capas de sustrato y una de PZT"""
    return build_box_mesh(4.0, 4.0, 2.0, 1.0, 4, 4, 2, 1)


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(TINY_YAML, encoding="utf-8")
    return path
