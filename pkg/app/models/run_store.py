"""Directorio de salida de una corrida: historial CSV, instantáneas VTK, resultado y resumen."""
import logging
import os

import numpy as np
import pandas as pd
import yaml

from app.models.mesh import Mesh
from app.models.objectives import ObjectiveReport, history_columns
from app.utils.files import atomic_path, atomic_write_text
from app.utils.vtk_io import read_vtk, write_vtk

logger = logging.getLogger(__name__)

HISTORY_FILE = "history.csv"
RESULT_FILE = "result.vtk"
FIELDS_FILE = "result_fields.npz"
SUMMARY_FILE = "summary.txt"
METADATA_FILE = "run.yaml"


def write_mesh_vtk(path, mesh: Mesh, point_data=None, title="harvester"):
    write_vtk(path, mesh.coords, mesh.elements, point_data=point_data,
              cell_data={"region": mesh.element_tags.astype(np.int64)}, title=title)


class RunStore:
    def __init__(self, output_dir, n_modes):
        self.output_dir = output_dir
        self.n_modes = n_modes
        self.history_rows = 0

    def path(self, name):
        return os.path.join(self.output_dir, name)

    def setup(self):
        """Crea el directorio y descarta un historial anterior"""
        try:
            os.makedirs(self.output_dir, exist_ok=True)
        except OSError as e:
            logger.error("No se pudo crear el directorio de salida %s: %s", self.output_dir, e)
            raise
        if os.path.exists(self.path(HISTORY_FILE)):
            os.remove(self.path(HISTORY_FILE))
        self.history_rows = 0

    def append_history(self, report: ObjectiveReport):
        """Agrega una fila al CSV; el encabezado va solo con la primera"""
        frame = pd.DataFrame([report.as_row()], columns=history_columns(self.n_modes))
        with open(self.path(HISTORY_FILE), "a", encoding="utf-8", newline="") as fh:
            frame.to_csv(fh, index=False, header=self.history_rows == 0)
        self.history_rows += 1

    def write_snapshot(self, iteration, mesh: Mesh, point_data):
        path = self.path(f"snapshot_{iteration}.vtk")
        write_mesh_vtk(path, mesh, point_data, title=f"iteracion {iteration}")
        logger.debug("Instantánea escrita: %s", path)
        return path

    def write_result(self, mesh: Mesh, point_data, lam, iteration):
        write_mesh_vtk(self.path(RESULT_FILE), mesh, point_data, title=f"resultado iteracion {iteration}")
        arrays = {name: np.asarray(values) for name, values in point_data.items()}
        with atomic_path(self.path(FIELDS_FILE)) as tmp:
            with open(tmp, "wb") as fh:
                np.savez(fh, lam=np.float64(lam), iteration=np.int64(iteration), **arrays)

    def write_summary(self, text):
        atomic_write_text(self.path(SUMMARY_FILE), text)

    def write_metadata(self, config):
        atomic_write_text(self.path(METADATA_FILE), yaml.safe_dump(run_metadata(config), sort_keys=False))


def run_metadata(config):
    """Datos de la condición de la corrida que usa el reporte comparativo"""
    return {
        "name": config.name,
        "mode": config.mode,
        "xi": config.xi_enabled,
        "tau_pe": [float(v) for v in config.tau_pe.as_array()],
        "tau_sb": [float(v) for v in config.tau_sb.as_array()],
        "voltage_min": config.voltage_min,
        "alpha_pe": config.objective.alpha_pe,
        "alpha_sb": config.objective.alpha_sb,
        "n_modes": config.objective.n_modes,
        "summary_window": config.summary_window,
    }


def load_history(output_dir) -> pd.DataFrame:
    path = os.path.join(output_dir, HISTORY_FILE)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no hay historial en {output_dir}")
    return pd.read_csv(path)


def load_fields(path):
    """Campos nodales desde un .npz de resultado, un .vtk o un directorio de corrida"""
    if os.path.isdir(path):
        npz = os.path.join(path, FIELDS_FILE)
        path = npz if os.path.exists(npz) else os.path.join(path, RESULT_FILE)
    if path.endswith(".npz"):
        with np.load(path) as data:
            fields = {name: data[name] for name in data.files}
        lam = float(fields.pop("lam", 0.0))
        fields.pop("iteration", None)
        return fields, lam
    vtk = read_vtk(path)
    return dict(vtk.point_data), 0.0


def load_metadata(output_dir):
    path = os.path.join(output_dir, METADATA_FILE)
    if not os.path.exists(path):
        return {"name": os.path.basename(os.path.normpath(output_dir))}
    with open(path, "r", encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}
