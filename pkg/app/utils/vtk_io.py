"""Lectura y escritura de VTK legacy ASCII (UNSTRUCTURED_GRID, hexaedros)."""
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from app.utils.files import atomic_path

VTK_HEXAHEDRON = 12


@dataclass
class VtkData:
    points: np.ndarray
    cells: np.ndarray
    point_data: Dict[str, np.ndarray] = field(default_factory=dict)
    cell_data: Dict[str, np.ndarray] = field(default_factory=dict)
    title: str = ""


def _check(points, cells, point_data, cell_data):
    n_points, n_cells = len(points), len(cells)
    if cells.ndim != 2 or cells.shape[1] != 8:
        raise ValueError("las celdas deben ser hexaedros de 8 nodos")
    if n_cells and (cells.min() < 0 or cells.max() >= n_points):
        raise ValueError("conectividad fuera de rango")
    for name, values in point_data.items():
        if len(values) != n_points:
            raise ValueError(f"POINT_DATA '{name}': {len(values)} valores, se esperaban {n_points}")
    for name, values in cell_data.items():
        if len(values) != n_cells:
            raise ValueError(f"CELL_DATA '{name}': {len(values)} valores, se esperaban {n_cells}")


def _scalar_block(fh, name, values):
    integer = np.issubdtype(np.asarray(values).dtype, np.integer)
    fh.write(f"SCALARS {name} {'int' if integer else 'double'} 1\n")
    fh.write("LOOKUP_TABLE default\n")
    fmt = "%d" if integer else "%.9g"
    np.savetxt(fh, np.asarray(values).reshape(-1, 1), fmt=fmt)


def write_vtk(path, points, cells, point_data: Optional[dict] = None, cell_data: Optional[dict] = None,
              title: str = "harvester"):
    """Escribe la malla y los campos; valida todos los conteos antes de tocar el disco"""
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    point_data = point_data or {}
    cell_data = cell_data or {}
    _check(points, cells, point_data, cell_data)

    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="ascii", newline="\n") as fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write(f"{title.splitlines()[0] if title else 'harvester'}\n")
            fh.write("ASCII\n")
            fh.write("DATASET UNSTRUCTURED_GRID\n")
            fh.write(f"POINTS {len(points)} double\n")
            np.savetxt(fh, points, fmt="%.9g")
            fh.write(f"CELLS {len(cells)} {9 * len(cells)}\n")
            np.savetxt(fh, np.column_stack([np.full(len(cells), 8), cells]), fmt="%d")
            fh.write(f"CELL_TYPES {len(cells)}\n")
            np.savetxt(fh, np.full((len(cells), 1), VTK_HEXAHEDRON), fmt="%d")
            if cell_data:
                fh.write(f"CELL_DATA {len(cells)}\n")
                for name, values in cell_data.items():
                    _scalar_block(fh, name, values)
            if point_data:
                fh.write(f"POINT_DATA {len(points)}\n")
                for name, values in point_data.items():
                    _scalar_block(fh, name, values)


def read_vtk(path) -> VtkData:
    with open(path, "r", encoding="ascii") as fh:
        tokens_by_line = [line.split() for line in fh]
    if not tokens_by_line or not tokens_by_line[0] or tokens_by_line[0][0] != "#":
        raise ValueError(f"{path}: no es un archivo VTK legacy")
    title = " ".join(tokens_by_line[1]) if len(tokens_by_line) > 1 else ""
    lines = [t for t in tokens_by_line[2:] if t]

    def numbers(start, count, dtype):
        flat = []
        i = start
        while len(flat) < count:
            flat.extend(lines[i])
            i += 1
        return np.asarray(flat[:count], dtype=dtype), i

    data = VtkData(points=np.zeros((0, 3)), cells=np.zeros((0, 8), dtype=np.int64), title=title)
    target = None
    i = 0
    while i < len(lines):
        head = lines[i]
        key = head[0].upper()
        if key == "POINTS":
            values, i = numbers(i + 1, 3 * int(head[1]), float)
            data.points = values.reshape(-1, 3)
            continue
        if key == "CELLS":
            values, i = numbers(i + 1, int(head[2]), np.int64)
            data.cells = values.reshape(int(head[1]), 9)[:, 1:]
            continue
        if key == "CELL_TYPES":
            _, i = numbers(i + 1, int(head[1]), np.int64)
            continue
        if key == "CELL_DATA":
            target = ("cell", int(head[1]))
        elif key == "POINT_DATA":
            target = ("point", int(head[1]))
        elif key == "SCALARS":
            if target is None:
                raise ValueError(f"{path}: SCALARS sin bloque de datos")
            dtype = np.int64 if head[2] == "int" else float
            values, i = numbers(i + 2, target[1], dtype)
            (data.cell_data if target[0] == "cell" else data.point_data)[head[1]] = values
            continue
        i += 1
    return data
