"""Dominio de diseño fijo: malla hexaédrica estructurada con regiones etiquetadas.

El eje x va del empotramiento hacia la masa, y es el ancho de la placa y z el
espesor (sustrato abajo, película PZT arriba).
"""
import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Mapping, Optional

import numpy as np

from app.models.errors import MeshError

logger = logging.getLogger(__name__)

_TOL = 1e-9


class Region(IntEnum):
    PE_DESIGN = 1
    SB_DESIGN = 2
    PE_NONDESIGN = 3
    SB_NONDESIGN = 4
    WEIGHT = 5


PE_FAMILY = (Region.PE_DESIGN, Region.PE_NONDESIGN)
SB_FAMILY = (Region.SB_DESIGN, Region.SB_NONDESIGN, Region.WEIGHT)

# Orden de nodos del hexaedro (igual que VTK_HEXAHEDRON)
HEX_CORNERS = np.array([
    [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
])


@dataclass(frozen=True)
class Resolution:
    """Número de elementos por eje y por región"""
    clamp_x: int
    plate_x: int
    plate_y: int
    weight_x: int
    weight_y: int
    sb_z: int
    pe_z: int
    sb_z_fine: int = 0
    sb_fine_thickness: float = 0.0
    clamp_y: Optional[int] = None

    def coarsened(self, factor: int) -> "Resolution":
        def cut(n):
            return max(1, n // factor) if n > 0 else 0
        return replace(
            self,
            clamp_x=cut(self.clamp_x), plate_x=cut(self.plate_x), plate_y=cut(self.plate_y),
            weight_x=cut(self.weight_x), weight_y=cut(self.weight_y),
            sb_z=cut(self.sb_z), pe_z=cut(self.pe_z), sb_z_fine=cut(self.sb_z_fine),
            clamp_y=None if self.clamp_y is None else cut(self.clamp_y),
        )


@dataclass(frozen=True)
class DomainConfig:
    plate_side_length: float
    pe_thickness: float
    sb_thickness: float
    clamp_strip_width: float
    weight_square_side: float
    weight_thickness: float
    resolution: Resolution
    weight_density_factor: float = 100.0
    # metros por unidad de longitud del archivo de configuración
    length_scale: float = 1e-3

    def __post_init__(self):
        for name in ("plate_side_length", "pe_thickness", "sb_thickness", "clamp_strip_width",
                     "weight_square_side", "weight_thickness", "weight_density_factor",
                     "length_scale"):
            if not getattr(self, name) > 0:
                raise MeshError(f"{name} debe ser estrictamente positivo")
        res = self.resolution
        for name in ("clamp_x", "plate_x", "plate_y", "weight_x", "weight_y", "sb_z", "pe_z"):
            if getattr(res, name) < 1:
                raise MeshError(f"resolution.{name} debe ser >= 1")
        if (res.sb_z_fine > 0) != (res.sb_fine_thickness > 0):
            raise MeshError("sb_z_fine y sb_fine_thickness deben definirse juntos",
                            interface="capa fina del sustrato")
        if res.sb_fine_thickness >= self.sb_thickness:
            raise MeshError("la capa fina debe ser más delgada que el sustrato",
                            interface="capa fina del sustrato")


@dataclass(frozen=True, eq=False)
class Mesh:
    coords: np.ndarray
    elements: np.ndarray
    element_tags: np.ndarray
    node_sets: Mapping[str, np.ndarray]
    lattice: np.ndarray
    below: np.ndarray
    # plano PZT/sustrato (m); None si la malla no tiene capa PZT
    z_interface: Optional[float]
    plate_extent: float
    sb_thickness: float
    weight_density_factor: float = 100.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.coords)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_mask(self, *tags) -> np.ndarray:
        return np.isin(self.element_tags, [int(t) for t in tags])

    def nodes_touching(self, element_mask: np.ndarray) -> np.ndarray:
        """Máscara de nodos que pertenecen a algún elemento seleccionado"""
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.elements[element_mask].ravel()] = True
        return mask

    @property
    def column(self) -> np.ndarray:
        if "column" not in self._cache:
            _, col = np.unique(self.lattice[:, :2], axis=0, return_inverse=True)
            self._cache["column"] = col.ravel()
        return self._cache["column"]

    def element_volumes(self) -> np.ndarray:
        xyz = self.coords[self.elements]
        return np.prod(xyz.max(axis=1) - xyz.min(axis=1), axis=1)


def _segment_axis(segments):
    """Concatena tramos (inicio, fin, n) en coordenadas de la retícula"""
    used = [seg for seg in segments if seg[2] > 0]
    pts = [used[0][0]]
    for start, end, count in used:
        pts.extend(np.linspace(start, end, count + 1)[1:])
    return np.asarray(pts, dtype=float)


def _on_lattice(axis, value):
    hits = np.flatnonzero(np.isclose(axis, value, rtol=0.0, atol=_TOL * max(1.0, abs(value))))
    return int(hits[0]) if len(hits) else None


def _assemble_lattice(xs, ys, zs, tags, scale):
    """Construye nodos y conectividad a partir de las celdas etiquetadas (tags < 0: sin celda)"""
    nx, ny, nz = len(xs) - 1, len(ys) - 1, len(zs) - 1
    ci, cj, ck = np.nonzero(tags >= 0)
    # orden determinista: z más lento, luego y, luego x
    order = np.lexsort((ci, cj, ck))
    ci, cj, ck = ci[order], cj[order], ck[order]
    cell_tags = tags[ci, cj, ck]

    corner_ijk = np.stack([ci, cj, ck], axis=1)[:, None, :] + HEX_CORNERS[None, :, :]
    flat = (corner_ijk[..., 2] * (ny + 1) + corner_ijk[..., 1]) * (nx + 1) + corner_ijk[..., 0]
    used, inverse = np.unique(flat.ravel(), return_inverse=True)
    elements = inverse.reshape(-1, 8)

    li = used % (nx + 1)
    lj = (used // (nx + 1)) % (ny + 1)
    lk = used // ((nx + 1) * (ny + 1))
    lattice = np.stack([li, lj, lk], axis=1)
    coords = np.stack([xs[li], ys[lj], zs[lk]], axis=1) * scale

    lookup = np.full((nx + 1) * (ny + 1) * (nz + 1), -1, dtype=np.int64)
    lookup[used] = np.arange(len(used))
    below = np.full(len(used), -1, dtype=np.int64)
    has_below = lk > 0
    below[has_below] = lookup[used[has_below] - (nx + 1) * (ny + 1)]
    return coords, elements, cell_tags.astype(np.int64), lattice, below


def _finish(coords, elements, tags, lattice, below, node_sets, z_interface, plate_extent,
            sb_thickness, weight_density_factor):
    for arr in (coords, elements, tags, lattice, below, *node_sets.values()):
        arr.flags.writeable = False
    return Mesh(coords=coords, elements=elements, element_tags=tags, node_sets=dict(node_sets),
                lattice=lattice, below=below, z_interface=z_interface,
                plate_extent=plate_extent, sb_thickness=sb_thickness,
                weight_density_factor=weight_density_factor)


def _node_sets(coords, elements, tags, lattice, z_interface, clamp_mask):
    def touching(*regions):
        mask = np.zeros(len(coords), dtype=bool)
        mask[elements[np.isin(tags, [int(r) for r in regions])].ravel()] = True
        return mask

    tol = _TOL * max(1.0, np.abs(coords).max())
    gamma = touching(Region.SB_DESIGN) & (lattice[:, 2] == 0)
    if z_interface is not None:
        ground = touching(*PE_FAMILY) & np.isclose(coords[:, 2], z_interface, atol=tol, rtol=0.0)
    else:
        ground = np.zeros(len(coords), dtype=bool)
    return {
        "CLAMP": np.flatnonzero(clamp_mask),
        "GAMMA_XI": np.flatnonzero(gamma),
        "PZT_GROUND": np.flatnonzero(ground),
    }


def build_benchmark_mesh(config: DomainConfig) -> Mesh:
    """Dominio completo: franja de empotramiento, placa D_pe/D_sb y masa"""
    res = config.resolution
    s, L, a = config.clamp_strip_width, config.plate_side_length, config.weight_square_side
    t_sb, t_pe, t_w = config.sb_thickness, config.pe_thickness, config.weight_thickness

    clamp_y = res.plate_y if res.clamp_y is None else res.clamp_y
    if clamp_y != res.plate_y:
        raise MeshError(f"clamp_y={clamp_y} no coincide con plate_y={res.plate_y}",
                        interface="interfaz empotramiento/placa")

    xs = _segment_axis([(0.0, s, res.clamp_x), (s, s + L, res.plate_x), (s + L, s + L + a, res.weight_x)])
    ys = _segment_axis([(0.0, L, res.plate_y)])
    fine = res.sb_fine_thickness
    zs = _segment_axis([(0.0, t_sb - fine, res.sb_z), (t_sb - fine, t_sb, res.sb_z_fine),
                        (t_sb, t_sb + t_pe, res.pe_z)])

    y_lo, y_hi = 0.5 * (L - a), 0.5 * (L + a)
    j_lo, j_hi = _on_lattice(ys, y_lo), _on_lattice(ys, y_hi)
    if a > L or j_lo is None or j_hi is None:
        raise MeshError(f"los bordes y={y_lo:g}, {y_hi:g} de la masa no caen sobre la retícula de la placa",
                        interface="interfaz masa/placa")
    if j_hi - j_lo != res.weight_y:
        raise MeshError(f"weight_y={res.weight_y} pero la placa tiene {j_hi - j_lo} elementos en ese tramo",
                        interface="interfaz masa/placa")
    if t_w > t_sb + t_pe + _TOL:
        raise MeshError("la masa no puede superar el espesor total", interface="cara superior de la masa")
    k_top = _on_lattice(zs, t_w)
    if k_top is None:
        raise MeshError(f"weight_thickness={t_w:g} no coincide con ningún plano z de la retícula",
                        interface="cara superior de la masa")

    xc = 0.5 * (xs[:-1] + xs[1:])
    yc = 0.5 * (ys[:-1] + ys[1:])
    zc = 0.5 * (zs[:-1] + zs[1:])
    X, Y, Z = np.meshgrid(xc, yc, zc, indexing="ij")
    substrate = Z < t_sb
    tags = np.full(X.shape, -1, dtype=np.int64)
    in_clamp = X < s
    in_plate = (X > s) & (X < s + L)
    in_weight = (X > s + L) & (Y > y_lo) & (Y < y_hi) & (Z < t_w)
    tags[in_clamp & substrate] = Region.SB_NONDESIGN
    tags[in_clamp & ~substrate] = Region.PE_NONDESIGN
    tags[in_plate & substrate] = Region.SB_DESIGN
    tags[in_plate & ~substrate] = Region.PE_DESIGN
    tags[in_weight] = Region.WEIGHT

    scale = config.length_scale
    coords, elements, cell_tags, lattice, below = _assemble_lattice(xs, ys, zs, tags, scale)
    z_interface = t_sb * scale

    # cara del silicio no diseñable opuesta a D_sb
    sb_strip = np.zeros(len(coords), dtype=bool)
    sb_strip[elements[cell_tags == Region.SB_NONDESIGN].ravel()] = True
    clamp_mask = sb_strip & (lattice[:, 0] == 0)

    node_sets = _node_sets(coords, elements, cell_tags, lattice, z_interface, clamp_mask)
    mesh = _finish(coords, elements, cell_tags, lattice, below, node_sets, z_interface,
                   plate_extent=L * scale, sb_thickness=t_sb * scale,
                   weight_density_factor=config.weight_density_factor)
    logger.info("Malla de referencia: %d nodos, %d elementos", mesh.n_nodes, mesh.n_elements)
    return mesh


def build_box_mesh(length, width, sb_thickness, pe_thickness, nx, ny, nz_sb, nz_pe,
                   design=True, clamp=True, length_scale=1.0, weight_density_factor=100.0) -> Mesh:
    """Placa bicapa sin franja ni masa; CLAMP es la cara x = 0 del sustrato"""
    if nz_sb + nz_pe < 1 or nx < 1 or ny < 1:
        raise MeshError("la caja necesita al menos un elemento por eje")
    xs = _segment_axis([(0.0, length, nx)])
    ys = _segment_axis([(0.0, width, ny)])
    zs = _segment_axis([(0.0, sb_thickness, nz_sb), (sb_thickness, sb_thickness + pe_thickness, nz_pe)])
    zc = 0.5 * (zs[:-1] + zs[1:])
    layer = np.where(zc < sb_thickness,
                     Region.SB_DESIGN if design else Region.SB_NONDESIGN,
                     Region.PE_DESIGN if design else Region.PE_NONDESIGN)
    tags = np.broadcast_to(layer[None, None, :], (nx, ny, len(zc))).astype(np.int64)

    coords, elements, cell_tags, lattice, below = _assemble_lattice(xs, ys, zs, tags, length_scale)
    z_interface = sb_thickness * length_scale if nz_pe > 0 else None
    if clamp:
        top = sb_thickness if nz_sb > 0 else sb_thickness + pe_thickness
        clamp_mask = (lattice[:, 0] == 0) & (coords[:, 2] <= top * length_scale * (1 + _TOL) + _TOL)
    else:
        clamp_mask = np.zeros(len(coords), dtype=bool)
    node_sets = _node_sets(coords, elements, cell_tags, lattice, z_interface, clamp_mask)
    return _finish(coords, elements, cell_tags, lattice, below, node_sets, z_interface,
                   plate_extent=max(length, width) * length_scale,
                   sb_thickness=(sb_thickness if nz_sb > 0 else pe_thickness) * length_scale,
                   weight_density_factor=weight_density_factor)


def neighbor_below(mesh: Mesh, node: int) -> Optional[int]:
    if node < 0 or node >= mesh.n_nodes:
        raise IndexError(f"nodo {node} fuera de rango")
    below = int(mesh.below[node])
    return None if below < 0 else below


def region_summary(mesh: Mesh) -> dict:
    """Elementos y volumen por región"""
    volumes = mesh.element_volumes()
    summary = {}
    for region in Region:
        mask = mesh.element_tags == region
        summary[region.name] = {"elements": int(mask.sum()), "volume": float(volumes[mask].sum())}
    return summary
