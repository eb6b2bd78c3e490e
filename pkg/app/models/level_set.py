"""Campos de conjunto de nivel φ_pψ y φ_sψ, actualización por reacción-difusión y métricas de fabricación."""
import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from app.models.element import assemble_diffusion, lumped_volumes
from app.models.errors import LevelSetError
from app.models.materials import HeavisideParams, smoothed_heaviside
from app.models.mesh import PE_FAMILY, SB_FAMILY, Mesh, Region

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegularizationTensor:
    tau_x: float = 0.0
    tau_y: float = 0.0
    tau_z: float = 1e-2

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise LevelSetError("las componentes de tau deben ser finitas y >= 0")
        if not np.any(values > 0):
            raise LevelSetError("al menos una componente de tau debe ser > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.tau_x, self.tau_y, self.tau_z], dtype=float)


@dataclass(frozen=True)
class UpdateParams:
    K_coeff: float = 1.0
    c_norm: float = 2.0
    dt: float = 1.0

    def __post_init__(self):
        if not (self.K_coeff > 0 and self.c_norm > 0 and self.dt > 0):
            raise LevelSetError("K_coeff, c_norm y dt deben ser positivos")


@dataclass(frozen=True, eq=False)
class LevelSetField:
    values: np.ndarray
    design_mask: np.ndarray
    frozen_values: np.ndarray
    # elementos de la región propia (difusión y normalización)
    region_elements: np.ndarray
    name: str = "phi"

    def __post_init__(self):
        n = len(self.values)
        if len(self.design_mask) != n or len(self.frozen_values) != n:
            raise LevelSetError("tamaños inconsistentes en el campo de nivel")
        if np.any(np.abs(self.values) > 1.0 + 1e-12):
            raise LevelSetError(f"{self.name}: valores fuera de [-1, 1]")

    def with_values(self, values) -> "LevelSetField":
        values = np.where(self.design_mask, np.clip(values, -1.0, 1.0), self.frozen_values)
        return replace(self, values=values)


def make_field(mesh: Mesh, family: str, initial: float = 1.0) -> LevelSetField:
    """Crea φ_pψ ('pe'), φ_sψ ('sb') o el campo único compartido ('shared')"""
    if family == "pe":
        own, nondesign, design = PE_FAMILY, (Region.PE_NONDESIGN,), (Region.PE_DESIGN,)
    elif family == "sb":
        own, nondesign, design = SB_FAMILY, (Region.SB_NONDESIGN, Region.WEIGHT), (Region.SB_DESIGN,)
    elif family == "shared":
        own = tuple(Region)
        nondesign = (Region.PE_NONDESIGN, Region.SB_NONDESIGN, Region.WEIGHT)
        design = (Region.PE_DESIGN, Region.SB_DESIGN)
    else:
        raise LevelSetError(f"familia desconocida: {family}")

    solid = mesh.nodes_touching(mesh.element_mask(*nondesign))
    design_mask = mesh.nodes_touching(mesh.element_mask(*design)) & ~solid
    frozen = np.where(solid, 1.0, -1.0)
    values = np.where(design_mask, float(initial), frozen)
    return LevelSetField(values=values, design_mask=design_mask, frozen_values=frozen,
                         region_elements=mesh.element_mask(*own), name=f"phi_{family}")


def characteristic(field: LevelSetField, params: HeavisideParams) -> np.ndarray:
    return smoothed_heaviside(field.values, params)


def normalize_sensitivity(raw, mesh: Mesh, c_norm: float, nodes=None) -> np.ndarray:
    """c~ * raw con c~ = c ∫dΩ / ∫|F'|dΩ (integración nodal concentrada)"""
    raw = np.asarray(raw, dtype=float)
    weights = lumped_volumes(mesh)
    if nodes is not None:
        weights = np.where(nodes, weights, 0.0)
    volume = weights.sum()
    magnitude = np.dot(weights, np.abs(raw))
    if magnitude == 0.0 or not np.isfinite(magnitude):
        raise LevelSetError("gradiente nulo: la sensibilidad se anuló en todo el dominio")
    c_tilde = c_norm * volume / magnitude
    logger.debug("c~ = %.6e", c_tilde)
    return c_tilde * raw


def update_field(field: LevelSetField, sensitivity, tau: RegularizationTensor, params: UpdateParams,
                 mesh: Mesh, length_reference=None) -> LevelSetField:
    """Un paso semi-implícito: difusión implícita, reacción explícita, recorte a [-1, 1]"""
    Lc = length_reference or mesh.plate_extent
    masses = lumped_volumes(mesh, field.region_elements) / Lc ** 3
    laplacian = assemble_diffusion(mesh, tau.as_array(), field.region_elements, coords_scale=Lc)

    phi = field.values
    rhs = masses / params.dt * phi + params.K_coeff * masses * np.asarray(sensitivity, dtype=float)
    system = (sp.diags(masses / params.dt) + params.K_coeff * laplacian).tocsr()

    free = np.flatnonzero(field.design_mask)
    fixed = np.flatnonzero(~field.design_mask)
    if len(free) == 0:
        return field.with_values(phi)
    A_ff = system[free][:, free]
    if np.any(A_ff.diagonal() <= 0.0) or not np.all(np.isfinite(A_ff.data)):
        raise LevelSetError("sistema implícito singular en la actualización del campo")
    b = rhs[free] - system[free][:, fixed] @ field.frozen_values[fixed]
    try:
        solution = spla.splu(A_ff.tocsc()).solve(b)
    except RuntimeError as exc:
        raise LevelSetError(f"sistema implícito singular: {exc}") from exc

    updated = phi.copy()
    updated[free] = solution
    return field.with_values(updated)


def effective_values(field_p: LevelSetField, field_s: LevelSetField, mesh: Mesh):
    """Valor efectivo por nodo (φ_pψ en D_pe, φ_sψ en D_sb) y máscara de nodos de D_pe"""
    if mesh.z_interface is None:
        pe_nodes = np.zeros(mesh.n_nodes, dtype=bool)
    else:
        tol = 1e-9 * max(1.0, abs(mesh.z_interface))
        pe_nodes = (mesh.nodes_touching(mesh.element_mask(*PE_FAMILY))
                    & (mesh.coords[:, 2] >= mesh.z_interface - tol))
    return np.where(pe_nodes, field_p.values, field_s.values), pe_nodes


def manufacturability_metrics(field_p: LevelSetField, field_s: LevelSetField, mesh: Mesh):
    """(N_φ1, N_φ2): fracción de nodos con cambio de signo respecto al nodo inferior"""
    eff, pe_nodes = effective_values(field_p, field_s, mesh)
    upper = np.flatnonzero(mesh.below >= 0)
    lower = mesh.below[upper]
    flips = eff[upper] * eff[lower] < 0.0
    straddle = pe_nodes[upper] & ~pe_nodes[lower]
    total = float(mesh.n_nodes)
    return float(flips.sum()) / total, float((flips & ~straddle).sum()) / total
