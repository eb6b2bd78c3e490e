"""Campo ficticio ξ: difusión anisótropa que marca las columnas con sustrato debajo."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from app.models.element import N_GP, assemble_diffusion, element_groups, gauss_values
from app.models.errors import FictitiousFieldError
from app.models.level_set import LevelSetField
from app.models.materials import HeavisideParams, complementary, smoothed_heaviside
from app.models.mesh import PE_FAMILY, Mesh, Region

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class XiConfig:
    # None: activo en modo de dos campos, inactivo en modo de campo único
    enabled: Optional[bool] = None
    kappa_x: float = 1e-4
    kappa_y: float = 1e-4
    kappa_z: float = 1.0
    xi_source: float = 1.0
    xi_sink: float = 1.0
    penalty: Optional[float] = None

    def __post_init__(self):
        if not self.kappa_z > 0:
            raise FictitiousFieldError("kappa_z debe ser positivo")
        if self.kappa_x < 0 or self.kappa_y < 0:
            raise FictitiousFieldError("kappa_x y kappa_y deben ser >= 0")
        if not (self.xi_source > 0 and self.xi_sink > 0):
            raise FictitiousFieldError("xi_source y xi_sink deben ser positivos")
        if self.penalty is not None and self.penalty < 0:
            raise FictitiousFieldError("penalty debe ser >= 0")

    def resolved_penalty(self, mesh: Mesh) -> float:
        if self.penalty is not None:
            return self.penalty
        return 1e2 * self.kappa_z / mesh.sb_thickness ** 2


@dataclass(frozen=True, eq=False)
class XiField:
    values: np.ndarray
    config: XiConfig

    def within_bounds(self) -> bool:
        tol = 1e-6 * (self.config.xi_source + self.config.xi_sink)
        return (self.values.min() >= -self.config.xi_sink - tol
                and self.values.max() <= self.config.xi_source + tol)


def element_h_ps(mesh: Mesh, d: float) -> np.ndarray:
    """h(φ_ps) por elemento: 1 en la familia PE, d en el resto"""
    return np.where(mesh.element_mask(*PE_FAMILY), 1.0, d)


def solve_xi(mesh: Mesh, field_s: LevelSetField, config: XiConfig,
             heaviside: HeavisideParams = HeavisideParams()) -> XiField:
    d = heaviside.d
    penalty = config.resolved_penalty(mesh)
    h_sp = complementary(element_h_ps(mesh, d), d)
    chi_s = smoothed_heaviside(gauss_values(mesh, field_s.values), heaviside)

    stiffness = assemble_diffusion(mesh, [config.kappa_x, config.kappa_y, config.kappa_z])
    reaction = np.zeros(mesh.n_nodes)
    source = np.zeros(mesh.n_nodes)
    for group in element_groups(mesh):
        members = group.elements
        conn = mesh.elements[members]
        weight = penalty * h_sp[members]
        np.add.at(reaction, conn, weight[:, None] * group.lumped[None, :])
        target = config.xi_source * (2.0 * chi_s[members] - 1.0)
        np.add.at(source, conn, weight[:, None] * (target @ group.Nw))

    system = (stiffness + sp.diags(reaction)).tocsr()
    values = np.zeros(mesh.n_nodes)
    fixed = np.asarray(mesh.node_sets["GAMMA_XI"], dtype=np.int64)
    values[fixed] = -config.xi_sink
    free = np.setdiff1d(np.arange(mesh.n_nodes), fixed)
    if penalty == 0.0 and len(fixed) == 0:
        raise FictitiousFieldError("sistema de ξ singular: sin penalización ni frontera Dirichlet")

    A = system[free][:, free]
    b = source[free] - system[free][:, fixed] @ values[fixed]
    if np.any(A.diagonal() <= 0.0):
        raise FictitiousFieldError("sistema de ξ singular: nodos sin difusión ni reacción")
    try:
        values[free] = spla.splu(A.tocsc()).solve(b)
    except RuntimeError as exc:
        raise FictitiousFieldError(f"sistema de ξ singular: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise FictitiousFieldError("sistema de ξ singular: solución no finita")

    xi = XiField(values=values, config=config)
    if not xi.within_bounds():
        logger.warning("ξ fuera de [-ξ0, ξs]: min=%.4g max=%.4g", values.min(), values.max())
    logger.debug("ξ resuelto: min=%.4g max=%.4g", values.min(), values.max())
    return xi


def scaled_xi(values, config: XiConfig):
    return np.clip(np.asarray(values) / config.xi_source, -1.0, 1.0)


def effective_pe_characteristic(field_p: LevelSetField, xi: Optional[XiField],
                                params: HeavisideParams) -> np.ndarray:
    """χ_p nodal = h(φ_pψ)·h(ξ'); el material no diseñable no se restringe"""
    chi = smoothed_heaviside(field_p.values, params)
    if xi is None:
        return chi
    xi_factor = smoothed_heaviside(scaled_xi(xi.values, xi.config), params)
    nondesign = ~field_p.design_mask & (field_p.frozen_values > 0)
    return chi * np.where(nondesign, 1.0, xi_factor)


def xi_gauss_factor(mesh: Mesh, xi: Optional[XiField], params: HeavisideParams) -> np.ndarray:
    """h(ξ') en puntos de Gauss, (E, 8); solo restringe D_pe diseñable"""
    factor = np.ones((mesh.n_elements, len(N_GP)))
    if xi is None:
        return factor
    design = mesh.element_mask(Region.PE_DESIGN)
    xi_gp = gauss_values(mesh, scaled_xi(xi.values, xi.config))
    factor[design] = smoothed_heaviside(xi_gp[design], params)
    return factor


def unsupported_piezo_fraction(mesh: Mesh, chi_p: np.ndarray, chi_s: np.ndarray) -> float:
    """Fracción de elementos de D_pe con piezo efectivo (>0.5) sin sustrato debajo en su columna"""
    pe = np.flatnonzero(mesh.element_mask(Region.PE_DESIGN))
    if len(pe) == 0:
        return 0.0
    sb = np.flatnonzero(mesh.element_mask(Region.SB_DESIGN, Region.SB_NONDESIGN, Region.WEIGHT))
    column_of = mesh.lattice[mesh.elements[:, 0], :2]
    supported = set()
    sb_avg = chi_s[mesh.elements[sb]].mean(axis=1)
    for e in sb[sb_avg >= 0.5]:
        supported.add(tuple(column_of[e]))
    pe_avg = chi_p[mesh.elements[pe]].mean(axis=1)
    loaded = pe[pe_avg > 0.5]
    floating = sum(1 for e in loaded if tuple(column_of[e]) not in supported)
    return floating / len(pe)
