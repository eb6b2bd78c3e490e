"""Respuesta forzada por superposición modal, potencial recuperado y voltaje de salida."""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from app.models.element import N_GP, element_groups
from app.models.errors import ResponseError
from app.models.mesh import PE_FAMILY
from app.models.piezo_fem import GlobalSystem, ModeSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExcitationConfig:
    base_acceleration: float = 1.0
    # rad/s; None usa la frecuencia objetivo número eval_target
    eval_frequency: Optional[float] = None
    damping_ratio: float = 0.01
    eval_target: int = 1

    def __post_init__(self):
        if self.eval_frequency is not None and not self.eval_frequency > 0:
            raise ResponseError("eval_frequency debe ser positiva")
        if not self.damping_ratio > 0:
            raise ResponseError("damping_ratio debe ser positivo")
        if self.eval_target < 1:
            raise ResponseError("eval_target empieza en 1")

    def omega_bar(self, targets: Sequence[float]) -> float:
        if self.eval_frequency is not None:
            return float(self.eval_frequency)
        if self.eval_target > len(targets):
            raise ResponseError(f"eval_target={self.eval_target} pero solo hay {len(targets)} objetivos")
        return float(targets[self.eval_target - 1])


@dataclass
class VoltageResult:
    V_E: float
    Q_proxy: float
    C_p_proxy: float
    volume_pe: float
    eps_z: float
    L_z: float


def body_force(system: GlobalSystem, acceleration: float) -> np.ndarray:
    """Carga consistente ρ_eff·a·n_z"""
    mesh, mats, st = system.mesh, system.materials, system.state
    rho = mats.piezo.density * st.w_pe + mats.substrate.density * st.density_factor[:, None] * st.w_sb
    fz = np.zeros(mesh.n_nodes)
    for group in element_groups(mesh):
        members = group.elements
        np.add.at(fz, mesh.elements[members], rho[members] @ group.Nw)
    f = np.zeros(system.n_u)
    f[2::3] = acceleration * fz
    return f


def modal_force(modes: ModeSet, system: GlobalSystem, excitation: ExcitationConfig) -> np.ndarray:
    f = body_force(system, excitation.base_acceleration)
    return modes.u_oc.T @ f


def modal_amplitudes(F, modes: ModeSet, excitation: ExcitationConfig, omega_bar: float) -> np.ndarray:
    omega = np.asarray(modes.omega_oc, dtype=float)
    if np.any(omega <= 0.0):
        raise ResponseError("frecuencia modal nula: modo rígido en la base modal")
    r = omega_bar / omega
    zeta = excitation.damping_ratio
    return np.asarray(F, dtype=float) / (omega * np.sqrt((1.0 - r ** 2) ** 2 + 4.0 * zeta ** 2 * r ** 2))


def superpose(q, modes: ModeSet) -> np.ndarray:
    return modes.u_oc @ np.asarray(q, dtype=float)


def recover_potential(u, system: GlobalSystem) -> np.ndarray:
    """φ_n tal que G φ = Pᵀ u con ceros en PZT_GROUND"""
    phi = np.zeros(system.n_phi)
    fp = system.free_phi
    if len(fp) == 0:
        return phi
    G = system.G[fp][:, fp].tocsc()
    rhs = np.asarray(system.P.T @ np.asarray(u))[fp]
    try:
        phi[fp] = spla.splu(G).solve(rhs)
    except RuntimeError as exc:
        raise ResponseError(f"matriz dieléctrica G singular: {exc}") from exc
    return phi


def piezo_thickness(system: GlobalSystem) -> float:
    mesh = system.mesh
    if mesh.z_interface is None:
        raise ResponseError("la malla no tiene capa piezoeléctrica")
    top = mesh.coords[mesh.nodes_touching(mesh.element_mask(*PE_FAMILY)), 2].max()
    return float(top - mesh.z_interface)


def output_voltage(phi_n, system: GlobalSystem) -> VoltageResult:
    """V_E = |∫χ_p n_z·∇φ_n| / (∫χ_p dΩ / (ε_z L_z²)) con cuadratura de Gauss"""
    mesh = system.mesh
    pe = mesh.element_mask(*PE_FAMILY)
    chi = system.state.chi_p
    phi_n = np.asarray(phi_n, dtype=float)
    numerator = 0.0
    volume = 0.0
    for group in element_groups(mesh):
        members = group.elements[pe[group.elements]]
        if len(members) == 0:
            continue
        Phi = phi_n[system.pot_index[mesh.elements[members]]]
        dphi_dz = Phi @ group.grad[:, :, 2].T
        weights = chi[members] * group.det_w
        numerator += float(np.sum(weights * dphi_dz))
        volume += float(np.sum(weights))
    if volume <= 0.0:
        raise ResponseError("capa piezoeléctrica completamente vacía")
    eps_z = system.materials.coupling.eps_z
    L_z = piezo_thickness(system)
    capacitance = volume / (eps_z * L_z ** 2)
    Q = abs(numerator)
    return VoltageResult(V_E=Q / capacitance, Q_proxy=Q, C_p_proxy=capacitance,
                         volume_pe=volume, eps_z=eps_z, L_z=L_z)


def voltage_constraint(result: VoltageResult, V_min: float) -> float:
    if not V_min > 0:
        raise ResponseError("V_min debe ser positivo")
    return result.volume_pe - result.eps_z * result.L_z ** 2 * result.Q_proxy / V_min


def nodal_potential(phi_n, system: GlobalSystem) -> np.ndarray:
    """Potencial por nodo de la malla (cero fuera de la familia PE)"""
    out = np.zeros(system.mesh.n_nodes)
    has = system.pot_index >= 0
    out[has] = np.asarray(phi_n)[system.pot_index[has]]
    return out


def nodal_gradient_z(phi_n, system: GlobalSystem) -> np.ndarray:
    """∂φ/∂z nodal por promedio ponderado por volumen de los puntos de Gauss"""
    mesh = system.mesh
    pe = mesh.element_mask(*PE_FAMILY)
    acc = np.zeros(mesh.n_nodes)
    vol = np.zeros(mesh.n_nodes)
    phi_n = np.asarray(phi_n, dtype=float)
    for group in element_groups(mesh):
        members = group.elements[pe[group.elements]]
        if len(members) == 0:
            continue
        conn = mesh.elements[members]
        dphi_dz = phi_n[system.pot_index[conn]] @ group.grad[:, :, 2].T
        np.add.at(acc, conn, (dphi_dz * group.det_w) @ N_GP)
        np.add.at(vol, conn, np.broadcast_to(group.lumped, conn.shape))
    return np.divide(acc, vol, out=np.zeros_like(acc), where=vol > 0)


@dataclass
class ForcedResponse:
    omega_bar: float
    F: np.ndarray
    q: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    voltage: VoltageResult


def forced_response(system: GlobalSystem, modes: ModeSet, excitation: ExcitationConfig,
                    omega_bar: float) -> ForcedResponse:
    F = modal_force(modes, system, excitation)
    q = modal_amplitudes(F, modes, excitation, omega_bar)
    u = superpose(q, modes)
    phi = recover_potential(u, system)
    return ForcedResponse(omega_bar=omega_bar, F=F, q=q, u=u, phi=phi,
                          voltage=output_voltage(phi, system))
