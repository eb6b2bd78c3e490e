"""Ensamble piezoeléctrico acoplado y problemas de autovalores en circuito abierto/cerrado."""
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from app.models.element import N_GP, element_groups, gauss_values, scatter_matrix
from app.models.errors import EigenSolverError
from app.models.fictitious_field import XiField, element_h_ps, xi_gauss_factor
from app.models.level_set import LevelSetField
from app.models.materials import (MaterialSet, complementary, elasticity_matrix,
                                  heaviside_derivative, interpolation_weights,
                                  permittivity_background, smoothed_heaviside)
from app.models.mesh import PE_FAMILY, Mesh, Region
from app.utils.files import atomic_write_text

logger = logging.getLogger(__name__)

_SEED = 20240101


@dataclass(frozen=True)
class EigenConfig:
    solver: str = "auto"
    dense_threshold: int = 3000
    tol: float = 0.0

    def __post_init__(self):
        if self.solver not in ("auto", "sparse", "dense"):
            raise EigenSolverError(f"solver desconocido: {self.solver}")


@dataclass(eq=False)
class GaussState:
    """Interpolación ersatz evaluada en los puntos de Gauss, arreglos (E, 8)"""
    phi_p: np.ndarray
    phi_s: np.ndarray
    h_p: np.ndarray
    h_s: np.ndarray
    h_xi: np.ndarray
    h_ps: np.ndarray
    h_sp: np.ndarray
    w_pe: np.ndarray
    w_sb: np.ndarray
    bg_active: np.ndarray
    density_factor: np.ndarray
    shared: bool = False

    @property
    def chi_p(self):
        """χ_p en los puntos de Gauss (h_ps = 1 dentro de la familia PE)"""
        return self.h_p * self.h_xi


def gauss_state(mesh: Mesh, field_p: LevelSetField, field_s: LevelSetField,
                xi_field: Optional[XiField], materials: MaterialSet) -> GaussState:
    hv = materials.heaviside
    phi_p = gauss_values(mesh, field_p.values)
    phi_s = phi_p if field_s is field_p else gauss_values(mesh, field_s.values)
    h_p = smoothed_heaviside(phi_p, hv)
    h_s = smoothed_heaviside(phi_s, hv)
    h_xi = xi_gauss_factor(mesh, xi_field, hv)
    h_ps = element_h_ps(mesh, hv.d)
    w_pe, w_sb = interpolation_weights(h_p, h_s, h_xi, h_ps[:, None], hv.d)
    factor = np.where(mesh.element_tags == Region.WEIGHT, mesh.weight_density_factor, 1.0)
    return GaussState(phi_p=phi_p, phi_s=phi_s, h_p=h_p, h_s=h_s, h_xi=h_xi, h_ps=h_ps,
                      h_sp=complementary(h_ps, hv.d), w_pe=w_pe, w_sb=w_sb,
                      bg_active=(1.0 - (w_pe + w_sb)) > hv.d, density_factor=factor,
                      shared=field_s is field_p)


@dataclass(eq=False)
class GlobalSystem:
    K: sp.csr_matrix
    M: sp.csr_matrix
    P: sp.csr_matrix
    G: sp.csr_matrix
    pot_index: np.ndarray
    clamp_dofs: np.ndarray
    ground_pot: np.ndarray
    mesh: Mesh
    materials: MaterialSet
    state: GaussState

    @property
    def n_u(self) -> int:
        return self.K.shape[0]

    @property
    def n_phi(self) -> int:
        return self.G.shape[0]

    @property
    def free_u(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_u), self.clamp_dofs)

    @property
    def free_phi(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_phi), self.ground_pot)


def _kernels(group, materials: MaterialSet):
    """Núcleos por punto de Gauss de un grupo de elementos, memorizados por material"""
    cache = group.__dict__.setdefault("_material_kernels", {})
    if materials not in cache:
        coupling = materials.coupling
        cache[materials] = {
            "K_pe": group.stiffness(elasticity_matrix(materials.piezo)),
            "K_sb": group.stiffness(elasticity_matrix(materials.substrate)),
            "P": group.coupling(coupling.e_matrix),
            "G_S": group.dielectric(coupling.eps_S),
            "G_0": group.dielectric(np.eye(3)),
        }
    return cache[materials]


def _expand_mass(scalar_blocks):
    """(E, 8, 8) escalar -> (E, 24, 24) con I3 por bloque"""
    n = len(scalar_blocks)
    return np.einsum("eab,ij->eaibj", scalar_blocks, np.eye(3)).reshape(n, 24, 24)


def _dof_map(conn):
    return (3 * conn[:, :, None] + np.arange(3)).reshape(len(conn), 24)


def assemble(mesh: Mesh, field_p: LevelSetField, field_s: LevelSetField,
             xi_field: Optional[XiField], materials: MaterialSet) -> GlobalSystem:
    state = gauss_state(mesh, field_p, field_s, xi_field, materials)
    eps0 = materials.coupling.eps_vacuum
    rho_pe, rho_sb = materials.piezo.density, materials.substrate.density
    bg = permittivity_background(state.w_pe, state.w_sb, materials.heaviside.d)

    pe_elements = mesh.element_mask(*PE_FAMILY)
    pot_nodes = np.flatnonzero(mesh.nodes_touching(pe_elements))
    pot_index = np.full(mesh.n_nodes, -1, dtype=np.int64)
    pot_index[pot_nodes] = np.arange(len(pot_nodes))
    n_u, n_phi = 3 * mesh.n_nodes, len(pot_nodes)

    k_parts, m_parts, p_parts, g_parts = [], [], [], []
    for group in element_groups(mesh):
        members = group.elements
        kern = _kernels(group, materials)
        conn = mesh.elements[members]
        dofs = _dof_map(conn)
        w_pe, w_sb = state.w_pe[members], state.w_sb[members]
        rho = rho_pe * w_pe + rho_sb * state.density_factor[members, None] * w_sb

        Ke = np.einsum("eg,gij->eij", w_pe, kern["K_pe"]) + np.einsum("eg,gij->eij", w_sb, kern["K_sb"])
        Me = _expand_mass(np.einsum("eg,gab->eab", rho, group.mass))
        rows = np.repeat(dofs, 24, axis=1)
        cols = np.tile(dofs, (1, 24))
        k_parts.append((rows, cols, Ke.reshape(len(members), -1)))
        m_parts.append((rows, cols, Me.reshape(len(members), -1)))

        piezo = pe_elements[members]
        if not np.any(piezo):
            continue
        sel = members[piezo]
        pdofs = pot_index[mesh.elements[sel]]
        Pe = np.einsum("eg,gia->eia", state.w_pe[sel], kern["P"])
        Ge = (np.einsum("eg,gab->eab", eps0 * bg[sel], kern["G_0"])
              + np.einsum("eg,gab->eab", state.w_pe[sel], kern["G_S"]))
        p_parts.append((np.repeat(dofs[piezo], 8, axis=1), np.tile(pdofs, (1, 24)),
                        Pe.reshape(len(sel), -1)))
        g_parts.append((np.repeat(pdofs, 8, axis=1), np.tile(pdofs, (1, 8)),
                        Ge.reshape(len(sel), -1)))

    def build(parts, shape):
        if not parts:
            return sp.csr_matrix(shape)
        r, c, v = (np.concatenate([p[i].ravel() for p in parts]) for i in range(3))
        return scatter_matrix(r, c, v, shape)

    clamp_nodes = np.asarray(mesh.node_sets["CLAMP"], dtype=np.int64)
    system = GlobalSystem(
        K=build(k_parts, (n_u, n_u)), M=build(m_parts, (n_u, n_u)),
        P=build(p_parts, (n_u, n_phi)), G=build(g_parts, (n_phi, n_phi)),
        pot_index=pot_index,
        clamp_dofs=(3 * clamp_nodes[:, None] + np.arange(3)).ravel(),
        ground_pot=np.sort(pot_index[np.asarray(mesh.node_sets["PZT_GROUND"], dtype=np.int64)]),
        mesh=mesh, materials=materials, state=state,
    )
    logger.debug("Sistema ensamblado: %d GDL mecánicos, %d GDL eléctricos", n_u, n_phi)
    return system


@dataclass(eq=False)
class PartialModes:
    family: str
    omega: np.ndarray
    vectors: np.ndarray
    potentials: Optional[np.ndarray]
    residuals: np.ndarray
    mass: sp.csr_matrix


@dataclass(eq=False)
class ModeSet:
    omega_sc: np.ndarray
    u_sc: np.ndarray
    omega_oc: np.ndarray
    u_oc: np.ndarray
    phi_oc: np.ndarray
    pairing: np.ndarray
    mac: np.ndarray
    warnings: List[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.omega_oc)


def _free_blocks(system: GlobalSystem):
    fu, fp = system.free_u, system.free_phi
    K = system.K[fu][:, fu].tocsc()
    M = system.M[fu][:, fu].tocsc()
    P = system.P[fu][:, fp].tocsc()
    G = system.G[fp][:, fp].tocsc()
    return fu, fp, K, M, P, G


def _use_dense(n_free, n, config: EigenConfig):
    if config.solver == "dense":
        return True
    if config.solver == "sparse":
        return n >= n_free - 1
    return n_free <= config.dense_threshold or n >= n_free - 1


def _sparse_eigs(A_op, M, n, inverse, tol):
    v0 = np.random.default_rng(_SEED).standard_normal(M.shape[0])
    try:
        return spla.eigsh(A_op, k=n, M=M, sigma=0.0, which="LM", v0=v0, tol=tol,
                          OPinv=spla.LinearOperator(M.shape, matvec=inverse, dtype=float))
    except spla.ArpackNoConvergence as exc:
        raise EigenSolverError(f"ARPACK no convergió ({len(exc.eigenvalues)} de {n} pares)") from exc


def _finish_modes(family, lam, vecs, apply_A, M, n, fu, n_u):
    order = np.argsort(lam, kind="stable")[:n]
    lam, vecs = lam[order], vecs[:, order]
    norms = np.sqrt(np.einsum("ij,ij->j", vecs, M @ vecs))
    vecs = vecs / norms
    pivot = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[pivot, np.arange(vecs.shape[1])])

    Au = apply_A(vecs)
    residuals = np.linalg.norm(Au - (M @ vecs) * lam, axis=0) / np.maximum(np.linalg.norm(Au, axis=0), 1e-300)
    full = np.zeros((n_u, len(lam)))
    full[fu] = vecs
    omega = np.sqrt(np.clip(lam, 0.0, None))
    logger.debug("%s: ω = %s, residuos = %s", family, omega, residuals)
    return full, omega, residuals


def solve_short_circuit_modes(system: GlobalSystem, n: int, config: EigenConfig = EigenConfig()) -> PartialModes:
    if n < 1:
        raise EigenSolverError("se necesita al menos un modo")
    fu, _, K, M, _, _ = _free_blocks(system)
    if n > len(fu):
        raise EigenSolverError(f"{n} modos pedidos pero solo hay {len(fu)} GDL libres")
    if _use_dense(len(fu), n, config):
        lam, vecs = sla.eigh(K.toarray(), M.toarray(), subset_by_index=[0, n - 1])
    else:
        lu = spla.splu(K)
        lam, vecs = _sparse_eigs(K, M, n, lu.solve, config.tol)
    full, omega, residuals = _finish_modes("cortocircuito", lam, vecs, lambda v: K @ v, M, n, fu, system.n_u)
    _check_residuals("cortocircuito", residuals)
    return PartialModes(family="sc", omega=omega, vectors=full, potentials=None,
                        residuals=residuals, mass=system.M)


def _factor_dielectric(G):
    try:
        lu = spla.splu(G)
    except RuntimeError as exc:
        raise EigenSolverError(f"matriz dieléctrica G singular: {exc}") from exc
    return lu


def _schur_inverse(K, P, G, schur, refinements=3):
    """Inversa de K + P G⁻¹ Pᵀ por el sistema de punto de silla con el potencial escalado.

    En SI |K| ~ 1e10 y |G| ~ 1e-9: con φ = s·φ~, s = sqrt(|K|/|G|), ambos
    bloques quedan del mismo orden. La solución se refina con el operador de
    Schur exacto.
    """
    g_max = abs(G).max()
    s = float(np.sqrt(abs(K).max() / g_max)) if g_max > 0 else 1.0
    saddle = sp.bmat([[K, s * P], [s * P.T, -(s * s) * G]], format="csc")
    try:
        lu = spla.splu(saddle)
    except RuntimeError as exc:
        raise EigenSolverError(f"sistema acoplado singular: {exc}") from exc
    nu = K.shape[0]
    zeros = np.zeros(P.shape[1])

    def solve(x):
        x = np.ravel(np.asarray(x, dtype=float))
        u = lu.solve(np.concatenate([x, zeros]))[:nu]
        scale = max(np.linalg.norm(u), 1e-300)
        for _ in range(refinements):
            correction = lu.solve(np.concatenate([x - schur(u), zeros]))[:nu]
            u = u + correction
            if np.linalg.norm(correction) <= 1e-14 * scale:
                break
        return u

    return solve


def solve_open_circuit_modes(system: GlobalSystem, n: int, config: EigenConfig = EigenConfig()) -> PartialModes:
    if n < 1:
        raise EigenSolverError("se necesita al menos un modo")
    fu, fp, K, M, P, G = _free_blocks(system)
    if n > len(fu):
        raise EigenSolverError(f"{n} modos pedidos pero solo hay {len(fu)} GDL libres")
    coupled = len(fp) > 0 and P.nnz > 0
    G_lu = _factor_dielectric(G) if coupled else None

    def schur(v):
        out = K @ v
        if coupled:
            out = out + P @ G_lu.solve(np.asarray(P.T @ v))
        return out

    if _use_dense(len(fu), n, config):
        A = K.toarray()
        if coupled:
            A = A + P.toarray() @ sla.solve(G.toarray(), P.T.toarray(), assume_a="sym")
            A = 0.5 * (A + A.T)
        lam, vecs = sla.eigh(A, M.toarray(), subset_by_index=[0, n - 1])
    elif coupled:
        A_op = spla.LinearOperator(K.shape, matvec=schur, dtype=float)
        lam, vecs = _sparse_eigs(A_op, M, n, _schur_inverse(K, P, G, schur), config.tol)
    else:
        lam, vecs = _sparse_eigs(K, M, n, spla.splu(K).solve, config.tol)

    full, omega, residuals = _finish_modes("circuito abierto", lam, vecs,
                                           lambda v: np.column_stack([schur(c) for c in v.T]),
                                           M, n, fu, system.n_u)
    _check_residuals("circuito abierto", residuals)
    potentials = np.zeros((system.n_phi, len(omega)))
    if coupled:
        for i in range(len(omega)):
            potentials[fp, i] = G_lu.solve(np.asarray(P.T @ full[fu, i]))
    return PartialModes(family="oc", omega=omega, vectors=full, potentials=potentials,
                        residuals=residuals, mass=system.M)


def _check_residuals(family, residuals, limit=1e-6):
    if np.any(~np.isfinite(residuals)) or np.any(residuals > limit):
        raise EigenSolverError(f"{family}: residuos fuera de tolerancia {residuals}", residuals=residuals)


def modal_assurance(oc_vectors, sc_vectors, mass) -> np.ndarray:
    Moc = mass @ oc_vectors
    cross = oc_vectors.T @ (mass @ sc_vectors)
    oc_norm = np.einsum("ij,ij->j", oc_vectors, Moc)
    sc_norm = np.einsum("ij,ij->j", sc_vectors, mass @ sc_vectors)
    return cross ** 2 / np.outer(oc_norm, sc_norm)


def pair_modes(sc: PartialModes, oc: PartialModes, threshold: float = 0.5,
               ambiguity: float = 1e-6) -> ModeSet:
    """Empareja cada modo abierto con su modo cerrado por MAC (voraz)"""
    n = len(oc.omega)
    if len(sc.omega) != n:
        raise EigenSolverError("ambas familias deben tener el mismo número de modos")
    mac = modal_assurance(oc.vectors, sc.vectors, oc.mass)
    notes = []
    pairing = np.full(n, -1, dtype=np.int64)

    if mac.max() < threshold:
        notes.append("todos los MAC < %.2f: emparejamiento por índice" % threshold)
        pairing = np.arange(n)
    else:
        taken = np.zeros(n, dtype=bool)
        for flat in np.argsort(-mac.ravel(), kind="stable"):
            i, j = divmod(int(flat), n)
            if mac[i, j] < threshold:
                break
            if pairing[i] >= 0 or taken[j]:
                continue
            row = np.delete(mac[i], np.flatnonzero(taken | (np.arange(n) == j)))
            if row.size and np.any(np.abs(row - mac[i, j]) < ambiguity):
                notes.append(f"emparejamiento ambiguo en el modo {i + 1}: orden por índice")
                pairing[:] = np.arange(n)
                break
            pairing[i] = j
            taken[j] = True
        if np.any(pairing < 0):
            leftovers = iter(np.flatnonzero(~np.isin(np.arange(n), pairing)))
            for i in np.flatnonzero(pairing < 0):
                pairing[i] = next(leftovers)
    for note in notes:
        logger.warning(note)

    return ModeSet(omega_sc=sc.omega[pairing], u_sc=sc.vectors[:, pairing],
                   omega_oc=oc.omega, u_oc=oc.vectors,
                   phi_oc=oc.potentials if oc.potentials is not None else np.zeros((0, n)),
                   pairing=pairing, mac=mac, warnings=notes)


def mode_energy_densities(system: GlobalSystem, u: np.ndarray, phi: Optional[np.ndarray] = None):
    """Integrandos de a_oc/b_oc/a_sc por punto de Gauss (con peso·detJ), arreglos (E, 8)

    k_pe, k_sb: energía de deformación con C unitario por material; m: energía cinética
    con densidad unitaria; p: acoplamiento u·P·φ; g_S, g_0: energía dieléctrica con ε^S y con I.
    """
    mesh = system.mesh
    E = mesh.n_elements
    out = {key: np.zeros((E, len(N_GP))) for key in ("k_pe", "k_sb", "m", "p", "g_S", "g_0")}
    pe_elements = mesh.element_mask(*PE_FAMILY)
    U_nodes = np.asarray(u).reshape(-1, 3)
    for group in element_groups(mesh):
        members = group.elements
        kern = _kernels(group, system.materials)
        conn = mesh.elements[members]
        U3 = U_nodes[conn]
        U = U3.reshape(len(members), 24)
        out["k_pe"][members] = np.einsum("ei,gij,ej->eg", U, kern["K_pe"], U)
        out["k_sb"][members] = np.einsum("ei,gij,ej->eg", U, kern["K_sb"], U)
        out["m"][members] = np.einsum("eai,gab,ebi->eg", U3, group.mass, U3)
        if phi is None:
            continue
        piezo = pe_elements[members]
        if not np.any(piezo):
            continue
        sel = members[piezo]
        Phi = np.asarray(phi)[system.pot_index[mesh.elements[sel]]]
        Us = U[piezo]
        out["p"][sel] = np.einsum("ei,gia,ea->eg", Us, kern["P"], Phi)
        out["g_S"][sel] = np.einsum("ea,gab,eb->eg", Phi, kern["G_S"], Phi)
        out["g_0"][sel] = np.einsum("ea,gab,eb->eg", Phi, kern["G_0"], Phi)
    return out


def weight_derivatives(system: GlobalSystem, gateaux: bool = True):
    """∂w_pe/∂φ_pψ y ∂w_sb/∂φ_sψ en puntos de Gauss"""
    st = system.state
    hv = system.materials.heaviside
    if gateaux:
        dh_p = heaviside_derivative(st.phi_p, hv)
        dh_s = heaviside_derivative(st.phi_s, hv)
    else:
        dh_p = dh_s = np.ones_like(st.phi_p)
    return st.h_ps[:, None] * dh_p * st.h_xi, st.h_sp[:, None] * dh_s


def eigenvalue_gradients(system: GlobalSystem, lam: float, u: np.ndarray,
                         phi: Optional[np.ndarray] = None, gateaux: bool = True):
    """dλ/dφ nodal (sin proyectar) para φ_pψ y φ_sψ: uᵀ(∂K − λ∂M)u + 2uᵀ∂Pφ − φᵀ∂Gφ"""
    mesh = system.mesh
    mats = system.materials
    st = system.state
    dens = mode_energy_densities(system, u, phi)
    eps0 = mats.coupling.eps_vacuum
    active = st.bg_active.astype(float)
    d_pe = (dens["k_pe"] - lam * mats.piezo.density * dens["m"] + 2.0 * dens["p"]
            - dens["g_S"] + eps0 * active * dens["g_0"])
    d_sb = (dens["k_sb"] - lam * mats.substrate.density * st.density_factor[:, None] * dens["m"]
            + eps0 * active * dens["g_0"])
    dw_pe, dw_sb = weight_derivatives(system, gateaux)
    grad_p = np.zeros(mesh.n_nodes)
    grad_s = np.zeros(mesh.n_nodes)
    np.add.at(grad_p, mesh.elements, (d_pe * dw_pe) @ N_GP)
    np.add.at(grad_s, mesh.elements, (d_sb * dw_sb) @ N_GP)
    return grad_p, grad_s


def dump_matrices(system: GlobalSystem, directory: str) -> List[str]:
    """Escribe K, M, P, G como tripletes 'fila columna valor' (base 0)"""
    paths = []
    for name in ("K", "M", "P", "G"):
        mat = getattr(system, name).tocoo()
        lines = [f"# {name} {mat.shape[0]} {mat.shape[1]} nnz={mat.nnz}"]
        lines.extend(f"{r} {c} {v:.17g}" for r, c, v in zip(mat.row, mat.col, mat.data))
        path = os.path.join(directory, f"{name}.txt")
        atomic_write_text(path, "\n".join(lines) + "\n")
        paths.append(path)
    return paths
