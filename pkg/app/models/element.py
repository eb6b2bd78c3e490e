"""Hexaedro trilineal con cuadratura de Gauss 2x2x2.

Los elementos con la misma forma (salvo traslación) comparten núcleos
precalculados; en una malla estructurada hay pocas formas distintas.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import List

import numpy as np
import scipy.sparse as sp

from app.models.errors import AssemblyError
from app.models.mesh import HEX_CORNERS, Mesh

_SIGNS = 2 * HEX_CORNERS - 1
_G = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = _SIGNS * _G


def shape_functions(xi):
    """N (8,) y dN/dxi (8, 3) en un punto del elemento de referencia"""
    xi = np.asarray(xi, dtype=float)
    terms = 1.0 + _SIGNS * xi
    N = np.prod(terms, axis=1) / 8.0
    dN = np.empty((8, 3))
    for k in range(3):
        others = [m for m in range(3) if m != k]
        dN[:, k] = _SIGNS[:, k] * terms[:, others[0]] * terms[:, others[1]] / 8.0
    return N, dN


N_GP = np.array([shape_functions(p)[0] for p in GAUSS_POINTS])
DN_GP = np.array([shape_functions(p)[1] for p in GAUSS_POINTS])


def strain_displacement(grad):
    """Matriz B (6, 24) en orden de Voigt xx, yy, zz, yz, xz, xy"""
    B = np.zeros((6, 24))
    for a in range(8):
        dx, dy, dz = grad[a]
        c = 3 * a
        B[0, c] = dx
        B[1, c + 1] = dy
        B[2, c + 2] = dz
        B[3, c + 1], B[3, c + 2] = dz, dy
        B[4, c], B[4, c + 2] = dz, dx
        B[5, c], B[5, c + 1] = dy, dx
    return B


@dataclass(eq=False)
class ElementGroup:
    elements: np.ndarray
    local_coords: np.ndarray

    def __post_init__(self):
        J = np.einsum("gai,aj->gij", DN_GP, self.local_coords)
        det = np.linalg.det(J)
        if np.any(det <= 0.0):
            raise AssemblyError(f"Jacobiano no positivo en el elemento {int(self.elements[0])}",
                                element=int(self.elements[0]))
        self.det_w = det
        self.grad = np.einsum("gij,gaj->gai", np.linalg.inv(J), DN_GP)
        off = J - np.einsum("gii->gi", J)[:, :, None] * np.eye(3)
        self.axis_aligned = bool(np.all(np.abs(off) <= 1e-12 * np.abs(J).max()))
        self.extents = self.local_coords.max(axis=0) - self.local_coords.min(axis=0)

    @cached_property
    def B(self):
        return np.array([strain_displacement(g) for g in self.grad])

    @cached_property
    def Nw(self):
        """N en cada punto de Gauss por peso*detJ, (8g, 8n)"""
        return N_GP * self.det_w[:, None]

    @cached_property
    def mass(self):
        """N N^T por punto de Gauss, escalar (8g, 8, 8)"""
        return np.einsum("ga,gb,g->gab", N_GP, N_GP, self.det_w)

    @cached_property
    def lumped(self):
        return self.Nw.sum(axis=0)

    def stiffness(self, C):
        return np.einsum("gki,kl,glj,g->gij", self.B, C, self.B, self.det_w)

    def coupling(self, e):
        return np.einsum("gki,lk,gal,g->gia", self.B, e, self.grad, self.det_w)

    def dielectric(self, eps):
        return np.einsum("gal,lm,gbm,g->gab", self.grad, eps, self.grad, self.det_w)

    def diffusion(self, coeffs):
        """Laplaciano anisótropo de producto tensorial con cuadratura nodal transversal"""
        if not self.axis_aligned:
            raise AssemblyError("la difusión requiere elementos alineados con los ejes",
                                element=int(self.elements[0]))
        h = self.extents
        K = np.zeros((8, 8))
        for k in range(3):
            if coeffs[k] == 0.0:
                continue
            others = [m for m in range(3) if m != k]
            same = np.all(HEX_CORNERS[:, None, others] == HEX_CORNERS[None, :, others], axis=2)
            sign = np.where(HEX_CORNERS[:, None, k] == HEX_CORNERS[None, :, k], 1.0, -1.0)
            area = 0.25 * h[others[0]] * h[others[1]]
            K += coeffs[k] * area / h[k] * sign * same
        return K


def element_groups(mesh: Mesh) -> List[ElementGroup]:
    if "groups" not in mesh._cache:
        xyz = mesh.coords[mesh.elements]
        local = xyz - xyz[:, :1, :]
        scale = max(np.abs(local).max(), 1e-300)
        key = np.round(local.reshape(len(local), -1) / scale, 10)
        shapes, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        groups = []
        for s in range(len(shapes)):
            members = np.flatnonzero(inverse == s)
            groups.append(ElementGroup(elements=members, local_coords=local[members[0]]))
        mesh._cache["groups"] = groups
    return mesh._cache["groups"]


def gauss_values(mesh: Mesh, nodal: np.ndarray) -> np.ndarray:
    """Interpola un campo nodal a los puntos de Gauss, (E, 8)"""
    return np.asarray(nodal)[mesh.elements] @ N_GP.T


def lumped_volumes(mesh: Mesh, element_mask=None) -> np.ndarray:
    """Volumen nodal concentrado sobre los elementos seleccionados"""
    out = np.zeros(mesh.n_nodes)
    for group in element_groups(mesh):
        members = group.elements
        if element_mask is not None:
            members = members[element_mask[members]]
        np.add.at(out, mesh.elements[members], group.lumped[None, :])
    return out


def scatter_matrix(rows, cols, values, shape):
    """Ensamble COO -> CSR; los duplicados se suman en orden fijo"""
    return sp.coo_matrix((np.ravel(values), (np.ravel(rows), np.ravel(cols))), shape=shape).tocsr()


def assemble_diffusion(mesh: Mesh, coeffs, element_mask=None, coords_scale=1.0):
    """Laplaciano nodal (N, N) con tensor diagonal, coordenadas divididas por coords_scale"""
    rows, cols, vals = [], [], []
    for group in element_groups(mesh):
        members = group.elements
        if element_mask is not None:
            members = members[element_mask[members]]
        if len(members) == 0:
            continue
        # K escala como h^(d-2) = h para d = 3
        Ke = group.diffusion(np.asarray(coeffs, dtype=float)) / coords_scale
        conn = mesh.elements[members]
        rows.append(np.repeat(conn, 8, axis=1))
        cols.append(np.tile(conn, (1, 8)))
        vals.append(np.broadcast_to(Ke.ravel(), (len(members), 64)))
    if not rows:
        return sp.csr_matrix((mesh.n_nodes, mesh.n_nodes))
    return scatter_matrix(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                          (mesh.n_nodes, mesh.n_nodes))
