"""Constantes de material, Heaviside suavizada e interpolación de material ersatz."""
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from app.models.errors import MaterialError

EPS0 = 8.8541878128e-12


@dataclass(frozen=True)
class IsotropicElastic:
    youngs_modulus: float
    poisson_ratio: float
    density: float

    def __post_init__(self):
        if not self.youngs_modulus > 0:
            raise MaterialError("youngs_modulus debe ser positivo", field="youngs_modulus")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise MaterialError("poisson_ratio fuera de [0, 0.5)", field="poisson_ratio")
        if not self.density > 0:
            raise MaterialError("density debe ser positiva", field="density")


@dataclass(frozen=True)
class PiezoCoupling:
    """Constantes e (C/m^2) y permitividad relativa bloqueada, polarización +z"""
    e31: float = -5.4
    e33: float = 15.8
    e15: float = 12.3
    eps_rel: Tuple[float, float, float] = (1730.0, 1730.0, 1700.0)
    eps_vacuum: float = EPS0

    def __post_init__(self):
        if len(self.eps_rel) != 3 or min(self.eps_rel) <= 0:
            raise MaterialError("eps_rel necesita tres valores positivos", field="eps_rel")
        if not self.eps_vacuum > 0:
            raise MaterialError("eps_vacuum debe ser positivo", field="eps_vacuum")

    @property
    def e_matrix(self) -> np.ndarray:
        e = np.zeros((3, 6))
        e[0, 4] = self.e15
        e[1, 3] = self.e15
        e[2, 0] = e[2, 1] = self.e31
        e[2, 2] = self.e33
        return e

    @property
    def eps_S(self) -> np.ndarray:
        return np.diag(self.eps_rel) * self.eps_vacuum

    @property
    def eps_z(self) -> float:
        return self.eps_rel[2] * self.eps_vacuum

    @property
    def polarization_axis(self) -> np.ndarray:
        return np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class HeavisideParams:
    w: float = 0.9
    d: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.w <= 1.0:
            raise MaterialError("w fuera de (0, 1]", field="w")
        if not 0.0 < self.d < 1.0:
            raise MaterialError("d fuera de (0, 1)", field="d")


def _silicon():
    return IsotropicElastic(youngs_modulus=169e9, poisson_ratio=0.28, density=2329.0)


def _pzt():
    return IsotropicElastic(youngs_modulus=60e9, poisson_ratio=0.31, density=7750.0)


@dataclass(frozen=True)
class MaterialSet:
    substrate: IsotropicElastic = field(default_factory=_silicon)
    piezo: IsotropicElastic = field(default_factory=_pzt)
    coupling: PiezoCoupling = field(default_factory=PiezoCoupling)
    heaviside: HeavisideParams = field(default_factory=HeavisideParams)


@dataclass
class PointProperties:
    C_eff: np.ndarray
    e_eff: np.ndarray
    eps_eff: np.ndarray
    rho_eff: float


def elasticity_matrix(mat: IsotropicElastic) -> np.ndarray:
    E, nu = mat.youngs_modulus, mat.poisson_ratio
    if nu >= 0.5:
        raise MaterialError("límite incompresible", field="poisson_ratio")
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[np.arange(3), np.arange(3)] = lam + 2 * mu
    C[np.arange(3, 6), np.arange(3, 6)] = mu
    return C


def smoothed_heaviside(phi, params: HeavisideParams):
    """h(phi) en [d, 1]; polinomio de quinto grado en [-w, w]"""
    phi = np.asarray(phi, dtype=float)
    s = np.clip(phi / params.w, -1.0, 1.0)
    poly = 0.5 + s * (15.0 / 16.0 - s * s * (5.0 / 8.0 - 3.0 / 16.0 * s * s))
    out = poly * (1.0 - params.d) + params.d
    return out if out.ndim else float(out)


def heaviside_derivative(phi, params: HeavisideParams):
    phi = np.asarray(phi, dtype=float)
    s = phi / params.w
    out = np.where(np.abs(s) <= 1.0, 15.0 / (16.0 * params.w) * (1.0 - s * s) ** 2, 0.0)
    out = out * (1.0 - params.d)
    return out if out.ndim else float(out)


def complementary(h_ps, d):
    """h del indicador negado: intercambia 1 <-> d"""
    return 1.0 + d - h_ps


def interpolation_weights(h_p, h_s, h_xi, h_ps, d):
    """Pesos piezo y sustrato de la interpolación ersatz"""
    w_pe = h_ps * h_p * h_xi
    w_sb = complementary(h_ps, d) * h_s
    return w_pe, w_sb


def permittivity_background(w_pe, w_sb, d):
    return np.maximum(d, 1.0 - (w_pe + w_sb))


def interpolate_properties(h_p, h_s, h_xi, h_ps, mats: MaterialSet,
                           density_factor: float = 1.0) -> PointProperties:
    d = mats.heaviside.d
    for name, value in (("h_p", h_p), ("h_s", h_s), ("h_xi", h_xi), ("h_ps", h_ps)):
        if not d - 1e-12 <= value <= 1.0 + 1e-12:
            raise MaterialError(f"{name}={value} fuera de [d, 1]", field=name)
    w_pe, w_sb = interpolation_weights(h_p, h_s, h_xi, h_ps, d)
    C = elasticity_matrix(mats.piezo) * w_pe + elasticity_matrix(mats.substrate) * w_sb
    e = mats.coupling.e_matrix * w_pe
    eps = (mats.coupling.eps_vacuum * np.eye(3) * permittivity_background(w_pe, w_sb, d)
           + mats.coupling.eps_S * w_pe)
    rho = mats.piezo.density * w_pe + mats.substrate.density * density_factor * w_sb
    return PointProperties(C_eff=C, e_eff=e, eps_eff=eps, rho_eff=float(rho))
