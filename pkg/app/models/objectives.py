"""Coeficiente de acoplamiento, funciones objetivo F_k/F_ω, coeficientes adjuntos y sensibilidades nodales."""
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.models.element import lumped_volumes
from app.models.errors import ObjectiveError
from app.models.level_set import LevelSetField
from app.models.mesh import Mesh, Region
from app.models.piezo_fem import GlobalSystem, ModeSet, eigenvalue_gradients

logger = logging.getLogger(__name__)

SENSITIVITY_MODES = ("gateaux", "substitute")
# tolerancia relativa mínima para tomar ω_oc = ω_sc
K2_REL_TOL = 1e-8


@dataclass(frozen=True)
class ObjectiveConfig:
    n_modes: int = 4
    # rad/s
    target_frequencies: Tuple[float, ...] = ()
    alpha_pe: float = 0.95
    alpha_sb: float = 0.95
    sensitivity_mode: str = "gateaux"
    weight_k_by_target: bool = False

    def __post_init__(self):
        if self.n_modes < 1:
            raise ObjectiveError("n_modes debe ser >= 1")
        if len(self.target_frequencies) != self.n_modes:
            raise ObjectiveError(
                f"se esperaban {self.n_modes} frecuencias objetivo, hay {len(self.target_frequencies)}")
        if any(not w > 0 for w in self.target_frequencies):
            raise ObjectiveError("las frecuencias objetivo deben ser positivas")
        for name in ("alpha_pe", "alpha_sb"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ObjectiveError(f"{name} debe estar en [0, 1]")
        if self.sensitivity_mode not in SENSITIVITY_MODES:
            raise ObjectiveError(f"sensitivity_mode desconocido: {self.sensitivity_mode}")

    @property
    def targets(self) -> np.ndarray:
        return np.asarray(self.target_frequencies, dtype=float)


@dataclass
class ObjectiveReport:
    iteration: int
    F_k: float
    F_omega: float
    F_pe: float
    F_sb: float
    omega_oc: np.ndarray
    omega_sc: np.ndarray
    k2: np.ndarray
    V_E: float = float("nan")
    G_V: float = float("nan")
    lam: float = 0.0
    N_phi1: float = float("nan")
    N_phi2: float = float("nan")
    volume_pe: float = float("nan")

    def as_row(self) -> Dict[str, float]:
        """Fila del historial con el orden de columnas del CSV"""
        row = {"iter": self.iteration, "F_k": self.F_k, "F_omega": self.F_omega,
               "F_pe": self.F_pe, "F_sb": self.F_sb}
        for prefix, values in (("omega_oc", self.omega_oc), ("omega_sc", self.omega_sc), ("k2", self.k2)):
            for i, value in enumerate(values, start=1):
                row[f"{prefix}_{i}"] = float(value)
        row.update(V_E=self.V_E, G_V=self.G_V, **{"lambda": self.lam},
                   N_phi1=self.N_phi1, N_phi2=self.N_phi2, volume_pe=self.volume_pe)
        return row


@dataclass
class AdjointCoefficients:
    c_ocpe: np.ndarray
    c_scpe: np.ndarray
    c_ocsb: np.ndarray
    c_scsb: np.ndarray


@dataclass
class SensitivityFields:
    Fprime_pe: np.ndarray
    Fprime_sb: np.ndarray
    coefficients: AdjointCoefficients
    shared: bool = False


def _equal_tolerance(a, b, rel_tol):
    return rel_tol * max(abs(a), abs(b), 1e-300)


def coupling_coefficient(omega_oc: float, omega_sc: float, rel_tol: float = K2_REL_TOL) -> float:
    """k² = (ω_oc² − ω_sc²)/ω_oc²; dentro de rel_tol las dos frecuencias se toman iguales y k² = 0"""
    if omega_sc <= 0.0:
        raise ObjectiveError("ω_sc debe ser positiva")
    tol = _equal_tolerance(omega_oc, omega_sc, rel_tol)
    if omega_oc < omega_sc - tol:
        raise ObjectiveError(f"ω_oc={omega_oc:.6g} < ω_sc={omega_sc:.6g}: emparejamiento defectuoso")
    if omega_oc <= omega_sc + tol:
        return 0.0
    return (omega_oc ** 2 - omega_sc ** 2) / omega_oc ** 2


def coupling_coefficients(modes: ModeSet, rel_tol: float = K2_REL_TOL) -> np.ndarray:
    out = np.zeros(modes.n)
    for i in range(modes.n):
        try:
            out[i] = coupling_coefficient(modes.omega_oc[i], modes.omega_sc[i], rel_tol)
        except ObjectiveError as exc:
            raise ObjectiveError(str(exc), mode=i) from exc
    return out


def objective_F_omega(modes: ModeSet, cfg: ObjectiveConfig) -> float:
    target = cfg.targets
    return float(np.sum((modes.omega_oc - target) ** 2 / target ** 2))


def objective_F_k(modes: ModeSet, cfg: ObjectiveConfig, rel_tol: float = K2_REL_TOL) -> float:
    k2 = coupling_coefficients(modes, rel_tol)
    target = cfg.targets
    total = 0.0
    for i in range(modes.n):
        if k2[i] <= 0.0:
            raise ObjectiveError("k² = 0, F_k no acotada", mode=i)
        gap = modes.omega_oc[i] ** 2 - modes.omega_sc[i] ** 2
        total += modes.omega_oc[i] ** 2 / (gap * target[i] ** 2)
    return float(total)


def _blend(alpha, F_k, F_omega):
    # con alpha = 0 un F_k infinito no participa
    k_term = alpha * F_k if alpha > 0.0 else 0.0
    return k_term + (1.0 - alpha) * F_omega


def combined_objectives(F_k: float, F_omega: float, cfg: ObjectiveConfig) -> Tuple[float, float]:
    return _blend(cfg.alpha_pe, F_k, F_omega), _blend(cfg.alpha_sb, F_k, F_omega)


def evaluate_objectives(modes: ModeSet, cfg: ObjectiveConfig, iteration: int = 0,
                        rel_tol: float = K2_REL_TOL, strict: bool = True) -> ObjectiveReport:
    """Objetivos de una iteración; con strict=False un k² nulo da F_k = inf en lugar de error"""
    k2 = coupling_coefficients(modes, rel_tol)
    try:
        F_k = objective_F_k(modes, cfg, rel_tol)
    except ObjectiveError as exc:
        if strict:
            raise
        logger.warning("%s; F_k se informa como inf", exc)
        F_k = float("inf")
    F_omega = objective_F_omega(modes, cfg)
    F_pe, F_sb = combined_objectives(F_k, F_omega, cfg)
    return ObjectiveReport(iteration=iteration, F_k=F_k, F_omega=F_omega, F_pe=F_pe, F_sb=F_sb,
                           omega_oc=np.array(modes.omega_oc, dtype=float),
                           omega_sc=np.array(modes.omega_sc, dtype=float), k2=k2)


def adjoint_coefficients(modes: ModeSet, cfg: ObjectiveConfig) -> AdjointCoefficients:
    """Derivadas de F_pe y F_sb respecto a λ_oc = ω_oc² y λ_sc = ω_sc² por modo"""
    w_oc = np.asarray(modes.omega_oc, dtype=float)
    w_sc = np.asarray(modes.omega_sc, dtype=float)
    target = cfg.targets
    gap = w_oc ** 2 - w_sc ** 2
    singular = np.flatnonzero(gap <= 0.0)
    if len(singular):
        raise ObjectiveError("ω_oc = ω_sc: coeficiente adjunto singular", mode=int(singular[0]))
    scale = 1.0 / target ** 2 if cfg.weight_k_by_target else np.ones_like(target)
    k_oc = -w_sc ** 2 / gap ** 2 * scale
    k_sc = w_oc ** 2 / gap ** 2 * scale
    freq = (w_oc - target) / (w_oc * target ** 2)
    return AdjointCoefficients(
        c_ocpe=cfg.alpha_pe * k_oc + (1.0 - cfg.alpha_pe) * freq,
        c_scpe=cfg.alpha_pe * k_sc,
        c_ocsb=cfg.alpha_sb * k_oc + (1.0 - cfg.alpha_sb) * freq,
        c_scsb=cfg.alpha_sb * k_sc,
    )


def sensitivity_fields(modes: ModeSet, coeffs: AdjointCoefficients, system: GlobalSystem,
                       fields: Sequence[LevelSetField], lam: float = 0.0,
                       gateaux: bool = True) -> SensitivityFields:
    """F′_pe y F′_sb nodales (densidad por volumen concentrado) más λ en D_pe diseñable"""
    field_p, field_s = fields
    mesh = system.mesh
    n_nodes = mesh.n_nodes
    raw_pe = np.zeros(n_nodes)
    raw_sb = np.zeros(n_nodes)
    for i in range(modes.n):
        lam_oc = modes.omega_oc[i] ** 2
        lam_sc = modes.omega_sc[i] ** 2
        phi = modes.phi_oc[:, i] if modes.phi_oc.size else None
        oc_p, oc_s = eigenvalue_gradients(system, lam_oc, modes.u_oc[:, i], phi, gateaux)
        sc_p, sc_s = eigenvalue_gradients(system, lam_sc, modes.u_sc[:, i], None, gateaux)
        raw_pe += coeffs.c_ocpe[i] * oc_p + coeffs.c_scpe[i] * sc_p
        raw_sb += coeffs.c_ocsb[i] * oc_s + coeffs.c_scsb[i] * sc_s

    volumes = lumped_volumes(mesh)
    Fp = np.divide(raw_pe, volumes, out=np.zeros(n_nodes), where=volumes > 0)
    Fs = np.divide(raw_sb, volumes, out=np.zeros(n_nodes), where=volumes > 0)
    if not (np.all(np.isfinite(Fp)) and np.all(np.isfinite(Fs))):
        raise ObjectiveError("sensibilidad no finita")
    pe_design = mesh.nodes_touching(mesh.element_mask(Region.PE_DESIGN)) & field_p.design_mask

    shared = field_s is field_p
    if shared:
        total = np.where(field_p.design_mask, Fp + Fs, 0.0)
        total = total + np.where(pe_design, lam, 0.0)
        return SensitivityFields(Fprime_pe=total, Fprime_sb=total, coefficients=coeffs, shared=True)

    Fp = np.where(field_p.design_mask, Fp, 0.0) + np.where(pe_design, lam, 0.0)
    Fs = np.where(field_s.design_mask, Fs, 0.0)
    return SensitivityFields(Fprime_pe=Fp, Fprime_sb=Fs, coefficients=coeffs)


def update_lambda(G_V: float, lam: float, penalty_rate: float, volume_pe_domain: float) -> float:
    if not penalty_rate > 0:
        raise ObjectiveError("penalty_rate debe ser positivo")
    if not volume_pe_domain > 0:
        raise ObjectiveError("volumen de D_pe nulo")
    return max(0.0, lam + penalty_rate * G_V / volume_pe_domain)


def design_volume(mesh: Mesh) -> float:
    """Volumen de D_pe diseñable"""
    return float(mesh.element_volumes()[mesh.element_mask(Region.PE_DESIGN)].sum())


def history_columns(n_modes: int) -> List[str]:
    cols = ["iter", "F_k", "F_omega", "F_pe", "F_sb"]
    for prefix in ("omega_oc", "omega_sc", "k2"):
        cols.extend(f"{prefix}_{i}" for i in range(1, n_modes + 1))
    cols.extend(["V_E", "G_V", "lambda", "N_phi1", "N_phi2", "volume_pe"])
    return cols


def hz(omega) -> np.ndarray:
    return np.asarray(omega, dtype=float) / (2.0 * np.pi)

