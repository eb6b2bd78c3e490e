"""Ciclo de optimización: ξ, autovalores, respuesta, objetivos, convergencia y actualización de campos."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.models.errors import ConfigError, HarvesterError, OptimizationAborted, ResponseError
from app.models.fictitious_field import XiConfig, XiField, effective_pe_characteristic, solve_xi
from app.models.level_set import (LevelSetField, RegularizationTensor, UpdateParams, characteristic,
                                  make_field, manufacturability_metrics, normalize_sensitivity,
                                  update_field)
from app.models.materials import MaterialSet
from app.models.mesh import DomainConfig, Mesh, build_benchmark_mesh
from app.models.objectives import (K2_REL_TOL, ObjectiveConfig, ObjectiveReport, adjoint_coefficients,
                                   design_volume, evaluate_objectives, hz, sensitivity_fields,
                                   update_lambda)
from app.models.piezo_fem import (EigenConfig, GlobalSystem, ModeSet, assemble, pair_modes,
                                  solve_open_circuit_modes, solve_short_circuit_modes)
from app.models.response import (ExcitationConfig, ForcedResponse, forced_response, nodal_gradient_z,
                                  nodal_potential, voltage_constraint)

logger = logging.getLogger(__name__)

MODES = ("extended_two_fields", "single_field_comparison")


@dataclass(frozen=True)
class RunConfig:
    domain: DomainConfig
    objective: ObjectiveConfig
    materials: MaterialSet = field(default_factory=MaterialSet)
    xi: XiConfig = field(default_factory=XiConfig)
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    update: UpdateParams = field(default_factory=UpdateParams)
    tau_pe: RegularizationTensor = field(default_factory=RegularizationTensor)
    tau_sb: RegularizationTensor = field(default_factory=RegularizationTensor)
    eigen: EigenConfig = field(default_factory=EigenConfig)
    voltage_min: Optional[float] = None
    lambda_rate: float = 1.0
    max_iterations: int = 1000
    convergence_ratio: float = 1e-6
    convergence_window: int = 10
    snapshot_every: int = 50
    mode: str = "extended_two_fields"
    debug_xi: bool = False
    summary_window: int = 100
    name: str = "run"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("debe ser >= 1", "max_iterations")
        if self.convergence_window < 1:
            raise ConfigError("debe ser >= 1", "convergence_window")
        if not self.convergence_ratio > 0:
            raise ConfigError("debe ser positivo", "convergence_ratio")
        if self.snapshot_every < 1:
            raise ConfigError("debe ser >= 1", "snapshot_every")
        if self.summary_window < 1:
            raise ConfigError("debe ser >= 1", "summary_window")
        if self.mode not in MODES:
            raise ConfigError(f"modo desconocido '{self.mode}'", "mode")
        if self.voltage_min is not None and not self.voltage_min > 0:
            raise ConfigError("debe ser positivo", "voltage_min")
        if not self.lambda_rate > 0:
            raise ConfigError("debe ser positivo", "lambda_rate")

    @property
    def shared_field(self) -> bool:
        return self.mode == "single_field_comparison"

    @property
    def xi_enabled(self) -> bool:
        if self.xi.enabled is None:
            return not self.shared_field
        return bool(self.xi.enabled)


@dataclass(eq=False)
class OptimizationState:
    mesh: Mesh
    field_p: LevelSetField
    field_s: LevelSetField
    xi: Optional[XiField] = None
    lam: float = 0.0
    iteration: int = 0
    history: List[ObjectiveReport] = field(default_factory=list)
    converged: bool = False
    system: Optional[GlobalSystem] = None
    modes: Optional[ModeSet] = None
    response: Optional[ForcedResponse] = None


def initial_state(config: RunConfig, mesh: Mesh) -> OptimizationState:
    """Paso 1: todo el dominio de diseño ocupado (φ = 1)"""
    if config.shared_field:
        shared = make_field(mesh, "shared")
        return OptimizationState(mesh=mesh, field_p=shared, field_s=shared)
    return OptimizationState(mesh=mesh, field_p=make_field(mesh, "pe"), field_s=make_field(mesh, "sb"))


def check_convergence(history: Sequence[ObjectiveReport], ratio: float = 1e-6, window: int = 10) -> bool:
    """|F(t-1)/F(t) - 1| < ratio durante las últimas `window` iteraciones, para F_pe y F_sb"""
    if len(history) < window + 1:
        return False
    recent = history[-(window + 1):]
    for key in ("F_pe", "F_sb"):
        values = [getattr(r, key) for r in recent]
        for previous, current in zip(values[:-1], values[1:]):
            if current == 0.0:
                if previous != 0.0:
                    return False
                continue
            if not abs(previous / current - 1.0) < ratio:
                return False
    return True


def averaged_objectives(history: Sequence[ObjectiveReport], window: int = 100) -> Dict[str, float]:
    tail = history[-window:]
    if not tail:
        return {"F_k": float("nan"), "F_omega": float("nan")}
    return {"F_k": float(np.mean([r.F_k for r in tail])),
            "F_omega": float(np.mean([r.F_omega for r in tail]))}


def nodal_fields(state: OptimizationState, config: RunConfig, include_xi: bool = True,
                 include_response: bool = False) -> Dict[str, np.ndarray]:
    hv = config.materials.heaviside
    data = {
        "phi_p": state.field_p.values,
        "phi_s": state.field_s.values,
        "chi_p_eff": effective_pe_characteristic(state.field_p, state.xi, hv),
        "chi_s": characteristic(state.field_s, hv),
    }
    if include_xi and state.xi is not None:
        data["xi"] = state.xi.values
    if include_response and state.response is not None:
        # potencial de la respuesta forzada en ω̄
        data["potential"] = nodal_potential(state.response.phi, state.system)
        data["dphi_dz"] = nodal_gradient_z(state.response.phi, state.system)
    return data


def _solve_modes(system, config: RunConfig, pool: Optional[ThreadPoolExecutor]) -> ModeSet:
    n = config.objective.n_modes
    if pool is None:
        sc = solve_short_circuit_modes(system, n, config.eigen)
        oc = solve_open_circuit_modes(system, n, config.eigen)
    else:
        sc_job = pool.submit(solve_short_circuit_modes, system, n, config.eigen)
        oc_job = pool.submit(solve_open_circuit_modes, system, n, config.eigen)
        sc, oc = sc_job.result(), oc_job.result()
    return pair_modes(sc, oc)


def _update_fields(state: OptimizationState, config: RunConfig, report: ObjectiveReport, v_domain: float):
    """Paso 6: λ, sensibilidades y un paso de reacción-difusión por campo"""
    mesh = state.mesh
    if config.voltage_min is not None:
        state.lam = update_lambda(report.G_V, state.lam, config.lambda_rate, v_domain)
    coeffs = adjoint_coefficients(state.modes, config.objective)
    sens = sensitivity_fields(state.modes, coeffs, state.system, (state.field_p, state.field_s),
                              state.lam, gateaux=config.objective.sensitivity_mode == "gateaux")

    def step(fld, raw, tau):
        nodes = mesh.nodes_touching(fld.region_elements)
        velocity = normalize_sensitivity(-raw, mesh, config.update.c_norm, nodes=nodes)
        return update_field(fld, velocity, tau, config.update, mesh)

    if sens.shared:
        shared = step(state.field_p, sens.Fprime_pe, config.tau_pe)
        state.field_p = state.field_s = shared
    else:
        state.field_p = step(state.field_p, sens.Fprime_pe, config.tau_pe)
        state.field_s = step(state.field_s, sens.Fprime_sb, config.tau_sb)


def run(config: RunConfig, store=None, threads: int = 1, mesh: Optional[Mesh] = None) -> OptimizationState:
    mesh = mesh or build_benchmark_mesh(config.domain)
    logger.info("Malla: %d nodos, %d elementos", mesh.n_nodes, mesh.n_elements)
    state = initial_state(config, mesh)
    omega_bar = config.excitation.omega_bar(config.objective.targets)
    pool = ThreadPoolExecutor(max_workers=2) if threads > 1 else None
    if store is not None:
        store.setup()

    progress = {"stage": "inicio"}
    try:
        v_domain = design_volume(mesh)
        for t in range(config.max_iterations):
            report = _iterate(state, config, omega_bar, t, pool, progress)
            if store is not None:
                store.append_history(report)
                if t % config.snapshot_every == 0:
                    store.write_snapshot(t, mesh, nodal_fields(state, config, include_xi=config.debug_xi))
            logger.info("iter %d: F_pe=%.6e F_sb=%.6e f_oc=%s Hz V_E=%.4e λ=%.4e", t, report.F_pe,
                        report.F_sb, np.array2string(hz(report.omega_oc), precision=2), report.V_E,
                        state.lam)

            progress["stage"] = "convergencia"
            if check_convergence(state.history, config.convergence_ratio, config.convergence_window):
                state.converged = True
                logger.info("Convergencia alcanzada en la iteración %d", t)
                break
            if t == config.max_iterations - 1:
                break
            progress["stage"] = "actualización"
            _update_fields(state, config, report, v_domain)
    except (HarvesterError, np.linalg.LinAlgError) as exc:
        raise OptimizationAborted(state.iteration, progress["stage"], exc) from exc
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    if store is not None:
        store.write_result(mesh, nodal_fields(state, config, include_response=True), state.lam, state.iteration)
    return state


def _iterate(state: OptimizationState, config: RunConfig, omega_bar: float, t: int,
             pool: Optional[ThreadPoolExecutor], progress: dict, strict: bool = True) -> ObjectiveReport:
    """Pasos 2 a 4 sobre los campos actuales; agrega el reporte al historial"""
    progress["stage"] = "campo ficticio"
    state.xi = (solve_xi(state.mesh, state.field_s, config.xi, config.materials.heaviside)
                if config.xi_enabled else None)
    progress["stage"] = "ensamble"
    state.system = assemble(state.mesh, state.field_p, state.field_s, state.xi, config.materials)
    progress["stage"] = "autovalores"
    state.modes = _solve_modes(state.system, config, pool)
    progress["stage"] = "respuesta"
    report = _evaluate(state, config, omega_bar, t, strict)
    state.history.append(report)
    state.iteration = t + 1
    return report


def with_saved_fields(state: OptimizationState, phi_p, phi_s=None) -> OptimizationState:
    """Reemplaza los valores de diseño por campos guardados; los nodos congelados se restauran"""
    if state.field_s is state.field_p:
        shared = state.field_p.with_values(np.asarray(phi_p, dtype=float))
        state.field_p = state.field_s = shared
    else:
        state.field_p = state.field_p.with_values(np.asarray(phi_p, dtype=float))
        state.field_s = state.field_s.with_values(np.asarray(phi_s if phi_s is not None else phi_p,
                                                             dtype=float))
    return state


def analyze(config: RunConfig, mesh: Optional[Mesh] = None, phi_p=None, phi_s=None) -> OptimizationState:
    """Una sola evaluación (sin actualizar campos) del diseño inicial o de campos guardados; k² nulo da F_k = inf"""
    mesh = mesh or build_benchmark_mesh(config.domain)
    state = initial_state(config, mesh)
    if phi_p is not None:
        with_saved_fields(state, phi_p, phi_s)
    progress = {"stage": "inicio"}
    try:
        _iterate(state, config, config.excitation.omega_bar(config.objective.targets), 0, None, progress,
                 strict=False)
    except (HarvesterError, np.linalg.LinAlgError) as exc:
        raise OptimizationAborted(0, progress["stage"], exc) from exc
    return state


def _evaluate(state: OptimizationState, config: RunConfig, omega_bar: float, t: int,
              strict: bool = True) -> ObjectiveReport:
    """Paso 4: respuesta forzada, voltaje, objetivos y métricas"""
    report = evaluate_objectives(state.modes, config.objective, t,
                                 rel_tol=max(config.eigen.tol, K2_REL_TOL), strict=strict)
    try:
        state.response = forced_response(state.system, state.modes, config.excitation, omega_bar)
    except ResponseError:
        if config.voltage_min is not None:
            raise
        logger.warning("iter %d: voltaje no evaluable, se registra NaN", t)
        state.response = None
    if state.response is not None:
        voltage = state.response.voltage
        report.V_E = voltage.V_E
        report.volume_pe = voltage.volume_pe
        if config.voltage_min is not None:
            report.G_V = voltage_constraint(voltage, config.voltage_min)
    report.lam = state.lam
    report.N_phi1, report.N_phi2 = manufacturability_metrics(state.field_p, state.field_s, state.mesh)
    return report
