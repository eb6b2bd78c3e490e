"""Resúmenes de texto para consola y summary.txt."""
import numpy as np
import pandas as pd

from app.models.fictitious_field import unsupported_piezo_fraction
from app.models.level_set import characteristic, manufacturability_metrics
from app.models.objectives import hz
from app.models.mesh import region_summary
from app.models.optimizer import OptimizationState, RunConfig, averaged_objectives, nodal_fields


def modes_table(state: OptimizationState, config: RunConfig) -> pd.DataFrame:
    report = state.history[-1]
    targets = config.objective.targets
    return pd.DataFrame({
        "modo": np.arange(1, len(report.omega_oc) + 1),
        "f_oc [Hz]": hz(report.omega_oc),
        "f_sc [Hz]": hz(report.omega_sc),
        "f_obj [Hz]": hz(targets),
        "k2": report.k2,
    })


def _fmt(value):
    return "n/d" if value is None or (isinstance(value, float) and np.isnan(value)) else f"{value:.6g}"


def design_metrics(state: OptimizationState, config: RunConfig) -> dict:
    fields = nodal_fields(state, config)
    n1, n2 = manufacturability_metrics(state.field_p, state.field_s, state.mesh)
    chi_s = characteristic(state.field_s, config.materials.heaviside)
    return {
        "N_phi1": n1,
        "N_phi2": n2,
        "unsupported": unsupported_piezo_fraction(state.mesh, fields["chi_p_eff"], chi_s),
    }


def run_summary(state: OptimizationState, config: RunConfig) -> str:
    """Texto del resumen final de una corrida u análisis"""
    if not state.history:
        return f"Corrida '{config.name}': sin iteraciones\n"
    last = state.history[-1]
    averages = averaged_objectives(state.history, config.summary_window)
    metrics = design_metrics(state, config)
    lines = [
        f"Corrida: {config.name}",
        f"Modo: {config.mode} (ξ {'activo' if config.xi_enabled else 'inactivo'})",
        f"Iteraciones: {state.iteration} ({'convergió' if state.converged else 'sin convergencia'})",
        "",
        f"F_k final        = {_fmt(last.F_k)}",
        f"F_omega final    = {_fmt(last.F_omega)}",
        f"F_pe final       = {_fmt(last.F_pe)}",
        f"F_sb final       = {_fmt(last.F_sb)}",
        f"F_k promedio     = {_fmt(averages['F_k'])}  (últimas {min(config.summary_window, len(state.history))})",
        f"F_omega promedio = {_fmt(averages['F_omega'])}",
        f"V_E              = {_fmt(last.V_E)}",
        f"volumen PE       = {_fmt(last.volume_pe)}",
        f"G_V              = {_fmt(last.G_V)}",
        f"lambda           = {_fmt(state.lam)}",
        f"N_phi1           = {_fmt(metrics['N_phi1'])}",
        f"N_phi2           = {_fmt(metrics['N_phi2'])}",
        f"PE sin sustrato  = {_fmt(metrics['unsupported'])}",
        "",
        modes_table(state, config).to_string(index=False, float_format=lambda v: f"{v:.6g}"),
    ]
    return "\n".join(lines) + "\n"


def mesh_summary(mesh) -> str:
    frame = pd.DataFrame(region_summary(mesh)).T
    frame.index.name = "región"
    lines = [f"Nodos: {mesh.n_nodes}", f"Elementos: {mesh.n_elements}", "",
             frame.to_string(float_format=lambda v: f"{v:.6g}")]
    for name in ("CLAMP", "GAMMA_XI", "PZT_GROUND"):
        lines.append(f"{name}: {len(mesh.node_sets[name])} nodos")
    return "\n".join(lines) + "\n"


def metrics_summary(n1, n2, unsupported) -> str:
    return f"N_phi1 = {n1:.6g}\nN_phi2 = {n2:.6g}\nPE sin sustrato = {unsupported:.6g}\n"
