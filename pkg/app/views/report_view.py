"""Reporte comparativo de corridas: gráficos con matplotlib y PDF con reportlab."""
import logging
import os
import tempfile

import matplotlib.pyplot as plt
import numpy as np
from reportlab.lib.pagesizes import letter
from reportlab.lib.styles import getSampleStyleSheet
from reportlab.platypus import Image, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from app.models.run_store import load_history, load_metadata
from app.utils.files import atomic_path
from app.utils.styles import AppStyles

logger = logging.getLogger(__name__)


def collect_runs(run_dirs):
    """Una fila por corrida: condición, promedios finales y métricas"""
    rows = []
    for directory in run_dirs:
        history = load_history(directory)
        meta = load_metadata(directory)
        window = int(meta.get("summary_window", 100))
        tail = history.tail(window)
        last = history.iloc[-1]
        tau_pe = meta.get("tau_pe") or [np.nan] * 3
        rows.append({
            "name": meta.get("name", os.path.basename(os.path.normpath(directory))),
            "tau_z": float(tau_pe[2]),
            "xi": meta.get("xi"),
            "mode": meta.get("mode", ""),
            "voltage_min": meta.get("voltage_min"),
            "F_k": float(tail["F_k"].mean()),
            "F_omega": float(tail["F_omega"].mean()),
            "V_E": float(last["V_E"]),
            "volume_pe": float(last["volume_pe"]),
            "N_phi1": float(last["N_phi1"]),
            "N_phi2": float(last["N_phi2"]),
            "iterations": int(len(history)),
            "history": history,
        })
    return rows


def _tradeoff_chart(rows, path):
    AppStyles.apply_chart_style()
    plt.figure(figsize=(7, 5))
    for i, row in enumerate(rows):
        plt.scatter(row["F_omega"], row["F_k"], color=AppStyles.series_color(i), s=40)
        plt.annotate(row["name"], (row["F_omega"], row["F_k"]), textcoords="offset points", xytext=(4, 4))
    plt.xlabel("F_omega (promedio)")
    plt.ylabel("F_k (promedio)")
    plt.title("Compromiso entre acoplamiento y frecuencias")
    plt.grid(True)
    plt.savefig(path, dpi=AppStyles.CHART_DPI, bbox_inches="tight")
    plt.close()


def _convergence_chart(rows, path):
    AppStyles.apply_chart_style()
    plt.figure(figsize=(7, 5))
    for i, row in enumerate(rows):
        history = row["history"]
        plt.semilogy(history["iter"], history["F_pe"], color=AppStyles.series_color(i), label=row["name"])
    plt.xlabel("Iteración")
    plt.ylabel("F_pe")
    plt.title("Convergencia")
    plt.legend()
    plt.grid(True)
    plt.savefig(path, dpi=AppStyles.CHART_DPI, bbox_inches="tight")
    plt.close()


def _cell(value):
    if value is None:
        return "-"
    if isinstance(value, (bool, np.bool_)):
        return "sí" if value else "no"
    if isinstance(value, (int, np.integer)):
        return str(value)
    if isinstance(value, float):
        return "-" if np.isnan(value) else f"{value:.4g}"
    return str(value)


def generate_report(run_dirs, pdf_path):
    """Escribe el PDF comparativo y devuelve las filas usadas"""
    rows = collect_runs(run_dirs)
    if not rows:
        raise ValueError("no hay corridas para el reporte")

    with tempfile.TemporaryDirectory() as workdir:
        tradeoff_png = os.path.join(workdir, "tradeoff.png")
        convergence_png = os.path.join(workdir, "convergence.png")
        _tradeoff_chart(rows, tradeoff_png)
        _convergence_chart(rows, convergence_png)

        with atomic_path(pdf_path) as tmp:
            doc = SimpleDocTemplate(tmp, pagesize=letter)
            styles = getSampleStyleSheet()
            story = [Paragraph("Reporte de optimización de cosechadores", styles["Title"]),
                     Paragraph(f"Corridas: {len(rows)}", styles["Normal"]),
                     Spacer(1, 12),
                     Paragraph("Resumen por condición", styles["Heading2"])]

            header = ["Condición", "tau_z", "xi", "V_min", "F_k", "F_omega", "V_E", "Vol. PE", "N_phi1", "N_phi2"]
            data = [header]
            for row in rows:
                data.append([_cell(row[key]) for key in ("name", "tau_z", "xi", "voltage_min", "F_k",
                                                         "F_omega", "V_E", "volume_pe", "N_phi1", "N_phi2")])
            table = Table(data, colWidths=[doc.width / len(header)] * len(header))
            table.setStyle(TableStyle(AppStyles.get_table_style()))
            story.append(table)
            story.append(Spacer(1, 12))

            story.append(Paragraph("Compromiso F_k / F_omega", styles["Heading2"]))
            story.append(Image(tradeoff_png, width=400, height=290))
            story.append(Paragraph("Historial de F_pe", styles["Heading2"]))
            story.append(Image(convergence_png, width=400, height=290))
            doc.build(story)
    logger.info("Reporte escrito en %s", pdf_path)
    return rows
