"""Línea de comandos: run, analyze, metrics, mesh y report."""
import argparse
import logging
import os
import sys

from app.models.config import default_output_dir, parse_config
from app.models.errors import ConfigError, HarvesterError, OptimizationAborted
from app.models.fictitious_field import unsupported_piezo_fraction
from app.models.level_set import manufacturability_metrics
from app.models.mesh import build_benchmark_mesh
from app.models.optimizer import analyze, initial_state, nodal_fields, run, with_saved_fields
from app.models.piezo_fem import dump_matrices
from app.models.run_store import RunStore, load_fields, write_mesh_vtk
from app.views.report_view import generate_report
from app.views.summary_view import mesh_summary, metrics_summary, run_summary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _add_config_args(parser, with_out=True):
    parser.add_argument("--config", required=True, help="archivo YAML de configuración")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="CLAVE=VALOR",
                        help="sobrescribe una clave (repetible), p. ej. tau_pe.tau_z=1e-4")
    parser.add_argument("--coarse", action="store_true", default=None, help="malla gruesa")
    if with_out:
        parser.add_argument("--out", help="directorio de salida")


def build_parser():
    parser = argparse.ArgumentParser(prog="harvester",
                                     description="Optimización topológica de cosechadores piezoeléctricos")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv depuración")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="ejecuta la optimización completa")
    _add_config_args(p_run)
    p_run.add_argument("--threads", type=int, default=1, help="hilos para los dos problemas de autovalores")

    p_an = sub.add_parser("analyze", help="evalúa un diseño sin optimizar")
    _add_config_args(p_an)
    p_an.add_argument("--fields", help="campos guardados (.npz, .vtk o directorio de corrida)")
    p_an.add_argument("--dump-matrices", action="store_true", help="escribe K, M, P, G como tripletes")

    p_me = sub.add_parser("metrics", help="métricas de fabricación de campos guardados")
    _add_config_args(p_me, with_out=False)
    p_me.add_argument("--fields", required=True, help="campos guardados (.npz, .vtk o directorio de corrida)")

    p_mesh = sub.add_parser("mesh", help="genera la malla y escribe mesh.vtk")
    _add_config_args(p_mesh)

    p_rep = sub.add_parser("report", help="reporte PDF comparando corridas")
    p_rep.add_argument("runs", nargs="+", help="directorios de corridas")
    p_rep.add_argument("--out", default="report.pdf", help="archivo PDF de salida")
    return parser


def _configure_logging(verbosity):
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT)


def _load(args):
    return parse_config(args.config, args.overrides, coarse=args.coarse)


def _output_dir(args):
    return args.out or default_output_dir(args.config)


def cmd_run(args):
    config = _load(args)
    out = _output_dir(args)
    store = RunStore(out, config.objective.n_modes)
    store.write_metadata(config)
    state = run(config, store=store, threads=max(1, args.threads))
    text = run_summary(state, config)
    store.write_summary(text)
    print(text, end="")
    print(f"Resultados en {out}")
    return EXIT_OK


def _fields_state(config, mesh, fields_path):
    state = initial_state(config, mesh)
    fields, _ = load_fields(fields_path)
    if "phi_p" not in fields:
        raise ConfigError(f"{fields_path}: no contiene phi_p")
    return with_saved_fields(state, fields["phi_p"], fields.get("phi_s"))


def cmd_analyze(args):
    config = _load(args)
    mesh = build_benchmark_mesh(config.domain)
    phi_p = phi_s = None
    if args.fields:
        fields, _ = load_fields(args.fields)
        phi_p, phi_s = fields.get("phi_p"), fields.get("phi_s")
        if phi_p is None:
            raise ConfigError(f"{args.fields}: no contiene phi_p")
    state = analyze(config, mesh, phi_p, phi_s)
    print(run_summary(state, config), end="")
    if args.dump_matrices:
        out = _output_dir(args)
        os.makedirs(out, exist_ok=True)
        for path in dump_matrices(state.system, out):
            print(f"Matriz escrita: {path}")
    return EXIT_OK


def cmd_metrics(args):
    config = _load(args)
    mesh = build_benchmark_mesh(config.domain)
    state = _fields_state(config, mesh, args.fields)
    n1, n2 = manufacturability_metrics(state.field_p, state.field_s, mesh)
    fields = nodal_fields(state, config)
    unsupported = unsupported_piezo_fraction(mesh, fields["chi_p_eff"], fields["chi_s"])
    print(metrics_summary(n1, n2, unsupported), end="")
    return EXIT_OK


def cmd_mesh(args):
    config = _load(args)
    mesh = build_benchmark_mesh(config.domain)
    out = _output_dir(args)
    path = os.path.join(out, "mesh.vtk")
    write_mesh_vtk(path, mesh, title=f"malla {config.name}")
    print(mesh_summary(mesh), end="")
    print(f"Malla escrita en {path}")
    return EXIT_OK


def cmd_report(args):
    rows = generate_report(args.runs, args.out)
    print(f"Reporte de {len(rows)} corridas escrito en {args.out}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "analyze": cmd_analyze,
    "metrics": cmd_metrics,
    "mesh": cmd_mesh,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"Error de configuración: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OptimizationAborted as exc:
        print(f"Corrida abortada en la iteración {exc.iteration}, etapa '{exc.stage}': {exc.__cause__}",
              file=sys.stderr)
        return EXIT_RUNTIME
    except (HarvesterError, OSError, ValueError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception:
        logger.exception("Error inesperado")
        return EXIT_UNEXPECTED
