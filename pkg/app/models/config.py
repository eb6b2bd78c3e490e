"""Archivo de configuración YAML -> RunConfig, con ruta de clave y línea en cada diagnóstico."""
import dataclasses
import logging
import math
import os
import typing
from typing import Dict, Iterable, Optional, Tuple

import yaml

from app.models.errors import ConfigError, HarvesterError
from app.models.fictitious_field import XiConfig
from app.models.level_set import RegularizationTensor, UpdateParams
from app.models.materials import HeavisideParams, IsotropicElastic, MaterialSet, PiezoCoupling
from app.models.mesh import DomainConfig, Resolution
from app.models.objectives import ObjectiveConfig
from app.models.optimizer import RunConfig
from app.models.piezo_fem import EigenConfig
from app.models.response import ExcitationConfig

logger = logging.getLogger(__name__)

OUTPUT_ENV = "HARVESTER_OUTPUT_DIR"

_TOP_KEYS = {
    "name", "domain", "materials", "heaviside", "objective", "xi", "excitation", "update",
    "tau_pe", "tau_sb", "eigen", "voltage_min", "lambda_rate", "max_iterations",
    "convergence_ratio", "convergence_window", "snapshot_every", "mode", "coarse",
    "coarse_factor", "debug_xi", "summary_window",
}
_ELASTIC_KEYS = {"youngs_modulus", "poisson_ratio", "density"}
_COUPLING_KEYS = {"e31", "e33", "e15", "eps_rel"}


class _Source:
    """Datos crudos del YAML y la línea de cada clave"""

    def __init__(self, data, lines):
        self.data = data
        self.lines = lines

    def line(self, path):
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rpartition(".")[0]
        return None

    def error(self, message, path):
        return ConfigError(message, key_path=path or None, line=self.line(path))


def _line_map(node, prefix="", lines=None):
    lines = {} if lines is None else lines
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            lines[path] = key_node.start_mark.line + 1
            _line_map(value_node, path, lines)
    return lines


def _load(text, origin):
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML inválido en {origin}: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{origin}: la raíz debe ser un mapeo")
    return _Source(data, _line_map(root) if root is not None else {})


def apply_overrides(source: _Source, overrides: Iterable[str]):
    """Aplica --set clave.ruta=valor; el valor se tipa con las reglas escalares de YAML"""
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override inválido '{item}', se espera clave.ruta=valor")
        try:
            value = yaml.safe_load(raw) if raw.strip() else None
        except yaml.YAMLError as exc:
            raise ConfigError(f"valor inválido en override '{item}'", key_path=key) from exc
        node = source.data
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                raise ConfigError("no es una sección", key_path=key)
            node = child
        node[parts[-1]] = value
        logger.debug("override %s = %r", key, value)


def _as_float(value, path, src):
    if isinstance(value, bool):
        raise src.error("se esperaba un número", path)
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise src.error(f"se esperaba un número, no '{value}'", path) from None
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        raise src.error("se esperaba un número finito", path)
    return float(value)


def _convert(value, hint, path, src):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union and type(None) in args:
        if value is None:
            return None
        hint = next(a for a in args if a is not type(None))
        origin, args = typing.get_origin(hint), typing.get_args(hint)
    if hint is float:
        return _as_float(value, path, src)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise src.error("se esperaba un entero", path)
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise src.error("se esperaba true o false", path)
        return value
    if hint is str:
        if not isinstance(value, str):
            raise src.error("se esperaba texto", path)
        return value
    if origin in (tuple, Tuple):
        if not isinstance(value, list):
            raise src.error("se esperaba una lista", path)
        if args and args[-1] is not Ellipsis and len(args) != len(value):
            raise src.error(f"se esperaban {len(args)} valores", path)
        return tuple(_as_float(v, f"{path}[{i}]", src) for i, v in enumerate(value))
    raise src.error(f"tipo no soportado {hint}", path)


def _section(src: _Source, path: str, data) -> Dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise src.error("se esperaba una sección", path)
    return data


def _required_names(cls, skip=()):
    return [f.name for f in dataclasses.fields(cls)
            if f.name not in skip and f.default is dataclasses.MISSING
            and f.default_factory is dataclasses.MISSING]


def _missing_error(src: _Source, path: str, missing) -> ConfigError:
    """Un solo error con todas las claves obligatorias ausentes de la sección"""
    if len(missing) == 1:
        return src.error("clave obligatoria ausente", f"{path}.{missing[0]}")
    return src.error("claves obligatorias ausentes: " + ", ".join(missing), path)


def _build(cls, src: _Source, path: str, data, allowed=None, skip=()):
    """Construye la dataclass `cls` desde un mapeo, validando claves y tipos"""
    data = _section(src, path, data)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)} - set(skip)
    keys_ok = set(allowed) if allowed is not None else names
    for key in data:
        if key not in keys_ok:
            raise src.error("clave desconocida", f"{path}.{key}")
    kwargs = {}
    for key, value in data.items():
        if key in names:
            kwargs[key] = _convert(value, hints[key], f"{path}.{key}", src)
    missing = [name for name in _required_names(cls, skip) if name not in kwargs]
    if missing:
        raise _missing_error(src, path, missing)
    return kwargs


def _construct(cls, src, path, kwargs):
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        if exc.line is None and exc.key_path:
            raise src.error(exc.detail, exc.key_path) from exc
        raise
    except HarvesterError as exc:
        key = getattr(exc, "field", None)
        full = f"{path}.{key}" if key else path
        raise src.error(str(exc), full) from exc


def _domain(src, data, coarse, factor):
    data = _section(src, "domain", data)
    missing = [name for name in _required_names(DomainConfig) if name not in data]
    if missing:
        raise _missing_error(src, "domain", missing)
    res_kwargs = _build(Resolution, src, "domain.resolution", data["resolution"])
    resolution = _construct(Resolution, src, "domain.resolution", res_kwargs)
    if coarse:
        resolution = resolution.coarsened(factor)
        logger.info("Resolución gruesa (factor %d): %s", factor, resolution)
    rest = {k: v for k, v in data.items() if k != "resolution"}
    kwargs = _build(DomainConfig, src, "domain", rest, skip=("resolution",),
                    allowed={f.name for f in dataclasses.fields(DomainConfig)} - {"resolution"})
    kwargs["resolution"] = resolution
    return _construct(DomainConfig, src, "domain", kwargs)


def _materials(src, data):
    data = _section(src, "materials", data)
    for key in data:
        if key not in ("substrate", "piezo", "eps_vacuum"):
            raise src.error("clave desconocida", f"materials.{key}")
    defaults = MaterialSet()

    def elastic(name, default):
        block = _section(src, f"materials.{name}", data.get(name))
        allowed = _ELASTIC_KEYS | (_COUPLING_KEYS if name == "piezo" else set())
        for key in block:
            if key not in allowed:
                raise src.error("clave desconocida", f"materials.{name}.{key}")
        merged = dataclasses.asdict(default)
        merged.update({k: v for k, v in block.items() if k in _ELASTIC_KEYS})
        kwargs = _build(IsotropicElastic, src, f"materials.{name}", merged)
        return _construct(IsotropicElastic, src, f"materials.{name}", kwargs), block

    substrate, _ = elastic("substrate", defaults.substrate)
    piezo, piezo_block = elastic("piezo", defaults.piezo)
    coupling_data = {k: v for k, v in piezo_block.items() if k in _COUPLING_KEYS}
    if "eps_vacuum" in data:
        coupling_data["eps_vacuum"] = data["eps_vacuum"]
    kwargs = _build(PiezoCoupling, src, "materials.piezo", coupling_data)
    coupling = _construct(PiezoCoupling, src, "materials.piezo", kwargs)
    return substrate, piezo, coupling


def _objective(src, data):
    data = dict(_section(src, "objective", data))
    data.setdefault("sensitivity_mode", "substitute")
    hz = data.pop("target_frequencies_hz", None)
    if "target_frequencies" in data:
        raise src.error("use target_frequencies_hz (Hz)", "objective.target_frequencies")
    kwargs = _build(ObjectiveConfig, src, "objective", data, skip=("target_frequencies",))
    if hz is None:
        raise src.error("clave obligatoria ausente", "objective.target_frequencies_hz")
    targets = _convert(hz, Tuple[float, ...], "objective.target_frequencies_hz", src)
    kwargs["target_frequencies"] = tuple(2.0 * math.pi * f for f in targets)
    return _construct(ObjectiveConfig, src, "objective", kwargs)


def _excitation(src, data):
    data = dict(_section(src, "excitation", data))
    hz = data.pop("eval_frequency_hz", None)
    if "eval_frequency" in data:
        raise src.error("use eval_frequency_hz (Hz)", "excitation.eval_frequency")
    kwargs = _build(ExcitationConfig, src, "excitation", data, skip=("eval_frequency",))
    if hz is not None:
        kwargs["eval_frequency"] = 2.0 * math.pi * _as_float(hz, "excitation.eval_frequency_hz", src)
    return _construct(ExcitationConfig, src, "excitation", kwargs)


def _simple(cls, src, key, data):
    return _construct(cls, src, key, _build(cls, src, key, data))


def parse_config(path, overrides=None, coarse: Optional[bool] = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"no se pudo leer {path}: {exc.strerror}") from exc
    return parse_config_text(text, overrides, coarse, origin=path)


def parse_config_text(text, overrides=None, coarse: Optional[bool] = None, origin="<texto>") -> RunConfig:
    src = _load(text, origin)
    apply_overrides(src, overrides)
    data = src.data
    for key in data:
        if key not in _TOP_KEYS:
            raise src.error("clave desconocida", key)
    if "domain" not in data:
        raise _missing_error(src, "domain", _required_names(DomainConfig))

    use_coarse = _convert(data.get("coarse", False), bool, "coarse", src) if coarse is None else coarse
    factor = _convert(data.get("coarse_factor", 2), int, "coarse_factor", src)
    if factor < 1:
        raise src.error("debe ser >= 1", "coarse_factor")

    domain = _domain(src, data["domain"], use_coarse, factor)
    substrate, piezo, coupling = _materials(src, data.get("materials"))
    heaviside = _simple(HeavisideParams, src, "heaviside", data.get("heaviside"))
    materials = MaterialSet(substrate=substrate, piezo=piezo, coupling=coupling, heaviside=heaviside)

    top = {}
    scalars = {f.name: f for f in dataclasses.fields(RunConfig)}
    hints = typing.get_type_hints(RunConfig)
    for key in ("voltage_min", "lambda_rate", "max_iterations", "convergence_ratio",
                "convergence_window", "snapshot_every", "mode", "debug_xi", "summary_window", "name"):
        if key in data:
            top[key] = _convert(data[key], hints[scalars[key].name], key, src)
    top.setdefault("name", os.path.splitext(os.path.basename(origin))[0])

    kwargs = dict(
        domain=domain,
        materials=materials,
        objective=_objective(src, data.get("objective")),
        xi=_simple(XiConfig, src, "xi", data.get("xi")),
        excitation=_excitation(src, data.get("excitation")),
        update=_simple(UpdateParams, src, "update", data.get("update")),
        tau_pe=_simple(RegularizationTensor, src, "tau_pe", data.get("tau_pe")),
        tau_sb=_simple(RegularizationTensor, src, "tau_sb", data.get("tau_sb")),
        eigen=_simple(EigenConfig, src, "eigen", data.get("eigen")),
        **top,
    )
    config = _construct(RunConfig, src, "", kwargs)
    if config.excitation.eval_frequency is None and config.excitation.eval_target > config.objective.n_modes:
        raise src.error("eval_target mayor que n_modes", "excitation.eval_target")
    return config


def default_output_dir(config_path) -> str:
    base = os.environ.get(OUTPUT_ENV)
    stem = os.path.splitext(os.path.basename(config_path))[0]
    if base:
        return base
    return os.path.join("runs", stem)
