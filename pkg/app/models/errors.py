"""Excepciones del optimizador de cosechadores piezoeléctricos."""


class HarvesterError(Exception):
    """Error base de la aplicación"""


class ConfigError(HarvesterError):
    """Error de configuración con ruta de clave y línea"""

    def __init__(self, message, key_path=None, line=None):
        self.detail = message
        self.key_path = key_path
        self.line = line
        where = ""
        if key_path:
            where += f" [{key_path}]"
        if line is not None:
            where += f" (línea {line})"
        super().__init__(f"{message}{where}")


class MeshError(HarvesterError):
    """Malla no conforme o geometría inválida"""

    def __init__(self, message, interface=None):
        self.interface = interface
        super().__init__(message if interface is None else f"{interface}: {message}")


class MaterialError(HarvesterError):
    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message)


class LevelSetError(HarvesterError):
    pass


class AssemblyError(HarvesterError):
    def __init__(self, message, element=None):
        self.element = element
        super().__init__(message)


class EigenSolverError(HarvesterError):
    """Fallo del solver de autovalores, con reporte de residuos"""

    def __init__(self, message, residuals=None):
        self.residuals = residuals
        super().__init__(message)


class FictitiousFieldError(HarvesterError):
    pass


class ResponseError(HarvesterError):
    pass


class ObjectiveError(HarvesterError):
    def __init__(self, message, mode=None):
        self.mode = mode
        super().__init__(message if mode is None else f"modo {mode + 1}: {message}")


class OptimizationAborted(HarvesterError):
    """La corrida se detuvo; guarda la iteración y la etapa"""

    def __init__(self, iteration, stage, cause):
        self.iteration = iteration
        self.stage = stage
        super().__init__(f"iteración {iteration}, etapa '{stage}': {cause}")
