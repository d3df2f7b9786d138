"""
Jerarquía de excepciones de la aplicación.
Cada familia lleva el código de salida que usa la línea de comandos.
"""

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class SegmentationError(Exception):
    """Base de todos los errores del dominio."""
    exit_code = EXIT_DATA


class ConfigurationError(SegmentationError):
    """Parámetros de ejecución inválidos o incompletos."""
    exit_code = EXIT_USAGE


class DataValidationError(SegmentationError, ValueError):
    """Datos de entrada que no cumplen los invariantes del dominio."""
    exit_code = EXIT_DATA


class ShapeError(DataValidationError):
    """Formas de tensores o volúmenes incompatibles."""


class ExtentError(DataValidationError):
    """Extensiones espaciales no divisibles por el factor requerido."""

    def __init__(self, message: str, padding: tuple[int, ...] | None = None):
        super().__init__(message)
        self.padding = padding


class VolumeFormatError(DataValidationError):
    """Archivo de volumen ilegible, truncado o con un tipo de dato no soportado."""


class NumericalError(SegmentationError, ArithmeticError):
    """Fallo numérico durante la optimización o la estadística."""
    exit_code = EXIT_NUMERICAL


class NonFiniteGradientError(NumericalError):
    def __init__(self, parameter: str):
        super().__init__(f"Gradiente no finito en el parámetro '{parameter}'.")
        self.parameter = parameter


class DivergenceError(NumericalError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"La pérdida divergió en la época {epoch} (valor: {loss}).")
        self.epoch = epoch
        self.loss = loss
