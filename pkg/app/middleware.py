# app/middleware.py
import sys
import traceback
from functools import wraps

import click
from flask import current_app
from pydantic import ValidationError

from app.errors import EXIT_DATA, EXIT_NUMERICAL, EXIT_USAGE, SegmentationError


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, SegmentationError):
        return error.exit_code
    if isinstance(error, ValidationError):
        return EXIT_USAGE
    if isinstance(error, (OSError, ValueError)):
        return EXIT_DATA
    if isinstance(error, ArithmeticError):
        return EXIT_NUMERICAL
    return EXIT_DATA


def handle_cli_errors(f):
    """
    Decorador que envuelve un comando de la CLI: los errores del dominio se
    registran y se traducen al código de salida correspondiente
    (1 uso/configuración, 2 datos, 3 fallo numérico).
    """
    @wraps(f)
    def decorated(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except click.UsageError as e:
            current_app.logger.error(f"[ERROR] Uso incorrecto: {e.format_message()}")
            sys.exit(EXIT_USAGE)
        except click.ClickException:
            raise
        except SegmentationError as e:
            current_app.logger.error(f"[ERROR] {type(e).__name__}: {e}")
            sys.exit(e.exit_code)
        except ValidationError as e:
            current_app.logger.error(f"[ERROR] Configuración inválida:\n{e}")
            sys.exit(EXIT_USAGE)
        except OSError as e:
            current_app.logger.error(f"[ERROR] Fallo de E/S en '{getattr(e, 'filename', None) or '?'}': {e}")
            sys.exit(EXIT_DATA)
        except Exception as e:
            error_details = traceback.format_exc()
            current_app.logger.error(
                f"[ERROR] Excepción no controlada en el comando '{f.__name__}'.\n"
                f"  [Causa] {str(e)}\n"
                f"  [TRACEBACK]\n{error_details}"
            )
            sys.exit(exit_code_for(e))

    return decorated
