"""
Módulo para configurar y mantener las instancias compartidas por toda la aplicación.
Por ahora, el pool de hilos usado para entrenar miembros del ensamble y
segmentar volúmenes en paralelo.
"""

from concurrent.futures import ThreadPoolExecutor

from flask import current_app

executor = None
_executor_workers = None


def init_executor(app):
    """
    Inicializa el pool de hilos con NUM_WORKERS trabajadores.
    Si ya existe uno con el mismo tamaño, lo reutiliza.
    """
    global executor, _executor_workers

    workers = max(1, int(app.config.get("NUM_WORKERS", 1)))
    if executor is not None and _executor_workers == workers:
        return executor

    if executor is not None:
        executor.shutdown(wait=True)

    app.logger.debug(f"[DEBUG] Creando pool de hilos con {workers} trabajador(es).")
    executor = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="worker")
    _executor_workers = workers
    return executor


def get_executor() -> ThreadPoolExecutor:
    """Obtiene el pool inicializado; lo crea a partir de la app activa si hace falta."""
    global executor
    if executor is None:
        current_app.logger.warning("Se pidió el pool de hilos antes de inicializarlo; se crea ahora.")
        init_executor(current_app)
    return executor


def shutdown_executor():
    global executor, _executor_workers
    if executor is not None:
        executor.shutdown(wait=True)
    executor = None
    _executor_workers = None
