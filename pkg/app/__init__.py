import os
import sys
import logging

from flask import Flask
from dotenv import load_dotenv

from app.extensions import init_executor
from app.config.default import config

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: str = "INFO", log_file: str | None = None):
    """Configura el logging para que sea visible en la consola (y en archivo si se indica)."""
    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)

    logging.getLogger('werkzeug').setLevel(logging.WARNING)


def create_app(config_name: str | None = None):
    load_dotenv()

    if not config_name:
        config_name = os.getenv("FLASK_ENV", "development")
    if config_name not in config:
        config_name = "default"

    app = Flask(__name__)
    app.config.from_object(config[config_name])

    # IMPORTANTE: configurar logging ANTES de registrar los comandos
    setup_logging(app.config["LOG_LEVEL"], app.config.get("LOG_FILE"))

    app.logger.setLevel(app.config["LOG_LEVEL"])
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    app.logger.handlers.clear()
    app.logger.addHandler(console_handler)
    app.logger.propagate = False

    app.logger.info(f"[INFO] Aplicación inicializada. Configuración activa: '{config_name}'.")

    # ─────── Extensiones y blueprints ───────
    with app.app_context():
        init_extensions(app)
        register_blueprints(app)

    return app


# ────────────────────── Helpers ──────────────────────
def init_extensions(app):
    app.logger.debug("Inicializando extensiones…")
    init_executor(app)


def register_blueprints(app):
    from app.controllers.ControllersData import bp as data_bp
    from app.controllers.ControllersTraining import bp as training_bp
    from app.controllers.ControllersEvaluation import bp as evaluation_bp

    app.register_blueprint(data_bp)
    app.register_blueprint(training_bp)
    app.register_blueprint(evaluation_bp)
    app.logger.debug("Blueprints registrados.")
