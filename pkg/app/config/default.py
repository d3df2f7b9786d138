"""
Módulo de configuración que define diferentes clases para los entornos
de desarrollo, pruebas y producción.
"""

import os
from dotenv import load_dotenv

# Cargar variables de entorno desde .env
load_dotenv()


class Config:
    """
    Clase base de configuración con configuraciones comunes para todos los entornos.
    """
    # --- Configuración General de Flask ---
    DEBUG = False
    TESTING = False

    # --- Logging ---
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FILE = os.getenv('LOG_FILE', 'app.log')

    # --- Ejecuciones ---
    RUNS_FOLDER = os.getenv('RUNS_FOLDER', os.path.join(os.getcwd(), 'runs'))
    NUM_WORKERS = int(os.getenv('NUM_WORKERS', '1'))
    DEFAULT_SEED = int(os.getenv('DEFAULT_SEED', '0'))


class DevelopmentConfig(Config):
    """Configuración para el entorno de desarrollo."""
    DEBUG = True
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'DEBUG')


class TestingConfig(Config):
    """Configuración para el entorno de pruebas."""
    TESTING = True
    LOG_LEVEL = 'DEBUG'
    # Sin archivo de log: las pruebas no deben dejar rastros fuera de tmp_path
    LOG_FILE = None
    NUM_WORKERS = 2


class ProductionConfig(Config):
    """Configuración para el entorno de producción."""
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    NUM_WORKERS = int(os.getenv('NUM_WORKERS', str(os.cpu_count() or 1)))


# Diccionario para seleccionar la configuración según el entorno
config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': DevelopmentConfig
}
