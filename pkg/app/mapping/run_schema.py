"""
Configuración completa de una ejecución: combina los valores por defecto, el
archivo TOML opcional (--config) y las opciones de la línea de comandos.
"""

import json
import os
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.errors import ConfigurationError
from app.mapping.analysis_schema import AnalysisConfig
from app.mapping.network_schema import NetworkConfig, TrainConfig
from app.mapping.phantom_schema import PhantomParams, SplitConfig

RUN_CONFIG_FILENAME = "run_config.json"


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    network: NetworkConfig = Field(default_factory=NetworkConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    phantom: PhantomParams = Field(default_factory=PhantomParams)
    split: SplitConfig = Field(default_factory=SplitConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    command: str = ""
    paths: dict[str, str] = Field(default_factory=dict)


def _merge(base: dict, overrides: dict) -> dict:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(config_path: str | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """
    Resuelve la configuración de una ejecución.

    Las claves con valor None en `overrides` se ignoran, de modo que las
    opciones no indicadas en la línea de comandos no pisan el archivo.
    """
    data: dict = {}
    if config_path:
        if not os.path.exists(config_path):
            raise ConfigurationError(f"No existe el archivo de configuración '{config_path}'.")
        try:
            with open(config_path, "rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"Archivo de configuración inválido '{config_path}': {e}") from e
    data = _merge(data, overrides or {})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Configuración inválida:\n{e}") from e


def write_run_config(config: RunConfig, out_dir: str) -> str:
    """Copia la configuración resuelta en el directorio de salida de la ejecución."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, RUN_CONFIG_FILENAME)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.model_dump(mode="json"), f, indent=4, ensure_ascii=False)
    return path
