# app/repositories/CheckpointRepository.py

import json
import os

import numpy as np
from flask import current_app

from app.engine.functional import BatchNormState
from app.errors import ConfigurationError, VolumeFormatError
from app.mapping.network_schema import NetworkConfig
from app.models.Network import Model, NetworkPlan
from app.repositories.RepositoryBase import Create, Read

FORMAT_VERSION = 1
VERSION_KEY = "__format_version__"
CONFIG_KEY = "__config__"
STATE_PREFIX = "bn_state::"


class CheckpointRepository(Create, Read):
    """
    Checkpoint autodescriptivo (.npz): versión de formato, configuración en JSON,
    parámetros nombrados en float64 little-endian y estadísticas de batch-norm.
    """

    def save(self, model: Model, path: str) -> str:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        arrays = {
            VERSION_KEY: np.array(FORMAT_VERSION),
            CONFIG_KEY: np.array(json.dumps(model.config.model_dump(mode="json"))),
        }
        for name, tensor in model.parameters.items():
            arrays[name] = tensor.data.astype("<f8")
        for name, state in model.states.items():
            arrays[f"{STATE_PREFIX}{name}::running_mean"] = state.running_mean.astype("<f8")
            arrays[f"{STATE_PREFIX}{name}::running_var"] = state.running_var.astype("<f8")
            arrays[f"{STATE_PREFIX}{name}::tracked_batches"] = np.array(state.tracked_batches)
        with open(path, "wb") as f:
            np.savez(f, **arrays)
        current_app.logger.info(f"[INFO] Checkpoint guardado en '{path}' ({len(model.parameters)} tensores).")
        return path

    def load(self, path: str) -> Model:
        if not os.path.exists(path):
            raise FileNotFoundError(2, "No existe el checkpoint", path)
        try:
            with np.load(path, allow_pickle=False) as archive:
                contents = {key: archive[key] for key in archive.files}
        except (ValueError, OSError, EOFError) as e:
            raise VolumeFormatError(f"'{path}': checkpoint ilegible ({e}).") from e

        if VERSION_KEY not in contents or CONFIG_KEY not in contents:
            raise VolumeFormatError(f"'{path}': faltan la versión de formato o la configuración.")
        version = int(contents.pop(VERSION_KEY))
        if version != FORMAT_VERSION:
            raise VolumeFormatError(f"'{path}': versión de formato {version} no soportada (se espera {FORMAT_VERSION}).")
        try:
            config = NetworkConfig.model_validate(json.loads(str(contents.pop(CONFIG_KEY))))
        except ValueError as e:
            raise ConfigurationError(f"'{path}': configuración del checkpoint inválida: {e}") from e

        model = Model.initialize(config)
        plan: NetworkPlan = model.plan
        expected = {spec.name: spec.shape for spec in plan.parameter_specs()}
        stored = {k: v for k, v in contents.items() if not k.startswith(STATE_PREFIX)}
        missing = sorted(set(expected) - set(stored))
        unexpected = sorted(set(stored) - set(expected))
        if missing or unexpected:
            raise VolumeFormatError(
                f"'{path}': parámetros que no coinciden con la arquitectura (faltan {missing[:5]}, sobran {unexpected[:5]})."
            )
        for name, shape in expected.items():
            if tuple(stored[name].shape) != tuple(shape):
                raise VolumeFormatError(f"'{path}': '{name}' tiene forma {stored[name].shape}, se esperaba {shape}.")
        model.replace_parameters({name: stored[name].astype(np.float64) for name in expected})

        for name in model.states:
            key = f"{STATE_PREFIX}{name}::"
            try:
                model.states[name] = BatchNormState(
                    contents[key + "running_mean"].astype(np.float64),
                    contents[key + "running_var"].astype(np.float64),
                    int(contents[key + "tracked_batches"]),
                )
            except KeyError as e:
                raise VolumeFormatError(f"'{path}': faltan las estadísticas de batch-norm de '{name}'.") from e

        current_app.logger.info(f"[INFO] Checkpoint cargado desde '{path}' (filter_rate={config.filter_rate}).")
        return model
