# app/services/NetworkService.py

import numpy as np
from flask import current_app

from app.engine import Tensor, no_grad
from app.engine import functional as F
from app.errors import ConfigurationError, ShapeError
from app.extensions import get_executor
from app.mapping.network_schema import NetworkConfig
from app.models.Network import OUTPUT_STRIDE, Model, NetworkPlan, SegmentationOutput
from app.models.Volume import LabelVolume, VolumeGrid
from app.services.DataService import DataService


class NetworkService:
    """
    Construcción e inferencia de la red: encoder, ASPP, decoder con atención,
    decodificación argmax y voto del ensamble.
    """

    def __init__(self):
        self.logger = current_app.logger

    # ─────────────────────── Construcción ───────────────────────

    def build_model(self, config: NetworkConfig) -> Model:
        model = Model.initialize(config)
        self.logger.info(
            f"[NET] Modelo construido ({config.architecture}): filter_rate={config.filter_rate}, "
            f"canales={config.encoder_stage_channels}, parámetros={model.parameter_count():,}, semilla={config.seed}."
        )
        return model

    @staticmethod
    def count_parameters(config: NetworkConfig) -> int:
        """Parámetros entrenables; no reserva memoria ni incluye estadísticas de batch-norm."""
        return NetworkPlan(config).parameter_count()

    # ─────────────────────── Pasada hacia delante ───────────────────────

    @staticmethod
    def _check_input(volume: Tensor):
        if volume.ndim != 5 or volume.shape[1] != 1:
            raise ShapeError(f"La red espera un tensor (N, 1, D, H, W), forma recibida {volume.shape}.")
        DataService.check_divisible(volume.shape[2:], OUTPUT_STRIDE)

    def encoder_forward(self, model: Model, volume: Tensor, training: bool = False):
        """Devuelve (características a 1/16, [skips a 1/8, 1/4, 1/2])."""
        self._check_input(volume)
        x = model.plan.stem.forward(model, volume, training)
        outputs = []
        for stage in model.plan.encoder:
            x = stage.forward(model, x, training)
            outputs.append(x)
        return outputs[3], [outputs[2], outputs[1], outputs[0]]

    def aspp_forward(self, model: Model, deep_features: Tensor, training: bool = False) -> Tensor:
        return model.plan.aspp.forward(model, deep_features, training)

    def attention_block(self, model: Model, features: Tensor, with_aux: bool, stage: int,
                        training: bool = False):
        """Aplica el bloque de atención de la etapa `stage` del decoder (0, 1 o 2)."""
        decoder = model.plan.decoder
        if not 0 <= stage < len(decoder):
            raise ConfigurationError(f"El decoder tiene {len(decoder)} etapa(s), se pidió la etapa {stage}.")
        block = decoder[stage].attention
        if block is None:
            raise ConfigurationError(f"La etapa {stage} del decoder no tiene bloque de atención.")
        if with_aux and block.aux is None:
            raise ConfigurationError(f"La etapa {stage} del decoder no tiene cabeza auxiliar.")
        attended, attention_map, aux_logits = block.forward(model, features, training)
        return attended, attention_map, (aux_logits if with_aux else None)

    def forward(self, model: Model, volume: Tensor, training: bool = False) -> SegmentationOutput:
        deep, skips = self.encoder_forward(model, volume, training)
        h = self.aspp_forward(model, deep, training)
        aux_probs, attention_maps = [], []
        for stage in model.plan.decoder:
            h, attention_map, aux_logits = stage.forward(model, h, skips[stage.skip_index], training)
            if attention_map is not None:
                attention_maps.append(attention_map)
            if aux_logits is not None:
                aux_probs.append(F.softmax_channel(aux_logits))
        h = F.trilinear_upsample(h, model.plan.final_factor)
        logits = model.plan.head.forward(model, h, training)
        return SegmentationOutput(F.softmax_channel(logits), aux_probs, attention_maps)

    # ─────────────────────── Inferencia ───────────────────────

    def predict_probabilities(self, model: Model, grid: VolumeGrid) -> np.ndarray:
        """Probabilidades (3, D, H, W) del volumen estandarizado, sin grafo."""
        DataService.check_divisible(grid.extents, OUTPUT_STRIDE)
        standardized = DataService.standardize(grid)
        volume = Tensor(standardized.values[np.newaxis, np.newaxis])
        with no_grad():
            output = self.forward(model, volume, training=False)
        return output.main_probs.data[0]

    def segment(self, model: Model, grid: VolumeGrid) -> LabelVolume:
        probs = self.predict_probabilities(model, grid)
        # np.argmax devuelve el primer máximo: empates hacia la clase menor
        return LabelVolume(np.argmax(probs, axis=0), grid.spacing, grid.affine)

    def ensemble_predict(self, models: list[Model], grid: VolumeGrid, parallel: bool = False) -> LabelVolume:
        """
        Voto mayoritario por vóxel. Si ninguna clase obtiene más votos que las
        demás, decide el argmax de la softmax media.
        """
        if len(models) < 2:
            raise ConfigurationError(f"El ensamble necesita al menos 2 modelos, se recibieron {len(models)}.")
        classes = {m.config.num_classes for m in models}
        if len(classes) != 1:
            raise ConfigurationError(f"Los modelos del ensamble no comparten num_classes: {sorted(classes)}.")

        if parallel:
            app = current_app._get_current_object()

            def task(model):
                with app.app_context():
                    return self.predict_probabilities(model, grid)

            probs = list(get_executor().map(task, models))
        else:
            probs = [self.predict_probabilities(model, grid) for model in models]

        stacked = np.stack(probs)
        labels = ensemble_vote(np.argmax(stacked, axis=1), stacked)
        return LabelVolume(labels, grid.spacing, grid.affine)


def ensemble_vote(votes: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """
    votes: (M, D, H, W) etiquetas por modelo; probs: (M, C, D, H, W).
    Independiente del orden de los modelos.
    """
    num_classes = probs.shape[1]
    counts = np.stack([(votes == c).sum(axis=0) for c in range(num_classes)])
    top = counts.max(axis=0)
    unique_winner = (counts == top).sum(axis=0) == 1
    majority = np.argmax(counts, axis=0)
    # suma ordenada: el resultado no depende del orden de los modelos
    mean_probs = np.sort(probs, axis=0).sum(axis=0) / probs.shape[0]
    fallback = np.argmax(mean_probs, axis=0)
    return np.where(unique_winner, majority, fallback).astype(np.uint8)
